import csv

import numpy as np
import pytest

from isac_ssf.harness import experiments
from isac_ssf.harness.config import ConfigError
from isac_ssf.harness.experiments import (
    CellKey,
    calibration_samples,
    compare_thresholding,
    evaluate_pdet,
    map_calibration,
    scenario_metrics_for,
    sweep_power,
    worker_count,
)
from isac_ssf.harness.output import METRICS_HEADER, write_metrics_csv
from isac_ssf.harness.runner import run_scenario


@pytest.fixture(scope="module")
def sweep(cfg):
    return sweep_power(cfg, workers=1)


def test_sweep_is_full_cross_product(sweep, cfg, tmp_path):
    assert len(sweep.cells) == 24
    assert sum(len(c.metrics) for c in sweep.cells.values()) == 8 * 3 * 5
    assert not sweep.failures()
    path = write_metrics_csv(tmp_path / "m.csv", sweep)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == METRICS_HEADER and len(rows) == 25


def test_aggregates_equal_offline_recomputation(sweep, cfg):
    b = cfg.budgets[5]
    row = sweep.row("earq", b)
    ms = [scenario_metrics_for(cfg, run_scenario(cfg, "earq", seed=s, budget_dbm=b)) for s in cfg.experiment.seeds]
    assert row.p_det == pytest.approx(np.mean([m.p_det for m in ms]), abs=1e-15)
    assert row.realloc_ratio == pytest.approx(np.mean([m.realloc_ratio for m in ms]), abs=1e-15)
    assert row.seed_count == 5
    assert row.p_det_min <= row.p_det <= row.p_det_max


def test_consumed_power_below_budget(sweep):
    for row in sweep.rows():
        assert row.p_consumed_dbm <= row.p_budget_dbm + 1e-9


def test_ssf_pdet_trend_non_decreasing(sweep, cfg):
    budgets = np.array(cfg.budgets)
    pdet = np.array(sweep.series("ssf", "fixed", "p_det"))
    slope = np.polyfit(budgets, pdet, 1)[0]
    spread = max(r.p_det_max - r.p_det_min for r in sweep.rows() if r.protocol == "ssf")
    # a decrease across the whole grid must stay inside the seed spread
    assert slope * (budgets[-1] - budgets[0]) >= -max(spread, 0.01)


def test_failed_cell_does_not_abort_sweep(cfg, monkeypatch):
    real = experiments.run_scenario

    def flaky(c, protocol, thresholds=None, seed=1, budget_dbm=None):
        if protocol == "earq" and budget_dbm == cfg.budgets[0]:
            raise ArithmeticError("injected")
        return real(c, protocol, thresholds, seed=seed, budget_dbm=budget_dbm)

    monkeypatch.setattr(experiments, "run_scenario", flaky)
    result = sweep_power(cfg, ("ssf", "earq"), budgets=cfg.budgets[:2], seeds=(1,), workers=1)
    failed = result.failures()
    assert [c.key for c in failed] == [CellKey("earq", "fixed", cfg.budgets[0])]
    assert "injected" in failed[0].error
    assert result.row("earq", cfg.budgets[0]).seed_count == 0
    assert result.row("earq", cfg.budgets[1]).seed_count == 1


def test_process_pool_matches_serial(cfg):
    kwargs = dict(protocols=("ssf", "openloop"), budgets=cfg.budgets[-2:], seeds=(1, 2))
    assert sweep_power(cfg, workers=2, **kwargs).rows() == sweep_power(cfg, workers=1, **kwargs).rows()


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("ISAC_SSF_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("ISAC_SSF_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count()
    monkeypatch.delenv("ISAC_SSF_THREADS")
    assert worker_count() >= 1


def test_evaluate_pdet_deterministic(cfg):
    th = cfg.thresholds_for("ssf")
    a = evaluate_pdet(cfg, "ssf", th, (1, 2), -3.0)
    assert a == evaluate_pdet(cfg, "ssf", th, (1, 2), -3.0)
    assert 0.0 <= a <= 1.0


def test_calibration_classes_are_ordered(cfg):
    labels, values = calibration_samples(cfg, (1,), -10.0)
    means = [values[labels == k].mean() for k in range(4)]
    assert all(a < b for a, b in zip(means, means[1:]))
    th, fit, res = map_calibration(cfg, "earq", (1,), -10.0)
    assert fit.n_classes == 3 and len(res.values) == 2 and th.eta0 < th.eta1


def test_compare_schema_and_dominance(cfg):
    budget = cfg.budgets[2]
    result = compare_thresholding(cfg, seeds=(1, 2), budgets=(budget,), workers=1)
    keys = {(k.protocol, k.method) for k in result.cells}
    assert keys == {("ssf", "map"), ("ssf", "ipt"), ("earq", "map"), ("earq", "ipt")}
    for p in ("ssf", "earq"):
        assert result.row(p, budget, "ipt").p_det >= result.row(p, budget, "map").p_det
        assert (p, budget) in result.optimizer_traces
