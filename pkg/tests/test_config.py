import dataclasses
import math

import pytest

from isac_ssf.harness.config import (
    ConfigError,
    SimConfig,
    config_from_dict,
    default_config,
    default_config_path,
    load_config,
    validate,
)


def test_shipped_defaults_match_dataclass_defaults(cfg):
    assert cfg == SimConfig()


def test_table_parameters(cfg):
    assert cfg.arrays.bs_rows * cfg.arrays.bs_cols == 32
    assert cfg.arrays.ue_rows * cfg.arrays.ue_cols == 16
    assert cfg.arrays.spacing == 0.5
    assert cfg.scene.n_beam == 20 and cfg.scene.sweep_deg == (45.0, 135.0)
    o = cfg.ofdm
    assert (o.f_c, o.w_c, o.n_sub, o.w_sub, o.n_sym, o.t_sym) == (24e9, 15e3, 4, 150e3, 100, 100e-6)
    assert (cfg.protocol.p_min_dbm, cfg.protocol.p_max_dbm) == (-20.0, -3.0)
    assert cfg.channel.noise_figure_db == 6.0
    assert cfg.scene.duration == 10.0 and cfg.scene.targets[0].speed == 3.0 and len(cfg.scene.targets) == 1
    assert (cfg.detector.n_del, cfg.detector.n_dop) == (10, 10)
    assert cfg.n_scans == 1000


def test_budget_grid(cfg):
    b = cfg.budgets
    assert len(b) == 8 and b[0] == -20.0 and b[-1] == -3.0
    assert all(y > x for x, y in zip(b, b[1:]))


def test_shipped_file_mentions_every_table_symbol():
    text = default_config_path().read_text()
    for symbol in ("N_BS", "N_UE", "f_c", "W_c", "N_sub", "W_sub", "N_sym", "T_sym", "T_S", "v_tg", "M_tg",
                   "N_del", "N_dop", "NF", "P_min", "P_max"):
        assert symbol in text, symbol


def test_unknown_key_names_field():
    with pytest.raises(ConfigError) as err:
        config_from_dict({"protocol": {"p_mix_dbm": 1.0}})
    assert err.value.field == "protocol.p_mix_dbm"
    with pytest.raises(ConfigError) as err:
        config_from_dict({"radar": {}})
    assert err.value.field == "radar"


@pytest.mark.parametrize("section,key,value,field", [
    ("protocol", "p_min_dbm", 0.0, "protocol.p_min_dbm"),
    ("protocol", "ssf_thresholds", (3.0, 2.0, 8.0), "protocol.ssf_thresholds"),
    ("scene", "duration", 10.005, "scene.duration"),
    ("scene", "n_beam", 1, "scene.n_beam"),
    ("optimizer", "tau_decay", 1.5, "optimizer.tau_decay"),
    ("experiment", "realloc_reference", "both", "experiment.realloc_reference"),
])
def test_validation_names_offending_field(cfg, section, key, value, field):
    bad = cfg.replace(**{section: dataclasses.replace(getattr(cfg, section), **{key: value})})
    with pytest.raises(ConfigError) as err:
        validate(bad)
    assert err.value.field == field


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.toml")
    assert err.value.field == "--config"
    broken = tmp_path / "broken.toml"
    broken.write_text("[protocol\n")
    with pytest.raises(ConfigError):
        load_config(broken)


def test_partial_file_overrides_defaults(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[protocol]\nmax_backoff_db = 'inf'\ndelta_up = 3.0\n[experiment]\nseeds = [7]\n")
    c = load_config(path)
    assert c.protocol.delta_up == 3.0 and math.isinf(c.protocol.max_backoff_db)
    assert c.experiment.seeds == (7,)


def test_fingerprint_tracks_content(cfg):
    assert cfg.fingerprint() == default_config().fingerprint()
    other = cfg.replace(channel=dataclasses.replace(cfg.channel, link_gain_db=70.0))
    assert other.fingerprint() != cfg.fingerprint()
