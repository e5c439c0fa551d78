import numpy as np
import pytest

from irs_forge.channel import SystemConfig, sample_realization
from irs_forge.io import (
    PATTERN_HEADER,
    dump_realization,
    format_result_row,
    load_realization,
    parse_overrides,
    read_config,
    read_pattern_csv,
    results_header,
    write_config,
    write_pattern_csv,
)
from irs_forge.optimizer import OptimizationResult


def test_pattern_round_trip(tmp_path):
    theta = np.linspace(0, 90, 7)
    g = np.exp(1j * theta / 10) * (theta + 1)
    write_pattern_csv(tmp_path / "p.csv", theta, 45.0, g)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == PATTERN_HEADER
    data = read_pattern_csv(tmp_path / "p.csv")
    assert np.allclose(data[:, 0], theta) and np.all(data[:, 1] == 45)
    assert np.allclose(data[:, 2], 20 * np.log10(np.abs(g)), atol=1e-9)
    assert np.allclose(data[:, 3], np.angle(g), atol=1e-9)
    (tmp_path / "q.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_pattern_csv(tmp_path / "q.csv")


def test_result_rows():
    assert results_header(2) == "realization_id,scheme,p_dbm,iterations,sinr_user_1,sinr_user_2"
    res = OptimizationResult(10.0, np.zeros(1, int), np.zeros((1, 2)), sinr=np.array([10.0, 100.0]), iterations=3)
    assert format_result_row(4, "ao", res, 2) == "4,ao,10.000000,3,10.000000,20.000000"
    bad = OptimizationResult(np.inf, np.zeros(0, int), np.zeros((0, 2)), status="infeasible")
    assert format_result_row(0, "x", bad, 2) == "0,x,inf,0,nan,nan"


def test_config_round_trip(tmp_path):
    cfg = SystemConfig(n_tiles=4, rho_t=1234.5, shadow_d_db=-33.3, preselection="threshold", ao_tol=1e-9)
    write_config(cfg, tmp_path / "c.ini", {"sweep.tiles": "0, 4"})
    back, extra = read_config(tmp_path / "c.ini")
    assert back == cfg
    assert extra == {"sweep.tiles": "0, 4"}


def test_shipped_config_is_default():
    from pathlib import Path
    cfg, extra = read_config(Path(__file__).parents[1] / "configs" / "default.ini")
    assert cfg == SystemConfig()
    assert "sweep.tiles" in extra


def test_overrides():
    assert parse_overrides(["system.n_tiles=4", "rho_t = 100"]) == {"n_tiles": 4, "rho_t": 100.0}
    with pytest.raises(KeyError):
        parse_overrides(["bogus=1"])
    with pytest.raises(ValueError):
        parse_overrides(["n_tiles"])
    cfg, _ = read_config(None, ["n_users=1", "gamma_db=5"])
    assert cfg.n_users == 1 and cfg.gamma_db == 5.0


def test_unknown_config_key(tmp_path):
    (tmp_path / "c.ini").write_text("[system]\nantennas = 3\n")
    with pytest.raises(KeyError):
        read_config(tmp_path / "c.ini")


def test_realization_round_trip(tmp_path):
    cfg = SystemConfig(bs_rows=2, bs_cols=2, n_tiles=2, tile_size=2.0, codebook_x=2, codebook_y=2, codebook_0=2)
    real = sample_realization(cfg, 77)
    dump_realization(real, tmp_path / "r.txt")
    back = load_realization(tmp_path / "r.txt")
    assert np.array_equal(back.direct, real.direct)
    assert np.array_equal(back.tiles, real.tiles)
    assert np.array_equal(back.gamma, real.gamma) and np.array_equal(back.mode_ids, real.mode_ids)
    assert back.sigma2 == real.sigma2 and back.seed == 77 and back.config_hash == real.config_hash
    assert back.config == cfg and back.scatterers == real.scatterers
    # writing the loaded copy reproduces the file byte for byte
    dump_realization(back, tmp_path / "r2.txt")
    assert (tmp_path / "r.txt").read_bytes() == (tmp_path / "r2.txt").read_bytes()
