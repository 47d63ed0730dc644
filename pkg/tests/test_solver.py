import math

import numpy as np
import pytest

from maketake import (
    ModelParams,
    SolverError,
    solve_log_ratios,
    solve_matrix_exp,
    solve_mc,
    solve_series,
    solve_series_grid,
    validate,
    value_v,
)
from maketake import _kernels
from maketake.solver import regime_constants, write_grid_csv, write_log_ratio_csv

REGIMES = ("exchange", "benchmark", "nash", "first_best")


def test_terminal_value_is_one(grid_ex10):
    assert np.all(grid_ex10.log_u[-1] == 0.0)


def test_series_terminal_is_exactly_one(vp10):
    assert solve_series(vp10, "exchange", vp10.T, 3) == 0.0


def test_series_rejects_bad_tol(vp10):
    with pytest.raises(ValueError, match="tol"):
        solve_series(vp10, "exchange", 0.0, 0, tol=0.0)


def test_matrix_exp_vs_series_small_lattice(vp10):
    times = np.linspace(0.0, vp10.T, 11)
    grid = solve_matrix_exp(vp10, "exchange", times)
    series = solve_series_grid(vp10, "exchange", times)
    nz = series != 0
    rel = np.abs(grid.log_u - series)[nz] / np.abs(series)[nz]
    assert rel.max() <= 1e-10


def test_nash_three_exchanges_vs_series():
    vp = validate(ModelParams(q_bar=10, n_exchanges=3))
    times = np.linspace(0.0, vp.T, 7)
    grid = solve_matrix_exp(vp, "nash", times)
    series = solve_series_grid(vp, "nash", times)
    nz = series != 0
    rel = np.abs(grid.log_u - series)[nz] / np.abs(series)[nz]
    assert rel.max() <= 1e-10


def test_symmetry_in_inventory(grid_ex10):
    lu = grid_ex10.log_u
    scale = np.maximum(np.abs(lu), 1.0)
    assert (np.abs(lu - lu[:, ::-1]) / scale).max() <= 1e-10


def test_off_grid_evaluation_is_exact(vp10, grid_ex10):
    t = 123.4567  # not a lattice node
    row = grid_ex10.log_u_at(t)
    series = solve_series_grid(vp10, "exchange", [t])[0]
    assert np.abs(row - series).max() <= 1e-10 * np.abs(series).max()


@pytest.mark.parametrize("regime", REGIMES)
def test_probabilistic_bounds_every_regime(vp10, regime):
    grid = solve_matrix_exp(vp10, regime, np.linspace(0, vp10.T, 41))
    C, Cp = regime_constants(regime, vp10)
    tau = (vp10.T - grid.times)[:, None]
    assert np.all(grid.log_u >= -C * vp10.q_bar**2 * tau - 1e-9)
    assert np.all(grid.log_u <= 2 * Cp * tau + 1e-9)


def test_full_scale_log_storage_stays_finite(grids_std, vp_std):
    grid = grids_std["exchange"]
    k = vp_std.constants
    edge = grid.log_u[0, [0, -1]]
    assert np.all(np.isfinite(edge))
    assert np.all(edge >= -k.c1 * vp_std.q_bar**2 * vp_std.T)
    assert np.all(edge <= 2 * k.c1_prime * vp_std.T)
    assert np.isfinite(grid.log_u).all()


def test_log_storage_survives_out_of_double_range():
    # the eight-exchange equilibrium drives u far beyond double range;
    # the log representation stays finite and inside its bounds
    vp = validate(ModelParams(n_exchanges=8))
    grid = solve_matrix_exp(vp, "nash", np.linspace(0.0, vp.T, 5))
    assert np.isfinite(grid.log_u).all()
    assert grid.log_u[0].max() > 7.0e5  # e^{log u} would overflow hard
    with np.errstate(over="ignore"):
        assert np.exp(grid.log_u[0]).max() == np.inf


def test_mc_matches_series_within_three_se(vp10):
    vp = validate(ModelParams(q_bar=5, T=10.0))
    est, se = solve_mc(vp, "exchange", 0.0, 0, 50_000, seed=31)
    truth = math.exp(solve_series(vp, "exchange", 0.0, 0))
    assert abs(est - truth) <= 3.0 * se


def test_mc_degenerate_no_potential_no_barrier():
    # C = 0 with an unreachable barrier: the weight is deterministic
    tau, cp = 10.0, 0.9
    rng = np.random.default_rng(5)
    exps = rng.exponential(size=(500, 200))
    us = rng.random(size=(500, 200))
    log_w = np.empty(500)
    status = _kernels.mc_weight_paths(0.0, cp, 0, 10**6, tau, exps, us, log_w)
    assert status == 0
    assert np.allclose(np.exp(log_w), math.exp(2 * cp * tau), rtol=1e-12)


def test_mc_rejects_small_samples(vp10):
    with pytest.raises(ValueError, match="n_paths"):
        solve_mc(vp10, "exchange", 0.0, 0, 50, seed=1)


def test_log_ratio_terminal_and_antisymmetry(vp10):
    lr = solve_log_ratios(vp10, "exchange", dt=0.1)
    assert np.all(lr.v_plus[-1] == 0.0)
    assert np.abs(lr.v_plus + lr.v_plus[:, ::-1]).max() <= 1e-10


def test_log_ratio_matches_series(vp10):
    lr = solve_log_ratios(vp10, "exchange", dt=0.1)
    lu0 = solve_series_grid(vp10, "exchange", [0.0])[0]
    assert np.abs(lr.v_plus[0] - np.diff(lu0)).max() <= 1e-3


def test_log_ratio_benchmark_regime(vp10):
    lr = solve_log_ratios(vp10, "benchmark", dt=0.1)
    lu0 = solve_series_grid(vp10, "benchmark", [0.0])[0]
    assert np.abs(lr.v_plus[0] - np.diff(lu0)).max() <= 1e-3


def test_log_ratio_blowup_guard(vp10):
    with pytest.raises(SolverError, match="blew up|log-ratio"):
        solve_log_ratios(vp10, "exchange", dt=5.0)


@pytest.mark.parametrize("dt", [0.0, -1.0, 0.07])
def test_log_ratio_step_validation(vp10, dt):
    with pytest.raises(ValueError):
        solve_log_ratios(vp10, "exchange", dt=dt)


def test_value_v_terminal_and_monotone(vp10, grid_ex10):
    assert value_v(grid_ex10, vp10.T, 0) == -1.0
    assert value_v(grid_ex10, vp10.T, vp10.q_bar) == -1.0
    # larger log u means larger (less negative) v; compare near T where the
    # values are representable in doubles
    t = vp10.T - 1.0
    assert value_v(grid_ex10, t, 0) > value_v(grid_ex10, t, vp10.q_bar)


def test_value_v_desk_scale_bounds():
    vp = validate(ModelParams(q_bar=10, T=60.0))
    grid = solve_matrix_exp(vp, "exchange")
    theta = grid.exponent
    k = vp.constants
    v00 = value_v(grid, 0.0, 0)
    assert -math.exp(k.c1 * vp.q_bar**2 * vp.T * theta) < v00
    assert v00 < -math.exp(-2 * k.c1_prime * vp.T * theta)


def test_value_v_rejects_agent_regimes(vp10):
    grid = solve_matrix_exp(vp10, "benchmark", np.linspace(0, vp10.T, 3))
    with pytest.raises(SolverError, match="stores u only"):
        value_v(grid, 0.0, 0)


def test_grid_rejects_bad_times(vp10):
    with pytest.raises(ValueError, match="increasing"):
        solve_matrix_exp(vp10, "exchange", [0.0, 0.0, 1.0])
    with pytest.raises(ValueError, match="unknown regime"):
        solve_matrix_exp(vp10, "unknown")


def test_csv_exports_roundtrip(tmp_path, vp10):
    times = np.linspace(0, vp10.T, 3)
    grid = solve_matrix_exp(vp10, "exchange", times)
    path = tmp_path / "grid.csv"
    write_grid_csv(grid, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# regime=exchange")
    assert "C=" in lines[0] and "exponent=" in lines[0]
    assert lines[1] == "t,q,log_u"
    t, q, lu = lines[2].split(",")
    assert float(t) == 0.0 and int(q) == -vp10.q_bar
    assert float(lu) == grid.log_u[0, 0]

    lr = solve_log_ratios(vp10, "exchange", dt=1.0)
    lr_path = tmp_path / "ratios.csv"
    write_log_ratio_csv(lr, lr_path)
    head = lr_path.read_text().splitlines()[:2]
    assert head[0].startswith("# regime=exchange") and head[1] == "t,q,v_plus"
