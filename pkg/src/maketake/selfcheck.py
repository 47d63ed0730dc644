"""Cross-method oracle suite: every numerical route the package provides is
checked against an independent one on the configured parameter set."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .contract import contracted_policy, nash_policy
from .params import ModelParams, ValidatedParams, hamiltonian, spread_map, validate
from .solver import (
    solve_log_ratios,
    solve_matrix_exp,
    solve_mc,
    solve_series_grid,
)

__all__ = ["CheckResult", "run_selfcheck", "refine_argmax", "exchange_side_objective"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def refine_argmax(f, lo: float, hi: float, step: float = 1e-4):
    """Brute-force scan at the given step, then a bounded golden-section
    refinement of the best bracket; never looks at any closed form."""
    grid = np.arange(lo, hi + step, step)
    vals = f(grid)
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(lambda z: -f(z), bounds=(a, b), method="bounded",
                          options={"xatol": 1e-12})
    return float(res.x), float(-res.fun)


def exchange_side_objective(vp: ValidatedParams, v1: float, v2: float):
    """Per-side objective of the principal's Hamiltonian as a function of
    the incentive coefficient: rate times (neighbour-value gain minus own
    continuation cost); v1 is the neighbour value, v2 the current one."""
    g, e, c = vp.gamma, vp.eta, vp.c

    def phi(z):
        z = np.asarray(z, dtype=float)
        delta = spread_map(z, vp)
        rate = vp.A * np.exp(-vp.k * (delta + c) / vp.sigma)
        own = (e / g) * (-np.expm1(-g * (z + delta))) + 1.0
        return rate * (v1 * np.exp(e * (z - c)) - v2 * own)

    return phi


def _check(name, passed, detail):
    return CheckResult(name=name, passed=bool(passed), detail=detail)


def run_selfcheck(params: ModelParams, mc_paths: int = 20000, seed: int = 424242):
    """Run every cross-method check; returns a list of CheckResult."""
    results = []
    vp = validate(params)
    k = vp.constants

    # closed-form constant reductions
    vp1 = validate(replace(params, n_exchanges=1, delta_inf=None))
    k1 = vp1.constants
    red = max(
        abs(k1.c_n - k1.c1) / k1.c1,
        abs(k1.c_n_prime - k1.c1_prime) / k1.c1_prime,
        abs(k1.c_n_hat - k1.c0) / k1.c0,
    )
    results.append(_check(
        "constants: N=1 oligopoly reduction",
        red <= 1e-14 and k.gamma_fb < min(vp.gamma, vp.eta),
        f"max relative deviation {red:.2e}",
    ))

    # matrix exponential vs series, every regime, coarse time grid
    times = np.linspace(0.0, vp.T, 21)
    worst = 0.0
    for regime in ("exchange", "benchmark", "nash", "first_best"):
        grid = solve_matrix_exp(vp, regime, times)
        series = solve_series_grid(vp, regime, times)
        err = np.abs(grid.log_u - series)
        nz = series != 0.0
        if np.any(nz):
            worst = max(worst, float((err[nz] / np.abs(series[nz])).max()))
    results.append(_check(
        "solver: matrix exponential vs series",
        worst <= 1e-10,
        f"max relative log-u deviation {worst:.2e}",
    ))

    # probabilistic representation, desk-scale shortened horizon
    vp_mc = validate(replace(params, T=min(params.T, 10.0), q_bar=min(params.q_bar, 5),
                             delta_inf=None))
    est, se = solve_mc(vp_mc, "exchange", 0.0, 0, mc_paths, seed)
    truth = math.exp(solve_series_grid(vp_mc, "exchange", [0.0])[0][vp_mc.q_bar])
    z = (est - truth) / se
    results.append(_check(
        "solver: jump-process Monte Carlo",
        abs(z) <= 3.0,
        f"z-score {z:+.2f} on {mc_paths} paths",
    ))

    # log-ratio integration vs series ratios
    lu0 = solve_series_grid(vp, "exchange", [0.0])[0]
    ratios = solve_log_ratios(vp, "exchange", dt=0.01)
    err = float(np.abs(ratios.v_plus[0] - (lu0[1:] - lu0[:-1])).max())
    anti = float(np.abs(ratios.v_plus + ratios.v_plus[:, ::-1]).max())
    results.append(_check(
        "solver: log-ratio scheme vs series",
        err <= 1e-3 and anti <= 1e-10,
        f"max deviation {err:.2e}, antisymmetry {anti:.2e}",
    ))

    # N=1 equilibrium equals the single-exchange solution
    gex = solve_matrix_exp(vp1, "exchange", times)
    gn1 = solve_matrix_exp(vp1, "nash", times)
    gdiff = float(np.abs(gex.log_u - gn1.log_u).max())
    pc = contracted_policy(gex, vp1)
    pn = nash_policy(gn1, vp1)
    pdiff = float(np.nanmax(np.abs(pc.ask_lattice - pn.ask_lattice)))
    pdiff = max(pdiff, float(np.nanmax(np.abs(pc.bid_lattice - pn.bid_lattice))))
    pdiff = max(pdiff, abs(pc.zs_coef - pn.zs_coef))
    results.append(_check(
        "contract: N=1 equilibrium reduction",
        gdiff <= 1e-12 and pdiff <= 1e-12,
        f"grid deviation {gdiff:.2e}, policy deviation {pdiff:.2e}",
    ))

    # closed-form incentive maximiser vs grid search
    rng = np.random.default_rng(seed)
    shrink = 1.0 - vp.sigma**2 * vp.gamma * vp.eta / (
        (vp.k + vp.sigma * vp.gamma) * (vp.k + vp.sigma * vp.eta)
    )
    worst_arg, worst_val = 0.0, 0.0
    for _ in range(10):
        v2 = -math.exp(rng.uniform(-2.0, 2.0))
        v1 = v2 * math.exp(rng.uniform(-1.5, 1.5))
        phi = exchange_side_objective(vp, v1, v2)
        z_closed = vp.constants.zeta0 + math.log(v2 / v1) / vp.eta
        z_hat, val_hat = refine_argmax(phi, z_closed - 3.0, z_closed + 3.0)
        val_closed = -vp.constants.c0 * v2 * (v2 / v1) ** (vp.k / (vp.sigma * vp.eta))
        worst_arg = max(worst_arg, abs(z_hat - z_closed))
        worst_val = max(worst_val, abs(val_hat - val_closed) / abs(val_closed))
    results.append(_check(
        "contract: incentive maximiser closed form",
        worst_arg <= 1e-6 and worst_val <= 1e-8,
        f"argmax deviation {worst_arg:.2e}, value rel deviation {worst_val:.2e}",
    ))

    # response Hamiltonian vs grid search over quotes
    def side_value(z_side):
        def f(d):
            d = np.asarray(d, dtype=float)
            rate = vp.A * np.exp(-vp.k * (d + vp.c) / vp.sigma)
            return rate * (-np.expm1(-vp.gamma * (z_side + d))) / vp.gamma

        return f

    worst_h = 0.0
    for _ in range(5):
        z = (0.0, rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0))
        q = int(rng.integers(-vp.q_bar, vp.q_bar + 1))
        best = 0.0
        if q > -vp.q_bar:
            _, va = refine_argmax(side_value(z[1]), -5.0, 5.0)
            best += va
        if q < vp.q_bar:
            _, vb = refine_argmax(side_value(z[2]), -5.0, 5.0)
            best += vb
        worst_h = max(worst_h, abs(best - hamiltonian(z, q, vp)))
    results.append(_check(
        "params: response Hamiltonian vs grid search",
        worst_h <= 1e-8,
        f"max value deviation {worst_h:.2e}",
    ))

    return results
