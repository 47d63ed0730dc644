"""Event-driven Monte Carlo of the market under any quoting policy:
Brownian efficient price sampled exactly, bid/ask arrivals by exact
thinning, inventory/cash/P&L accounting, contract accrual, and paired
cross-path statistics.

Per-path random streams come from the documented splittable construction
SeedSequence(master_seed, spawn_key=(path_index,)); paired regimes reuse
identical streams, so comparisons are common-random-number reduced and
results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from . import _kernels
from .contract import ContractPolicy, benchmark_policy, contracted_policy
from .params import ValidatedParams, validate
from .solver import SolverError, solve_matrix_exp

__all__ = [
    "SimulationError",
    "PathRecord",
    "SeriesStats",
    "ExperimentStats",
    "UtilityCheck",
    "TradingCostResult",
    "path_seed",
    "simulate_path",
    "run_experiment",
    "trading_cost_experiment",
    "utility_check",
    "write_experiment_csv",
    "SERIES",
]

SERIES = ("spread", "flow", "ask_flow", "mm_pnl", "exchange_pnl", "total_pnl", "trading_cost")


class SimulationError(SolverError):
    """A simulation guard tripped (domination bound, buffer sizing)."""


@dataclass(frozen=True)
class PathRecord:
    """One simulated trajectory sampled on an output grid.

    Q = Nb - Na throughout with |Q| <= q_bar; PL = X + Q*S is the
    accounting identity; Y is the running contract accrual (zero when the
    policy carries no contract); aggregate exchange revenue is
    fee*(Na+Nb) - Y.
    """

    regime: str
    seed_key: tuple
    times: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    X: np.ndarray
    Na: np.ndarray
    Nb: np.ndarray
    Y: np.ndarray
    spread: np.ndarray  # instantaneous total quoted spread; nan at the cap
    trading_cost: np.ndarray  # cumulative int delta^a dN^a
    bid_earnings: np.ndarray  # cumulative int delta^b dN^b
    q_dS: np.ndarray  # cumulative int Q dS
    fee: float
    q0: int
    s0: float
    fill_times: np.ndarray = field(repr=False, default=None)
    fill_sides: np.ndarray = field(repr=False, default=None)  # +1 ask, -1 bid

    @property
    def PL(self) -> np.ndarray:
        return self.X + self.Q * self.S

    @property
    def mm_pnl(self) -> np.ndarray:
        # trading P&L accrued since the start, plus the contract value
        return self.PL - self.q0 * self.s0 + self.Y

    @property
    def exchange_pnl(self) -> np.ndarray:
        return self.fee * (self.Na + self.Nb) - self.Y


def path_seed(master_seed: int, path_index: int) -> np.random.SeedSequence:
    """Splittable per-path stream: SeedSequence(master, spawn_key=(index,))."""
    return np.random.SeedSequence(master_seed, spawn_key=(path_index,))


def simulate_path(
    policy: ContractPolicy,
    vp: ValidatedParams,
    seed,
    output_grid=None,
    *,
    q0: int = 0,
    s0: float = 100.0,
    freeze_price: bool = False,
    _rates=None,
) -> PathRecord:
    """Simulate one path under a quoting policy by exact thinning.

    seed is an integer or a SeedSequence; identical (seed, policy, params)
    give a bit-identical record regardless of scheduling.
    """
    if output_grid is None:
        output_grid = np.linspace(0.0, vp.T, 121)
    out_times = np.asarray(output_grid, dtype=float)
    if out_times.ndim != 1 or np.any(np.diff(out_times) <= 0):
        raise ValueError("output grid must be strictly increasing")
    if out_times[0] < 0 or out_times[-1] > vp.T * (1 + 1e-12):
        raise ValueError("output grid must lie inside [0, T]")
    if not -vp.q_bar <= q0 <= vp.q_bar:
        raise ValueError(f"q0={q0} outside [-{vp.q_bar}, {vp.q_bar}]")
    if policy.vp.q_bar != vp.q_bar or policy.vp.T != vp.T:
        raise SimulationError("policy lattice does not cover the requested market")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    lam_a, lam_b = policy.dominating_rates() if _rates is None else _rates
    lam_tot = lam_a + lam_b
    n_cand = int(lam_tot * vp.T + 12.0 * math.sqrt(lam_tot * vp.T + 1.0) + 50)
    n_out = out_times.size

    kargs = policy.kernel_args()
    out_S = np.empty(n_out)
    out_Q = np.empty(n_out, dtype=np.int64)
    out_X = np.empty(n_out)
    out_Na = np.empty(n_out, dtype=np.int64)
    out_Nb = np.empty(n_out, dtype=np.int64)
    out_Y = np.empty(n_out)
    out_tc = np.empty(n_out)
    out_tb = np.empty(n_out)
    out_qds = np.empty(n_out)
    out_spread = np.empty(n_out)

    for _attempt in range(8):
        rng = np.random.default_rng(ss)
        exps = rng.exponential(size=n_cand)
        u_side = rng.random(size=n_cand)
        u_acc = rng.random(size=n_cand)
        normals = rng.standard_normal(size=n_cand + n_out + 8)
        fill_t = np.empty(n_cand)
        fill_side = np.empty(n_cand, dtype=np.int64)
        counters = np.zeros(3, dtype=np.int64)
        status = _kernels.simulate_path_kernel(
            vp.T, vp.sigma, vp.A, vp.k / vp.sigma, vp.c, vp.fill_value_factor,
            0.5 * vp.gamma * vp.sigma**2,
            *kargs,
            q0, vp.q_bar, s0, lam_a, lam_b, 1 if freeze_price else 0,
            exps, u_side, u_acc, normals,
            out_times, out_S, out_Q, out_X, out_Na, out_Nb, out_Y,
            out_tc, out_tb, out_qds, out_spread,
            fill_t, fill_side, counters,
        )
        if status == _kernels.OK:
            break
        if status == _kernels.DOMINATION_VIOLATED:
            raise SimulationError(
                "thinning domination violated: a quote fell below the policy "
                "lattice minimum by more than the safety margin"
            )
        n_cand *= 2  # buffer exhausted (a ~1e-12 tail event): redraw larger
    else:
        raise SimulationError("random buffers kept overflowing")

    n_fills = int(counters[0])
    return PathRecord(
        regime=policy.regime,
        seed_key=(ss.entropy,) + tuple(ss.spawn_key),
        times=out_times,
        S=out_S, Q=out_Q, X=out_X, Na=out_Na, Nb=out_Nb, Y=out_Y,
        spread=out_spread, trading_cost=out_tc, bid_earnings=out_tb,
        q_dS=out_qds, fee=vp.c, q0=q0, s0=s0,
        fill_times=fill_t[:n_fills].copy(),
        fill_sides=fill_side[:n_fills].copy(),
    )


@dataclass(frozen=True)
class SeriesStats:
    """Per-output-time sample mean and 95% half-width (1.96 s / sqrt(n))."""

    mean: np.ndarray
    ci95: np.ndarray
    n: np.ndarray


@dataclass(frozen=True)
class ExperimentStats:
    times: np.ndarray
    n_paths: int
    master_seed: int
    stats: dict  # regime label -> {series name -> SeriesStats}

    def series(self, label: str, name: str) -> SeriesStats:
        return self.stats[label][name]


def _collect_paths(policy, vp, n_paths, master_seed, output_grid, q0, s0, n_jobs):
    """Raw per-path series matrices (path-index order, scheduling-free)."""
    n_out = len(output_grid)
    mats = {name: np.empty((n_paths, n_out)) for name in SERIES}
    rates = policy.dominating_rates()

    def one(i):
        rec = simulate_path(
            policy, vp, path_seed(master_seed, i), output_grid,
            q0=q0, s0=s0, _rates=rates,
        )
        mats["spread"][i] = rec.spread
        mats["flow"][i] = rec.Na + rec.Nb
        mats["ask_flow"][i] = rec.Na
        mats["mm_pnl"][i] = rec.mm_pnl
        mats["exchange_pnl"][i] = rec.exchange_pnl
        mats["total_pnl"][i] = rec.mm_pnl + rec.exchange_pnl
        mats["trading_cost"][i] = rec.trading_cost

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(one, range(n_paths)))
    else:
        for i in range(n_paths):
            one(i)
    return mats


def _reduce(mats) -> dict:
    out = {}
    for name, m in mats.items():
        n = np.sum(np.isfinite(m), axis=0)
        mean = np.nanmean(m, axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            sd = np.nanstd(m, axis=0, ddof=1)
            ci = 1.96 * sd / np.sqrt(np.maximum(n, 1))
        out[name] = SeriesStats(mean=mean, ci95=ci, n=n)
    return out


def run_experiment(
    policies: dict,
    vp_by_label,
    n_paths: int,
    master_seed: int,
    output_grid=None,
    *,
    q0: int = 0,
    s0: float = 100.0,
    n_jobs: int = 1,
) -> ExperimentStats:
    """Paired simulations: every regime label reuses the same per-path
    streams; aggregates mean and 95% band per tracked series.

    policies maps label -> ContractPolicy; vp_by_label is one
    ValidatedParams for all labels or a dict label -> ValidatedParams
    (labels may differ in e.g. the base intensity).
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if output_grid is None:
        some_vp = vp_by_label if isinstance(vp_by_label, ValidatedParams) else next(
            iter(vp_by_label.values())
        )
        output_grid = np.linspace(0.0, some_vp.T, 121)
    stats = {}
    for label, policy in policies.items():
        vp = vp_by_label if isinstance(vp_by_label, ValidatedParams) else vp_by_label[label]
        mats = _collect_paths(policy, vp, n_paths, master_seed, output_grid, q0, s0, n_jobs)
        stats[label] = _reduce(mats)
    return ExperimentStats(
        times=np.asarray(output_grid, dtype=float),
        n_paths=n_paths,
        master_seed=master_seed,
        stats=stats,
    )


@dataclass(frozen=True)
class TradingCostResult:
    stats: ExperimentStats
    calibrated_A: float
    target_flow: float
    iterations: int


def trading_cost_experiment(
    vp: ValidatedParams,
    target_flow: float | None = None,
    *,
    n_paths: int = 5000,
    master_seed: int = 20080516,
    output_grid=None,
    n_jobs: int = 1,
    max_iterations: int = 40,
) -> TradingCostResult:
    """Match the contracted market's mean ask flow to the benchmark's by
    recalibrating the base intensity A (bisection), then compare the
    taker's cost of trading across the two regimes.
    """
    if output_grid is None:
        output_grid = np.linspace(0.0, vp.T, 121)
    bench = benchmark_policy(solve_matrix_exp(vp, "benchmark"), vp)

    calib_paths = max(400, n_paths // 10)
    if target_flow is None:
        pilot = run_experiment(
            {"benchmark": bench}, vp, calib_paths, master_seed,
            output_grid=[0.0, vp.T], q0=0, n_jobs=n_jobs,
        )
        target_flow = float(pilot.series("benchmark", "ask_flow").mean[-1])
    if not target_flow > 0:
        raise ValueError(f"target_flow must be positive (got {target_flow})")

    def contracted_for(A_value):
        vp_c = validate(dc_replace(vp, A=A_value, delta_inf=None, constants=None))
        return vp_c, contracted_policy(solve_matrix_exp(vp_c, "exchange"), vp_c)

    def mean_ask_flow(A_value):
        vp_c, pol = contracted_for(A_value)
        res = run_experiment(
            {"c": pol}, vp_c, calib_paths, master_seed,
            output_grid=[0.0, vp.T], q0=0, n_jobs=n_jobs,
        )
        s = res.series("c", "ask_flow")
        return float(s.mean[-1]), float(s.ci95[-1])

    lo, hi = 1e-3, vp.A * 2.0
    flow_hi, _ = mean_ask_flow(hi)
    if flow_hi < target_flow:
        raise SimulationError("bisection bracket too small for the target flow")
    iterations = 0
    mid = vp.A
    while True:
        iterations += 1
        if iterations > max_iterations:
            raise SimulationError(
                f"flow calibration did not converge in {max_iterations} bisection steps"
            )
        mid = 0.5 * (lo + hi)
        flow, ci = mean_ask_flow(mid)
        if abs(flow - target_flow) <= max(ci, 1e-3 * target_flow):
            break
        if flow > target_flow:
            hi = mid
        else:
            lo = mid

    vp_c, pol_c = contracted_for(mid)
    stats = run_experiment(
        {"contracted": pol_c, "benchmark": bench},
        {"contracted": vp_c, "benchmark": vp},
        n_paths, master_seed, output_grid=output_grid, q0=0, n_jobs=n_jobs,
    )
    return TradingCostResult(
        stats=stats, calibrated_A=float(mid), target_flow=target_flow, iterations=iterations
    )


@dataclass(frozen=True)
class UtilityCheck:
    agent_mc: float
    agent_se: float
    agent_closed: float
    exchange_mc: float
    exchange_se: float
    exchange_closed: float
    inconclusive: bool

    @property
    def agent_z(self) -> float:
        return (self.agent_mc - self.agent_closed) / self.agent_se

    @property
    def exchange_z(self) -> float:
        return (self.exchange_mc - self.exchange_closed) / self.exchange_se


def utility_check(
    policy: ContractPolicy,
    vp: ValidatedParams,
    n_paths: int,
    master_seed: int,
    *,
    q0: int = 0,
    n_jobs: int = 1,
) -> UtilityCheck:
    """Monte-Carlo CARA utilities of both parties against the closed forms:
    the market maker's value is -exp(-gamma Y_0); the (per-exchange)
    principal's is v(0, Q_0) exp(eta Y_0 / N).

    Returns standard errors and an inconclusive flag when the relative
    standard error exceeds 50% (variance explosion guard).
    """
    if policy.grid is None or policy.grid.exponent is None:
        raise SimulationError("utility_check needs a policy built on a value grid")
    N = policy.n_exchanges
    grid = policy.grid
    rates = policy.dominating_rates()
    out_grid = np.array([0.0, vp.T])

    agent = np.empty(n_paths)
    exch = np.empty(n_paths)

    def one(i):
        rec = simulate_path(
            policy, vp, path_seed(master_seed, i), out_grid, q0=q0, _rates=rates
        )
        pl = rec.PL[-1] - rec.q0 * rec.s0
        xi = rec.Y[-1]
        agent[i] = -math.exp(-vp.gamma * (xi + pl))
        n_fills = rec.Na[-1] + rec.Nb[-1]
        exch[i] = -math.exp(-vp.eta * (vp.c * n_fills - xi) / N)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(one, range(n_paths)))
    else:
        for i in range(n_paths):
            one(i)

    agent_mc = float(agent.mean())
    agent_se = float(agent.std(ddof=1) / math.sqrt(n_paths))
    exch_mc = float(exch.mean())
    exch_se = float(exch.std(ddof=1) / math.sqrt(n_paths))

    theta = grid.exponent
    log_u0 = float(grid.log_u_at(0.0)[grid.q_index(q0)])
    agent_closed = -math.exp(-vp.gamma * policy.y0)
    exchange_closed = -math.exp(-theta * log_u0 + vp.eta * policy.y0 / N)

    inconclusive = (
        agent_se > 0.5 * abs(agent_mc) or exch_se > 0.5 * abs(exch_mc)
    )
    return UtilityCheck(
        agent_mc=agent_mc, agent_se=agent_se, agent_closed=agent_closed,
        exchange_mc=exch_mc, exchange_se=exch_se, exchange_closed=exchange_closed,
        inconclusive=inconclusive,
    )


def write_experiment_csv(stats: ExperimentStats, label: str, path) -> None:
    """One row per output time; mean and ci95 columns per tracked series."""
    per = stats.stats[label]
    names = [n for n in SERIES if n in per]
    with open(path, "w") as fh:
        fh.write(
            f"# regime={label} n_paths={stats.n_paths} master_seed={stats.master_seed}\n"
        )
        fh.write("t," + ",".join(f"{n}_mean,{n}_ci95" for n in names) + "\n")
        for i, t in enumerate(stats.times):
            cells = []
            for n in names:
                s = per[n]
                cells.append(f"{float(s.mean[i])!r},{float(s.ci95[i])!r}")
            fh.write(f"{float(t)!r}," + ",".join(cells) + "\n")
