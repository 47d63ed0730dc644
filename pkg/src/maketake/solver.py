"""Value functions u, v and their stable log-ratios, by four mutually
cross-checking routes: tridiagonal matrix exponential, truncated double
series, jump-process Monte Carlo, and a backward ODE for the log-ratios.

Everything is stored in the log domain: at the standard horizon the raw u
leaves the double-precision range on both ends (log u spans roughly
[-C*q_bar^2*(T-t), 2*C'*(T-t)]), while all downstream quantities only need
log u and its neighbour differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from .params import ValidatedParams
from . import _kernels

__all__ = [
    "SolverError",
    "REGIMES",
    "regime_constants",
    "regime_exponent",
    "ValueGrid",
    "LogRatioGrid",
    "solve_matrix_exp",
    "solve_series",
    "solve_series_grid",
    "solve_mc",
    "solve_log_ratios",
    "value_v",
    "write_grid_csv",
    "write_log_ratio_csv",
]

REGIMES = ("exchange", "benchmark", "nash", "first_best")


class SolverError(RuntimeError):
    """A numerical guard tripped; never silently approximated."""


def regime_constants(regime: str, vp: ValidatedParams) -> tuple[float, float]:
    """(C, C') pair of the linear system for a regime."""
    k = vp.constants
    if regime == "exchange":
        return k.c1, k.c1_prime
    if regime == "benchmark":
        return k.c1_tilde, k.c1_tilde_prime
    if regime == "nash":
        return k.c_n, k.c_n_prime
    if regime == "first_best":
        return k.c1_fb, k.c1_tilde_fb
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


def regime_exponent(regime: str, vp: ValidatedParams) -> float | None:
    """theta with v = -u**(-theta); None for the regimes whose agent-side
    transformation lives in the contract layer."""
    if regime == "exchange":
        return vp.sigma * vp.eta / vp.k
    if regime == "nash":
        return vp.sigma * vp.eta / (vp.k * vp.n_exchanges)
    if regime in ("benchmark", "first_best"):
        return None
    raise ValueError(f"unknown regime {regime!r}; expected one of {REGIMES}")


@dataclass(frozen=True)
class ValueGrid:
    """log u(t, q) on a time x inventory lattice, carrying the generator's
    eigendecomposition so values at off-lattice times stay exact."""

    regime: str
    times: np.ndarray  # increasing, on [0, T]
    inventories: np.ndarray  # integers -q_bar .. q_bar
    log_u: np.ndarray  # shape (len(times), 2*q_bar+1)
    exponent: float | None
    C: float
    C_prime: float
    T: float
    q_bar: int
    n_exchanges: int = 1
    _eig_w: np.ndarray = field(repr=False, default=None)
    _eig_V: np.ndarray = field(repr=False, default=None)
    _eig_c: np.ndarray = field(repr=False, default=None)

    def log_u_at(self, t: float) -> np.ndarray:
        """Exact log u(t, .) for any t in [0, T] (eigendecomposition
        re-evaluation, no interpolation)."""
        if not 0.0 <= t <= self.T * (1 + 1e-12):
            raise ValueError(f"t={t} outside [0, {self.T}]")
        return _log_u_from_eig(self._eig_w, self._eig_V, self._eig_c, self.T - t)

    def q_index(self, q: int) -> int:
        if not -self.q_bar <= q <= self.q_bar:
            raise ValueError(f"q={q} outside [-{self.q_bar}, {self.q_bar}]")
        return int(q + self.q_bar)


@dataclass(frozen=True)
class LogRatioGrid:
    """v_plus(t, q) = log u(t, q+1) - log u(t, q) for q = -q_bar .. q_bar-1."""

    regime: str
    times: np.ndarray
    inventories: np.ndarray  # -q_bar .. q_bar-1
    v_plus: np.ndarray  # shape (len(times), 2*q_bar)
    C: float
    C_prime: float
    T: float
    q_bar: int
    dt: float


def _log_u_from_eig(w, V, c, tau, chunk=None) -> np.ndarray:
    """log( V @ (exp(tau*w) * c) ) per row, evaluated as a signed
    log-sum-exp so the result is finite over the whole lattice."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    n_q = V.shape[0]
    out = np.empty((tau.size, n_q))
    b = V * c[None, :]  # b[q, m] = V[q, m] * c[m]
    step = chunk or max(1, int(2e6 // (n_q * w.size)) or 1)
    for lo in range(0, tau.size, step):
        hi = min(lo + step, tau.size)
        a = tau[lo:hi, None, None] * w[None, None, :]
        vals, signs = logsumexp(a, b=b[None, :, :], axis=-1, return_sign=True)
        if np.any(signs <= 0.0) or not np.all(np.isfinite(vals)):
            raise SolverError(
                "matrix-exponential evaluation lost positivity; "
                "eigendecomposition round-off exceeded its safe range"
            )
        out[lo:hi] = vals
    out[tau == 0.0] = 0.0  # boundary u = 1 holds exactly
    return out[0] if out.shape[0] == 1 and np.ndim(tau) else out


def _check_bounds(log_u, C, Cp, tau, q_bar, regime) -> None:
    tau = np.asarray(tau, dtype=float)[:, None]
    lo = -C * q_bar**2 * tau
    hi = 2.0 * Cp * tau
    slack = 1e-6 + 1e-11 * np.maximum(np.abs(lo), np.abs(hi))
    bad = (log_u < lo - slack) | (log_u > hi + slack)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise SolverError(
            f"{regime}: log u out of its probabilistic bounds at "
            f"tau={float(tau[i, 0])}, q-index={j}: {log_u[i, j]} not in "
            f"[{float(lo[i, 0])}, {float(hi[i, 0])}]"
        )


def solve_matrix_exp(vp: ValidatedParams, regime: str, times=None) -> ValueGrid:
    """u(t,.) = exp((T-t) B) 1 for the symmetric tridiagonal generator B
    (diagonal -C q^2, off-diagonals C'), via eigendecomposition."""
    C, Cp = regime_constants(regime, vp)
    q_bar = vp.q_bar
    if times is None:
        times = np.linspace(0.0, vp.T, 1001)
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0 or times[-1] > vp.T:
        raise ValueError("times must be an increasing grid inside [0, T]")

    q = np.arange(-q_bar, q_bar + 1)
    try:
        w, V = eigh_tridiagonal(-C * q.astype(float) ** 2, np.full(2 * q_bar, Cp))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - scipy failure path
        raise SolverError(f"eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(w)) or not np.all(np.isfinite(V)):
        raise SolverError("eigendecomposition returned non-finite factors")
    c = V.T @ np.ones(2 * q_bar + 1)

    log_u = _log_u_from_eig(w, V, c, vp.T - times)
    _check_bounds(log_u, C, Cp, vp.T - times, q_bar, regime)
    return ValueGrid(
        regime=regime,
        times=times,
        inventories=q,
        log_u=log_u,
        exponent=regime_exponent(regime, vp),
        C=C,
        C_prime=Cp,
        T=vp.T,
        q_bar=q_bar,
        n_exchanges=vp.n_exchanges,
        _eig_w=w,
        _eig_V=V,
        _eig_c=c,
    )


def _series_cutoff(x: float, tol: float) -> int:
    # Smallest N > x with Chernoff remainder sum_{n>N} x^n/n! <= (e x/N)^N <= tol.
    target = math.log(tol)
    N = max(10, int(math.ceil(x)) + 1)
    while N * (1.0 + math.log(x) - math.log(N)) > target:
        N = max(N + 5, int(N * 1.05))
    return N


def _series_log_u(C: float, Cp: float, tau: float, q_bar: int, tol: float) -> np.ndarray:
    """Positive power series for log u(tau, .) at fixed remaining time.

    Shifting the generator by mu = C q_bar^2 makes M = B + mu I entrywise
    nonnegative, so e^{tau B} 1 = e^{-mu tau} sum_n (tau^n/n!) M^n 1 is a
    Poisson-weighted series of positive vectors: cancellation-free, cut
    when the Poisson tail of the shifted jump rate falls below tol.
    """
    n_q = 2 * q_bar + 1
    if tau == 0.0:
        return np.zeros(n_q)
    mu = C * q_bar**2
    diag = mu - C * np.arange(-q_bar, q_bar + 1).astype(float) ** 2  # >= 0
    rate = tau * (mu + 2.0 * Cp)  # bounds tau * row sums of M
    N = _series_cutoff(rate, tol)

    v = np.ones(n_q)
    total = v.copy()
    log_shift = 0.0
    for n in range(1, N + 1):
        mv = diag * v
        mv[:-1] += Cp * v[1:]
        mv[1:] += Cp * v[:-1]
        v = (tau / n) * mv
        total += v
        peak = total.max()
        if peak > 1e280:
            total /= peak
            v /= peak
            log_shift += math.log(peak)
    return np.log(total) + log_shift - mu * tau


def solve_series(vp: ValidatedParams, regime: str, t: float, q: int, tol: float = 1e-12) -> float:
    """log u(t, q) by direct series summation, truncated when the Poisson
    tail bound of the series index falls below tol.

    Independent of the eigendecomposition route: pure positive-term
    accumulation of the generator's power series.
    """
    log_u = solve_series_grid(vp, regime, [t], tol)
    if not -vp.q_bar <= q <= vp.q_bar:
        raise ValueError(f"q={q} outside [-{vp.q_bar}, {vp.q_bar}]")
    return float(log_u[0, int(q) + vp.q_bar])


def solve_series_grid(vp: ValidatedParams, regime: str, times, tol: float = 1e-12) -> np.ndarray:
    """Series log u on a full time x inventory lattice."""
    if not tol > 0.0:
        raise ValueError(f"tol must be positive (got {tol})")
    C, Cp = regime_constants(regime, vp)
    out = np.empty((len(times), 2 * vp.q_bar + 1))
    for i, t in enumerate(times):
        tau = vp.T - t
        if tau < 0:
            raise ValueError(f"t={t} beyond the horizon T={vp.T}")
        out[i] = _series_log_u(C, Cp, tau, vp.q_bar, tol)
    return out


def solve_mc(
    vp: ValidatedParams,
    regime: str,
    t: float,
    q: int,
    n_paths: int,
    seed: int,
    q_bar: int | None = None,
) -> tuple[float, float]:
    """Unbiased estimate of u(t, q) from the jump-process representation:
    a two-sided unit-jump process at per-side rate C' (side switched off at
    the barrier), weighting each path by exp(int(-C Q^2 + rates)).

    Returns (estimate, standard error).  q_bar can be overridden to mimic an
    inactive barrier.
    """
    if n_paths < 100:
        raise ValueError(f"n_paths must be at least 100 (got {n_paths})")
    C, Cp = regime_constants(regime, vp)
    q_bar = vp.q_bar if q_bar is None else int(q_bar)
    tau = vp.T - t
    if not -q_bar <= q <= q_bar:
        raise ValueError(f"q={q} outside [-{q_bar}, {q_bar}]")

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    # Buffer long enough that exhausting it is a < 1e-12 tail event.
    mean_jumps = 2.0 * Cp * tau
    buf = int(mean_jumps + 12.0 * math.sqrt(mean_jumps + 1.0) + 40)
    chunk = max(1, min(n_paths, int(4e6 // buf)))

    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_paths:
        n = min(chunk, n_paths - done)
        exps = rng.exponential(size=(n, buf))
        us = rng.random(size=(n, buf))
        log_w = np.empty(n)
        status = _kernels.mc_weight_paths(C, Cp, int(q), q_bar, tau, exps, us, log_w)
        if status != 0:
            raise SolverError("jump buffer exhausted; raise the buffer margin")
        lo = -C * q_bar**2 * tau - 1e-9
        hi = 2.0 * Cp * tau + 1e-9
        if np.any(log_w < lo) or np.any(log_w > hi):
            raise SolverError("a path weight escaped the probabilistic bounds")
        weights = np.exp(log_w)
        total += weights.sum()
        total_sq += (weights**2).sum()
        done += n

    mean = total / n_paths
    var = max(total_sq / n_paths - mean**2, 0.0)
    return float(mean), float(math.sqrt(var / n_paths))


def _ratio_rhs(C: float, Cp: float, q_bar: int):
    qs = np.arange(-q_bar, q_bar).astype(float)
    lin = C * (2.0 * qs + 1.0)

    def rhs(w):
        ew = np.exp(w)
        emw = np.exp(-w)
        up = np.zeros_like(w)
        up[:-1] = ew[1:]  # e^{v+(q+1)}, absent at q = q_bar-1
        dn = np.zeros_like(w)
        dn[1:] = emw[:-1]  # e^{-v+(q-1)}, absent at q = -q_bar
        return lin - Cp * (up - ew + emw - dn)

    return rhs


def solve_log_ratios(
    vp: ValidatedParams, regime: str, dt: float = 0.01, capture_times=()
) -> LogRatioGrid:
    """Backward integration of the coupled log-ratio system from
    v_plus(T, .) = 0 with a classical fourth-order one-step scheme.

    A blow-up guard converts any step-size instability into an error naming
    the offending (t, q) instead of returning garbage.  capture_times lists
    t values (step multiples) that must appear in the stored grid on top of
    the regular subsampling.
    """
    if not 0.0 < dt <= vp.T:
        raise ValueError(f"dt must be in (0, T] (got {dt})")
    C, Cp = regime_constants(regime, vp)
    q_bar = vp.q_bar
    n_steps = int(round(vp.T / dt))
    if abs(n_steps * dt - vp.T) > 1e-9 * vp.T:
        raise ValueError(f"dt={dt} does not divide T={vp.T} evenly")
    capture_steps = set()
    for t_cap in capture_times:
        s = int(round((vp.T - t_cap) / dt))
        if not 0 <= s <= n_steps or abs(s * dt - (vp.T - t_cap)) > 1e-9 * max(vp.T, 1.0):
            raise ValueError(f"capture time {t_cap} is not a step multiple of dt={dt}")
        capture_steps.add(s)

    rhs = _ratio_rhs(C, Cp, q_bar)
    w = np.zeros(2 * q_bar)
    keep = max(1, n_steps // 1200)
    stored = [w.copy()]
    stored_tau = [0.0]
    guard_scale = 10.0 * (2.0 * Cp + C * q_bar**2)

    for step in range(1, n_steps + 1):
        k1 = -rhs(w)
        k2 = -rhs(w + 0.5 * dt * k1)
        k3 = -rhs(w + 0.5 * dt * k2)
        k4 = -rhs(w + dt * k3)
        w = w + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tau = step * dt
        limit = guard_scale * tau + 1.0
        if not np.all(np.isfinite(w)) or np.max(np.abs(w)) > limit:
            j = int(np.argmax(np.where(np.isfinite(w), np.abs(w), np.inf)))
            raise SolverError(
                f"{regime}: log-ratio integration blew up at t={vp.T - tau}, "
                f"q={j - q_bar} (|v_plus| guard {limit})"
            )
        if step % keep == 0 or step == n_steps or step in capture_steps:
            stored.append(w.copy())
            stored_tau.append(tau)

    times = vp.T - np.asarray(stored_tau[::-1])
    v_plus = np.asarray(stored[::-1])
    return LogRatioGrid(
        regime=regime,
        times=times,
        inventories=np.arange(-q_bar, q_bar),
        v_plus=v_plus,
        C=C,
        C_prime=Cp,
        T=vp.T,
        q_bar=q_bar,
        dt=dt,
    )


def value_v(grid: ValueGrid, t: float, q: int) -> float:
    """Principal-side value v(t,q) = -exp(-theta log u(t,q)); only defined
    for the regimes carrying the exponent."""
    if grid.exponent is None:
        raise SolverError(
            f"regime {grid.regime!r} stores u only; its agent-side "
            "transformation lives in the contract layer"
        )
    log_u = grid.log_u_at(t)[grid.q_index(q)]
    return -math.exp(-grid.exponent * log_u)


def _grid_header(grid) -> str:
    exp = getattr(grid, "exponent", None)
    extra = f" exponent={exp!r}" if exp is not None else ""
    return (
        f"# regime={grid.regime} C={grid.C!r} C_prime={grid.C_prime!r}"
        f"{extra} q_bar={grid.q_bar} T={grid.T!r}"
    )


def write_grid_csv(grid: ValueGrid, path) -> None:
    """One row per (t, q) node: t, q, log_u."""
    with open(path, "w") as fh:
        fh.write(_grid_header(grid) + "\n")
        fh.write("t,q,log_u\n")
        for i, t in enumerate(grid.times):
            for j, q in enumerate(grid.inventories):
                fh.write(f"{float(t)!r},{int(q)},{float(grid.log_u[i, j])!r}\n")


def write_log_ratio_csv(grid: LogRatioGrid, path) -> None:
    """One row per (t, q) node: t, q, v_plus."""
    with open(path, "w") as fh:
        fh.write(_grid_header(grid) + f" dt={grid.dt}\n")
        fh.write("t,q,v_plus\n")
        for i, t in enumerate(grid.times):
            for j, q in enumerate(grid.inventories):
                fh.write(f"{float(t)!r},{int(q)},{float(grid.v_plus[i, j])!r}\n")
