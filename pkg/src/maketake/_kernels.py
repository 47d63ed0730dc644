"""Numba kernels: jump-process weights for the value-function Monte Carlo
and the event-driven market path simulator (exact thinning)."""

import math

import numpy as np
from numba import njit

# path kernel status codes
OK = 0
DOMINATION_VIOLATED = 1
CANDIDATE_BUFFER_EXHAUSTED = 2
NORMAL_BUFFER_EXHAUSTED = 3


@njit(cache=True, nogil=True)
def mc_weight_paths(C, Cp, q0, q_bar, tau, exps, us, log_w):
    """Accumulate int(-C Q^2 + active-side rates) along two-sided unit-jump
    paths at per-side rate Cp; one Exp(1) and one uniform consumed per jump
    attempt.  Returns a nonzero status if a buffer runs out."""
    n, buf = exps.shape
    status = 0
    for i in range(n):
        s = 0.0
        q = q0
        acc = 0.0
        k = 0
        while True:
            up = Cp if q < q_bar else 0.0
            dn = Cp if q > -q_bar else 0.0
            rate = up + dn
            if k >= buf:
                status = 1
                break
            wait = exps[i, k] / rate
            step = wait if s + wait < tau else tau - s
            acc += (-C * q * q + rate) * step
            if s + wait >= tau:
                break
            if us[i, k] * rate < up:
                q += 1
            else:
                q -= 1
            s += wait
            k += 1
        log_w[i] = acc
        if status != 0:
            break
    return status


@njit(cache=True, inline="always")
def _mode_weights(w, c_vec, tau, buf):
    # buf[m] = c[m] * exp(tau * (w[m] - w_max)); the common shift cancels in
    # every log-u difference the policy needs.
    w_max = w[0]
    for m in range(w.size):
        if w[m] > w_max:
            w_max = w[m]
    for m in range(w.size):
        buf[m] = c_vec[m] * math.exp(tau * (w[m] - w_max))


@njit(cache=True, inline="always")
def _row_sum(V, buf, qi):
    s = 0.0
    for m in range(buf.size):
        s += V[qi, m] * buf[m]
    return s


@njit(cache=True)
def _spreads(
    t, q, q_bar, T, has_u, a0_ask, a0_bid, sigk, w, V, c_vec, buf
):
    """(ask, bid) spreads at (t, q); an inactive side returns nan."""
    ask = np.nan
    bid = np.nan
    if has_u == 0:
        if q > -q_bar:
            ask = a0_ask
        if q < q_bar:
            bid = a0_bid
        return ask, bid
    _mode_weights(w, c_vec, T - t, buf)
    qi = q + q_bar
    log_mid = math.log(_row_sum(V, buf, qi))
    if q > -q_bar:
        ask = a0_ask + sigk * (log_mid - math.log(_row_sum(V, buf, qi - 1)))
    if q < q_bar:
        bid = a0_bid + sigk * (log_mid - math.log(_row_sum(V, buf, qi + 1)))
    return ask, bid


@njit(cache=True, inline="always")
def _side_rate(delta, A, kk, c):
    return A * math.exp(-kk * (delta + c))


@njit(cache=True)
def _drift(
    t, q, q_bar, T, has_u, a0_ask, a0_bid, sigk, w, V, c_vec, buf,
    A, kk, c, fillv, half_gs2, zs_plus1,
):
    # dY/dt between events: 0.5*gamma*sigma^2*(Z^S+q)^2 - H(Z, q)
    ask, bid = _spreads(t, q, q_bar, T, has_u, a0_ask, a0_bid, sigk, w, V, c_vec, buf)
    h = 0.0
    if q > -q_bar:
        h += fillv * _side_rate(ask, A, kk, c)
    if q < q_bar:
        h += fillv * _side_rate(bid, A, kk, c)
    risk = half_gs2 * (zs_plus1 * q) ** 2
    return risk - h


@njit(cache=True)
def _drift_integral(
    t0, t1, q, q_bar, T, has_u, a0_ask, a0_bid, sigk, w, V, c_vec, buf,
    A, kk, c, fillv, half_gs2, zs_plus1,
):
    # composite Simpson on 4 subintervals (matches the solver's scheme order)
    h = (t1 - t0) / 4.0
    total = 0.0
    for i in range(5):
        f = _drift(
            t0 + h * i, q, q_bar, T, has_u, a0_ask, a0_bid, sigk, w, V, c_vec,
            buf, A, kk, c, fillv, half_gs2, zs_plus1,
        )
        if i == 0 or i == 4:
            total += f
        elif i % 2 == 1:
            total += 4.0 * f
        else:
            total += 2.0 * f
    return total * h / 3.0


@njit(cache=True, nogil=True)
def simulate_path_kernel(
    # model scalars
    T, sigma, A, kk, c, fillv, half_gs2,
    # policy
    has_u, a0_ask, a0_bid, sigk, w, V, c_vec,
    has_contract, m_const, zs_coef, y0,
    # simulation set-up
    q0, q_bar, s0, lam_bar_ask, lam_bar_bid, freeze_price,
    # randomness
    exps, u_side, u_acc, normals,
    # output grid and buffers
    out_times, out_S, out_Q, out_X, out_Na, out_Nb, out_Y,
    out_tc, out_tb, out_qds, out_spread,
    # per-fill log: times, sides (+1 ask / -1 bid), fill count in counters[0]
    fill_t, fill_side, counters,
):
    """One market path by exact thinning against per-side dominating rates.

    The efficient price is sampled exactly (one Gaussian per advanced
    segment); contract accrual integrates the drift between events and adds
    Z^i at fills.  Rejected candidates advance neither price nor state.
    """
    buf = np.empty(w.size)
    n_out = out_times.size
    n_cand = exps.size

    t = 0.0
    S = s0
    q = q0
    X = 0.0
    Na = 0
    Nb = 0
    Y = y0
    tc = 0.0
    tb = 0.0
    qds = 0.0
    iout = 0
    icand = 0
    inorm = 0
    nfill = 0
    zs_plus1 = 1.0 + zs_coef

    Lam = lam_bar_ask + lam_bar_bid
    if icand >= n_cand:
        return CANDIDATE_BUFFER_EXHAUSTED
    t_cand = exps[icand] / Lam
    icand += 1

    while True:
        # flush outputs at the current state time
        while iout < n_out and out_times[iout] <= t + 1e-12:
            out_S[iout] = S
            out_Q[iout] = q
            out_X[iout] = X
            out_Na[iout] = Na
            out_Nb[iout] = Nb
            out_Y[iout] = Y
            out_tc[iout] = tc
            out_tb[iout] = tb
            out_qds[iout] = qds
            ask, bid = _spreads(
                out_times[iout], q, q_bar, T, has_u, a0_ask, a0_bid, sigk,
                w, V, c_vec, buf,
            )
            out_spread[iout] = ask + bid
            iout += 1
        if iout >= n_out and t >= T:
            counters[0] = nfill
            return OK

        boundary = T if iout >= n_out else min(out_times[iout], T)

        if t_cand < boundary:
            # candidate event: evaluate acceptance at (t_cand, q)
            ask, bid = _spreads(
                t_cand, q, q_bar, T, has_u, a0_ask, a0_bid, sigk, w, V, c_vec, buf
            )
            side_is_ask = u_side[icand - 1] < lam_bar_ask / Lam
            accept = False
            delta_fill = 0.0
            if side_is_ask:
                if q > -q_bar:
                    p_acc = _side_rate(ask, A, kk, c) / lam_bar_ask
                    if p_acc > 1.0 + 1e-9:
                        return DOMINATION_VIOLATED
                    accept = u_acc[icand - 1] < p_acc
                    delta_fill = ask
            else:
                if q < q_bar:
                    p_acc = _side_rate(bid, A, kk, c) / lam_bar_bid
                    if p_acc > 1.0 + 1e-9:
                        return DOMINATION_VIOLATED
                    accept = u_acc[icand - 1] < p_acc
                    delta_fill = bid

            if accept:
                dt_seg = t_cand - t
                if inorm >= normals.size:
                    return NORMAL_BUFFER_EXHAUSTED
                dS = 0.0
                if freeze_price == 0 and dt_seg > 0.0:
                    dS = sigma * math.sqrt(dt_seg) * normals[inorm]
                inorm += 1
                qds += q * dS
                if has_contract == 1:
                    Y += zs_coef * q * dS
                    Y += _drift_integral(
                        t, t_cand, q, q_bar, T, has_u, a0_ask, a0_bid, sigk,
                        w, V, c_vec, buf, A, kk, c, fillv, half_gs2, zs_plus1,
                    )
                S += dS
                t = t_cand
                if side_is_ask:
                    Na += 1
                    X += S + delta_fill
                    q -= 1
                    tc += delta_fill
                else:
                    Nb += 1
                    X -= S - delta_fill
                    q += 1
                    tb += delta_fill
                if has_contract == 1:
                    Y += m_const - delta_fill
                fill_t[nfill] = t
                fill_side[nfill] = 1 if side_is_ask else -1
                nfill += 1

            if icand >= n_cand:
                return CANDIDATE_BUFFER_EXHAUSTED
            t_cand = t_cand + exps[icand] / Lam
            icand += 1
        else:
            # advance to the output boundary (or the horizon)
            dt_seg = boundary - t
            if dt_seg > 0.0:
                if inorm >= normals.size:
                    return NORMAL_BUFFER_EXHAUSTED
                dS = 0.0
                if freeze_price == 0:
                    dS = sigma * math.sqrt(dt_seg) * normals[inorm]
                inorm += 1
                qds += q * dS
                if has_contract == 1:
                    Y += zs_coef * q * dS
                    Y += _drift_integral(
                        t, boundary, q, q_bar, T, has_u, a0_ask, a0_bid, sigk,
                        w, V, c_vec, buf, A, kk, c, fillv, half_gs2, zs_plus1,
                    )
                S += dS
            t = boundary
