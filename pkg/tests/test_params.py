from dataclasses import replace

import numpy as np
import pytest

from maketake import (
    ModelParams,
    ValidationError,
    derived_constants,
    hamiltonian,
    intensity,
    parse_params,
    payoff_rate,
    spread_map,
    validate,
)

# frozen against a 40-digit evaluation of the closed forms
C0_STD = 0.5490896489060661
C1_STD = 4.4554455445544554e-4
ZETA0_STD = 0.4950372106578710
OFFSET_STD = 0.9950330853168083  # (1/gamma) log(1 + sigma gamma / k)
INTENSITY_HALF_TICK = 0.5518191617571635


def test_standard_set_validates_at_exact_bound_plus_one():
    base = validate(ModelParams())
    explicit = validate(ModelParams(delta_inf=base.constants.delta_cap + 1.0))
    assert explicit.delta_inf == base.constants.delta_cap + 1.0


def test_delta_inf_below_bound_is_an_error():
    with pytest.raises(ValidationError, match="delta_inf below"):
        validate(ModelParams(delta_inf=0.0))


def test_nonpositive_scalars_reported_individually():
    with pytest.raises(ValidationError, match="gamma must be positive"):
        validate(ModelParams(gamma=0.0))
    with pytest.raises(ValidationError) as err:
        validate(ModelParams(sigma=-1.0, eta=0.0, q_bar=0))
    text = str(err.value)
    assert "sigma" in text and "eta" in text and "q_bar" in text


def test_intensity_values_and_bounds(vp_std):
    assert intensity(-vp_std.c, vp_std) == pytest.approx(vp_std.A, rel=1e-15)
    assert intensity(0.5, vp_std) == pytest.approx(INTENSITY_HALF_TICK, rel=1e-12)
    with pytest.raises(ValueError, match="spread outside"):
        intensity(vp_std.delta_inf * 1.01, vp_std)


def test_intensity_log_linear(vp_std, rng):
    deltas = rng.uniform(-3.0, 3.0, size=40)
    rates = intensity(deltas, vp_std)
    d1, d2 = deltas[:20], deltas[20:]
    lhs = np.log(rates[:20]) - np.log(rates[20:])
    rhs = -vp_std.k * (d1 - d2) / vp_std.sigma
    assert np.allclose(lhs, rhs, atol=1e-12)
    order = np.argsort(deltas)
    assert np.all(np.diff(rates[order]) < 0)


def test_spread_map_offset_and_saturation(vp_std):
    assert spread_map(OFFSET_STD, vp_std) == pytest.approx(0.0, abs=1e-12)
    assert spread_map(0.0, vp_std) == pytest.approx(OFFSET_STD, rel=1e-12)
    big = vp_std.delta_inf + OFFSET_STD + 5.0
    assert spread_map(big, vp_std) == -vp_std.delta_inf
    assert spread_map(-big, vp_std) == vp_std.delta_inf
    zs = np.linspace(-vp_std.delta_inf - 10, vp_std.delta_inf + 10, 101)
    out = spread_map(zs, vp_std)
    assert np.all(np.diff(out) <= 0)


def test_hamiltonian_drops_the_blocked_side(vp_std):
    q_bar = vp_std.q_bar
    base = hamiltonian((0.0, 0.2, 0.1), q_bar, vp_std)
    # at q = +q_bar the bid leg cannot trade: zb is irrelevant
    assert hamiltonian((0.0, 0.2, 9.9), q_bar, vp_std) == base
    with pytest.raises(ValueError, match="inventory"):
        hamiltonian((0.0, 0.0, 0.0), q_bar + 1, vp_std)


def test_hamiltonian_unclamped_side_value(vp_std):
    # each active side contributes rate(quote) * sigma/(k + sigma gamma)
    za, zb = 0.31, -0.12
    expected = sum(
        intensity(spread_map(z, vp_std), vp_std) * vp_std.fill_value_factor
        for z in (za, zb)
    )
    assert hamiltonian((0.0, za, zb), 0, vp_std) == pytest.approx(expected, rel=1e-14)


def test_hamiltonian_dominates_any_quote(vp_std, rng):
    for _ in range(25):
        z = (0.0, rng.uniform(-1, 1), rng.uniform(-1, 1))
        q = int(rng.integers(-vp_std.q_bar, vp_std.q_bar + 1))
        h_star = hamiltonian(z, q, vp_std)
        deltas = rng.uniform(-3, 3, size=(2, 50))
        values = payoff_rate((deltas[0], deltas[1]), z, q, vp_std)
        assert np.all(values <= h_star + 1e-12)
        at_opt = payoff_rate(
            (spread_map(z[1], vp_std), spread_map(z[2], vp_std)), z, q, vp_std
        )
        assert at_opt == pytest.approx(h_star, rel=1e-14)


def test_derived_constants_standard_values(vp_std):
    k = vp_std.constants
    assert k.c1 == pytest.approx(C1_STD, rel=1e-12)
    assert k.c0 == pytest.approx(C0_STD, rel=1e-12)
    # k = sigma * eta for the standard set, so C1' collapses onto C0
    assert k.c1_prime == pytest.approx(k.c0, rel=1e-14)
    assert k.zeta0 == pytest.approx(ZETA0_STD, rel=1e-12)
    assert k.delta_cap > k.c_inf > 0


def test_constants_positive_except_zeta0():
    vp = validate(ModelParams(c=0.0, q_bar=5))  # zeta0 < 0 once the fee is gone
    k = vp.constants
    for name in ("c0", "c1", "c1_prime", "c1_tilde", "c1_tilde_prime", "c_n",
                 "c_n_prime", "c_n_hat", "gamma_fb", "c1_fb", "c1_tilde_fb",
                 "c_inf", "delta_cap"):
        assert getattr(k, name) > 0, name
    assert k.zeta0 < 0


@pytest.mark.parametrize("n", [1, 2, 5])
def test_oligopoly_reductions(n):
    k = derived_constants(ModelParams(n_exchanges=n))
    if n == 1:
        assert abs(k.c_n - k.c1) <= 1e-14 * k.c1
        assert abs(k.c_n_prime - k.c1_prime) <= 1e-14 * k.c1_prime
        assert abs(k.c_n_hat - k.c0) <= 1e-14 * k.c0
    assert k.gamma_fb == pytest.approx(0.009900990099009901, rel=1e-14)
    assert k.gamma_fb < min(0.01, 1.0)


def test_parse_params_defaults_and_overrides():
    p = parse_params("sigma = 0.4\nq_bar=20  # comment\n\n# full-line comment\n")
    assert p.sigma == 0.4 and p.q_bar == 20
    assert p.A == 1.5 and p.T == 600.0  # untouched defaults


@pytest.mark.parametrize(
    "text,msg",
    [
        ("volatility=0.3", "unknown parameter"),
        ("sigma=0.3\nsigma=0.4", "duplicate"),
        ("sigma=abc", "cannot parse"),
        ("sigma 0.3", "expected key=value"),
    ],
)
def test_parse_params_rejects(text, msg):
    with pytest.raises(ValidationError, match=msg):
        parse_params(text)


def test_validated_params_are_immutable(vp_std):
    with pytest.raises(Exception):
        vp_std.sigma = 1.0


def test_replace_keeps_validation_honest(vp_std):
    smaller = validate(replace(ModelParams(), q_bar=5, delta_inf=None))
    assert smaller.constants.delta_cap < vp_std.constants.delta_cap
