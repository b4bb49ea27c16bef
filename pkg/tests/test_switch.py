import math

import numpy as np
import pytest

from ruinlab import switch
from ruinlab.diffusion import univariate_bm_ruin
from ruinlab.errors import DegenerateSurvivalError, ModelError, QuadratureError
from ruinlab.model import ClaimDistribution, EnvironmentModel, RiskModel, RuinMode
from ruinlab.numerics import QuadratureResult
from ruinlab.switch import (
    SwitchScenario,
    bm_scaling_factor,
    chi,
    exp_ruin_bound,
    exp_single_switch_ruin,
    general_single_switch_ruin,
    lambda_star,
    scenario_ruin,
)
from tests.builders import make_model, make_query, single_state_model


# ============================================================================
# Exponential closed form
# ============================================================================


def test_lambda_star():
    assert lambda_star(0.45, 1.8, 10.0, 50.0) == pytest.approx(1.53)
    assert lambda_star(0.45, 1.8, 50.0, 50.0) == 0.45
    with pytest.raises(ModelError):
        lambda_star(1.0, 1.0, 2.0, 1.0)


def test_zero_reserve_tiny_horizon():
    # ruin at the first claim once u = 0
    assert exp_single_switch_ruin(0.0, 1.0, 1.0, 1.0, 1.0, 0.01, 0.01) == pytest.approx(0.01, rel=0.02)


def test_long_horizon_approaches_the_infinite_horizon_value():
    # Cramer-Lundberg with exponential claims: (lambda mu / r) exp(-(1/mu - lambda/r) u)
    value = exp_single_switch_ruin(5.0, 1.0, 1.0, 0.5, 0.5, 2000.0, 2000.0)
    assert value == pytest.approx(0.5 * math.exp(-2.5), rel=1e-4)


def test_only_the_average_intensity_matters():
    a = exp_single_switch_ruin(10.0, 1.0, 1.0, 0.45, 1.8, 10.0, 50.0)
    b = exp_single_switch_ruin(10.0, 1.0, 1.0, 1.53, 1.53, 50.0, 50.0)
    assert a == pytest.approx(b, rel=1e-12)


def test_switch_at_the_horizon_is_continuous():
    at_end = exp_single_switch_ruin(10.0, 1.0, 1.0, 0.45, 1.8, 50.0, 50.0)
    just_before = exp_single_switch_ruin(10.0, 1.0, 1.0, 0.45, 1.8, 50.0 - 1e-9, 50.0)
    assert just_before == pytest.approx(at_end, abs=1e-8)


def test_heavy_load_is_handled():
    # r < lambda mu: ruin is certain eventually
    assert exp_single_switch_ruin(5.0, 1.0, 1.0, 2.0, 2.0, 500.0, 500.0) == pytest.approx(1.0, abs=1e-6)


def test_critical_load_uses_the_floor_limit():
    value = exp_single_switch_ruin(3.0, 1.0, 1.0, 1.0, 1.0, 5.0, 5.0)
    assert 0.0 < value < 1.0


def test_without_premium_ruin_is_a_poisson_gamma_tail():
    assert exp_single_switch_ruin(0.0, 0.0, 1.0, 2.0, 2.0, 1.5, 1.5) == pytest.approx(1 - math.exp(-3.0))
    tail = exp_single_switch_ruin(1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    # P(N>=1, S_N > 1) for N ~ Poisson(1) and unit exponential claims
    expected = sum(math.exp(-1) / math.factorial(k) * math.exp(-1) * sum(1 / math.factorial(j) for j in range(k))
                   for k in range(1, 40))
    assert tail == pytest.approx(expected, rel=1e-10)


def test_no_arrivals_means_no_ruin():
    assert exp_single_switch_ruin(1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 10.0) == 0.0


def test_exp_form_monotone_in_horizon_and_reserve():
    by_t = [exp_single_switch_ruin(10.0, 1.0, 1.0, 0.9, 0.9, t, t) for t in (5.0, 10.0, 20.0, 40.0)]
    by_u = [exp_single_switch_ruin(u, 1.0, 1.0, 0.9, 0.9, 20.0, 20.0) for u in (0.0, 2.0, 5.0, 10.0)]
    assert by_t == sorted(by_t)
    assert by_u == sorted(by_u, reverse=True)


def test_quadrature_failure_is_raised(monkeypatch):
    monkeypatch.setattr(
        switch, "adaptive_quadrature", lambda *a, **k: QuadratureResult(math.nan, math.inf, 200, False)
    )
    with pytest.raises(QuadratureError):
        exp_single_switch_ruin(10.0, 1.0, 1.0, 0.45, 1.8, 10.0, 50.0)


def test_value_outside_the_clamp_band_is_an_error(monkeypatch):
    monkeypatch.setattr(switch, "adaptive_quadrature", lambda *a, **k: QuadratureResult(-5.0, 0.0, 1, True))
    with pytest.raises(QuadratureError, match="left"):
        exp_single_switch_ruin(10.0, 1.0, 1.0, 0.45, 1.8, 10.0, 50.0)


# ============================================================================
# Brownian scaling factor
# ============================================================================


def test_scaling_factor_limits():
    assert bm_scaling_factor(-1.0, 2.0, 1.0, 0.1, 1.0) == 0.0
    assert bm_scaling_factor(0.0, 2.0, 1.0, 0.1, 1.0) > 0.0
    # far above the barrier the conditional and free densities agree up to 1 / survival
    survival = 1.0 - univariate_bm_ruin(2.0, 0.1, 1.0, 1.0)
    assert bm_scaling_factor(100.0, 2.0, 1.0, 0.1, 1.0) == pytest.approx(1.0 / survival, rel=1e-9)


@pytest.mark.parametrize("v", [0.0, 1.0, 25.0])
def test_scaling_factor_is_one_when_ruin_is_out_of_reach(v):
    drift, var, tau = 0.1, 2.0, 3.0
    remote = 50.0 * math.sqrt(var * tau)
    assert bm_scaling_factor(v, remote, tau, drift, var) == pytest.approx(1.0, abs=1e-6)
    assert bm_scaling_factor(v, 2.0, 1e-9, drift, var) == pytest.approx(1.0, abs=1e-6)


def test_scaling_factor_numerator_at_the_barrier():
    u, tau, drift, var = 1.5, 2.0, 0.3, 1.2
    survival = 1.0 - univariate_bm_ruin(u, drift, var, tau)
    numerator = bm_scaling_factor(0.0, u, tau, drift, var) * survival
    assert numerator == pytest.approx(1.0 - math.exp(-2.0 * u * u / (var * tau)), rel=1e-9)


def test_scaling_factor_rejects_zero_reserve():
    with pytest.raises(ModelError):
        bm_scaling_factor(1.0, 0.0, 1.0, 0.1, 1.0)


def test_scaling_factor_detects_certain_ruin():
    with pytest.raises(DegenerateSurvivalError):
        bm_scaling_factor(1.0, 1.0, 10.0, -1e3, 1.0)


# ============================================================================
# General claims
# ============================================================================


def _gamma_model(rates=((-1.0, 1.0), (2.0, -2.0))) -> RiskModel:
    return make_model(rates=rates, claim=ClaimDistribution.gamma(2.0, 0.5))


def test_general_route_without_a_switch_is_the_brownian_value():
    model = _gamma_model()
    value = general_single_switch_ruin(model, 0, 5.0, 0, 0, 10.0, 10.0)
    # gamma(2, 0.5): mean 1, second moment 1.5
    assert value == pytest.approx(univariate_bm_ruin(5.0, 1.0 - 0.45, 0.45 * 1.5, 10.0))


def test_general_route_switch_into_the_same_state():
    model = _gamma_model()
    straight = general_single_switch_ruin(model, 0, 5.0, 1, 1, 10.0, 10.0)
    split = general_single_switch_ruin(model, 0, 5.0, 1, 1, 4.0, 10.0)
    assert split == pytest.approx(straight, abs=0.05)


def test_general_route_is_a_probability():
    model = _gamma_model()
    for tau in (0.5, 5.0, 9.5):
        value = general_single_switch_ruin(model, 1, 3.0, 0, 1, tau, 10.0)
        assert 0.0 <= value <= 1.0


def test_general_route_with_zero_reserve():
    model = _gamma_model()
    assert 0.0 < general_single_switch_ruin(model, 0, 0.0, 0, 1, 2.0, 10.0) <= 1.0


def test_quiet_first_state_shifts_the_reserve():
    model = make_model(arrivals=[[0.0, 1.8]], claim=ClaimDistribution.gamma(2.0, 0.5))
    shifted = general_single_switch_ruin(model, 0, 2.0, 0, 1, 3.0, 10.0)
    direct = general_single_switch_ruin(model, 0, 5.0, 1, 1, 7.0, 7.0)
    assert shifted == pytest.approx(direct)


def test_general_route_rejects_bad_switch_time():
    with pytest.raises(ModelError):
        general_single_switch_ruin(_gamma_model(), 0, 1.0, 0, 1, 0.0, 1.0)


def test_scenarios():
    with pytest.raises(ModelError):
        SwitchScenario(0, 0, 0, 1.0, 2.0)
    with pytest.raises(ModelError):
        SwitchScenario(0, 0, 1, 3.0, 2.0)
    scenario = SwitchScenario.no_switch(0, 1, 5.0)
    assert not scenario.is_switch
    model = make_model()
    assert scenario_ruin(model, scenario, 10.0) == pytest.approx(
        exp_single_switch_ruin(10.0, 1.0, 1.0, 1.8, 1.8, 5.0, 5.0)
    )


# ============================================================================
# chi
# ============================================================================


def test_single_state_chi_is_a_product():
    model = single_state_model(0.9, m=2)
    query = make_query(reserves=(5.0, 8.0), horizon=20.0)
    one = exp_single_switch_ruin(5.0, 1.0, 1.0, 0.9, 0.9, 20.0, 20.0)
    two = exp_single_switch_ruin(8.0, 1.0, 1.0, 0.9, 0.9, 20.0, 20.0)
    assert chi(model, query) == pytest.approx(one * two, rel=1e-9)
    assert chi(model, query.with_mode(RuinMode.any_component())) == pytest.approx(1 - (1 - one) * (1 - two), rel=1e-9)


def test_large_reserves_make_ruin_negligible(base_model):
    assert chi(base_model, make_query(reserves=(100.0, 100.0), horizon=10.0)) < 1e-6


def test_chi_modes_are_ordered(base_model):
    query = make_query(horizon=10.0)
    every = chi(base_model, query)
    single = chi(base_model, query.with_mode(RuinMode.marginal(0)))
    some = chi(base_model, query.with_mode(RuinMode.any_component()))
    assert 0.0 < every <= single <= some <= 1.0


def test_random_start_averages_over_the_law():
    model = make_model()
    law = np.array([0.25, 0.75])
    mixed = RiskModel(
        model.arrival_rates, model.claims, model.premiums, EnvironmentModel(model.environment.rates, law)
    )
    query = make_query(horizon=4.0)
    expected = 0.25 * chi(model, query) + 0.75 * chi(model, make_query(horizon=4.0, initial_state=1))
    assert chi(mixed, make_query(horizon=4.0, initial_state=None)) == pytest.approx(expected, rel=1e-12)


def test_chi_with_gamma_claims_is_a_probability():
    value = chi(_gamma_model(), make_query(reserves=(3.0, 3.0), horizon=4.0))
    assert 0.0 < value < 1.0


# ============================================================================
# Remote reserves
# ============================================================================


def test_ruin_bound_dominates_the_closed_form():
    for u in (2.0, 10.0, 30.0):
        exact = exp_single_switch_ruin(u, 1.0, 1.0, 1.8, 1.8, 20.0, 20.0)
        assert exact <= exp_ruin_bound(u, 1.0, 1.0, 1.8, 20.0) + 1e-9
    assert exp_ruin_bound(0.0, 1.0, 1.0, 1.8, 20.0) == 1.0
    assert exp_ruin_bound(5.0, 1.0, 1.0, 0.0, 20.0) == 0.0
    # light load, long horizon: the Lundberg exponent 1/mu - lambda/r
    assert exp_ruin_bound(5.0, 1.0, 1.0, 0.5, 1e4) == pytest.approx(math.exp(-2.5), rel=1e-3)


def test_heavy_load_with_unreachable_reserve_is_negligible():
    # the theta integral cancels against 1 to rounding level here
    assert exp_single_switch_ruin(87.69, 1.0, 1.0, 1.8, 1.8, 20.0, 20.0) < 1e-6
    assert exp_single_switch_ruin(500.0, 1.0, 1.0, 1.8, 1.8, 20.0, 20.0) == 0.0


def test_unconverged_integral_under_a_tiny_bound_is_accepted(monkeypatch):
    monkeypatch.setattr(switch, "adaptive_quadrature", lambda *a, **k: QuadratureResult(math.pi, 1e-3, 200, False))
    value = exp_single_switch_ruin(60.0, 1.0, 1.0, 1.8, 1.8, 20.0, 20.0)
    assert 0.0 <= value <= exp_ruin_bound(60.0, 1.0, 1.0, 1.8, 20.0)


def test_unconverged_integral_under_a_loose_bound_still_raises(monkeypatch):
    monkeypatch.setattr(switch, "adaptive_quadrature", lambda *a, **k: QuadratureResult(2.0, 1e-3, 200, False))
    with pytest.raises(QuadratureError):
        exp_single_switch_ruin(5.0, 1.0, 1.0, 1.8, 1.8, 20.0, 20.0)


# ============================================================================
# Switch-time sweep on the base model
# ============================================================================


def fixed_switch_ruin(
    u: float, lam_j: float, lam_k: float, tau: float, horizon: float, n_paths: int, seed: int
) -> tuple[float, float]:
    """Simulated ruin of one unit-premium line with Exp(1) claims and an intensity switch at tau.

    Arrivals are unit-rate Poisson times pushed through the inverse of the
    cumulative intensity. Returns (estimate, standard error).
    """
    rng = np.random.default_rng(seed)
    total = lam_j * tau + lam_k * (horizon - tau)
    width = int(total + 10.0 * math.sqrt(total) + 20.0)
    clock = np.cumsum(rng.standard_exponential((n_paths, width)), axis=1)
    assert np.all(clock[:, -1] > total)
    first = lam_j * tau
    times = np.where(clock <= first, clock / lam_j, tau + (clock - first) / lam_k)
    paid = np.cumsum(rng.standard_exponential((n_paths, width)), axis=1)
    ruined = np.any((times <= horizon) & (u + times - paid < 0.0), axis=1)
    p = float(ruined.mean())
    return p, math.sqrt(p * (1.0 - p) / n_paths)


@pytest.mark.parametrize("tau", [5.0, 20.0])
def test_switch_sweep_tracks_simulation(base_model, tau):
    simulated, se = fixed_switch_ruin(10.0, 0.45, 1.8, tau, 50.0, 20_000, seed=int(tau))
    general = general_single_switch_ruin(base_model, 0, 10.0, 0, 1, tau, 50.0)
    assert general == pytest.approx(simulated, abs=3 * se + 0.01)


def test_switch_sweep_against_the_averaged_closed_form(base_model):
    sweep = (5.0, 10.0, 20.0, 30.0, 40.0, 49.0)
    general = [general_single_switch_ruin(base_model, 0, 10.0, 0, 1, tau, 50.0) for tau in sweep]
    averaged = [exp_single_switch_ruin(10.0, 1.0, 1.0, 0.45, 1.8, tau, 50.0) for tau in sweep]
    assert all(0.0 <= g <= 1.0 for g in general)
    # moving the heavy segment forward only adds early ruin
    assert all(a >= g - 0.005 for a, g in zip(averaged, general, strict=True))
    assert abs(averaged[0] - general[0]) <= 0.05
    assert abs(averaged[-1] - general[-1]) <= 0.05
    assert general[-1] < general[0]


def test_chi_is_nonincreasing_in_each_reserve(base_model):
    grid = ((2.0, 2.0), (2.0, 5.0), (5.0, 5.0), (8.0, 5.0))
    values = [chi(base_model, make_query(reserves=u, horizon=10.0)) for u in grid]
    assert all(b <= a + 1e-9 for a, b in zip(values, values[1:], strict=False))
    assert values[-1] < values[0]
