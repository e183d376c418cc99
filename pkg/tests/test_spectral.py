import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stablespde import spectral
from stablespde.spectral import (
    SequenceRule,
    SpectralModel,
    admissible_beta_interval,
    c_lambda_integral,
    check_conditions,
    lambda_t,
    lambda_t_envelope,
    ou_scale,
    ou_scales,
    reaction_diffusion_preset,
)


def _rd_model(alpha=1.8, r=0.35, truncation=8):
    model, _ = reaction_diffusion_preset(1, alpha, r, truncation=truncation)
    return model


def test_model_validation():
    with pytest.raises(ValueError):
        SpectralModel(SequenceRule.power(1.0, 2.0), SequenceRule.power(1.0, -0.5), 4, 2.5)
    with pytest.raises(ValueError):
        SpectralModel(SequenceRule.power(1.0, -1.0), SequenceRule.power(1.0, -0.5), 4, 1.5)
    with pytest.raises(ValueError):
        SpectralModel(SequenceRule.explicit([1.0]), SequenceRule.explicit([1.0]), 3, 1.5)
    with pytest.raises(ValueError):
        SpectralModel(SequenceRule.explicit([2.0, 1.0]), SequenceRule.explicit([1.0, 1.0]), 2, 1.5)


def test_sequence_rules_evaluate():
    p = SequenceRule.power(2.0, 3.0)
    assert np.allclose(p(np.array([1, 2])), [2.0, 16.0])
    e = SequenceRule.explicit([5.0, 7.0])
    assert np.allclose(e(np.array([1, 2])), [5.0, 7.0])


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=50.0))
def test_lambda_t_matches_brute_force(t):
    model = _rd_model()
    n = np.arange(1.0, 200_001.0)
    g = n**2.0
    b = g**-0.35
    brute = float(np.max(np.exp(-g * t) * g ** (1.0 / 1.8) / b))
    assert lambda_t(model, t) == pytest.approx(brute, rel=1e-12, abs=1e-300)


def test_lambda_t_single_mode(single_mode_15):
    for t in (0.1, 1.0, 3.0):
        assert lambda_t(single_mode_15, t) == pytest.approx(math.exp(-t), rel=1e-14)


def test_lambda_t_requires_positive_time(single_mode_15):
    with pytest.raises(ValueError):
        lambda_t(single_mode_15, 0.0)


def test_envelope_dominates_lambda_t():
    model = _rd_model()
    env = lambda_t_envelope(0.35, 1.8)
    t = np.geomspace(1e-4, 50.0, 1000)
    lam = np.array([lambda_t(model, ti) for ti in t])
    assert np.all(lam <= env(t) * (1.0 + 1e-12))


def test_example_arithmetic():
    alpha, p = 1.8, 1
    r_lo, r_hi = 1.0 / (2.0 * p * alpha), (alpha - 1.0) / alpha
    assert r_lo == pytest.approx(0.2777777777777778, abs=1e-12)
    assert r_hi == pytest.approx(0.4444444444444444, abs=1e-12)
    model, budget = reaction_diffusion_preset(p, alpha, 0.35)
    gamma = alpha / (alpha * 0.35 + 1.0)
    assert budget.gamma_exponent == pytest.approx(gamma, abs=1e-10)
    lo, hi = budget.beta_interval
    assert lo == pytest.approx(1.0 + alpha / 2.0 - gamma, abs=1e-10)
    assert hi == pytest.approx(1.0, abs=1e-12)


def test_preset_rejects_inadmissible_parameters():
    with pytest.raises(ValueError):
        reaction_diffusion_preset(1, 1.8, 0.5)
    with pytest.raises(ValueError):
        reaction_diffusion_preset(1, 1.4, 0.3)
    with pytest.raises(ValueError):
        reaction_diffusion_preset(0, 1.8, 0.35)


def test_c_lambda_monotone_in_lambda():
    model = _rd_model()
    vals = [c_lambda_integral(model, lam, 1.05) for lam in (1.0, 5.0, 25.0, 125.0)]
    assert all(v is not None for v in vals)
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))


def test_c_lambda_divergence_boundary():
    model = _rd_model()
    r, alpha = 0.35, 1.8
    q_crit = 1.0 / (r + 1.0 / alpha)
    assert c_lambda_integral(model, 1.0, q_crit + 0.01) is None
    assert c_lambda_integral(model, 1.0, q_crit - 0.05) is not None


def test_check_conditions_certified_for_power_rules():
    report = check_conditions(_rd_model())
    assert report.certified
    assert report.all_pass
    # direct series check for the beta sum: sum n^(-0.7*1.8) = zeta(1.26)
    from scipy.special import zeta

    assert report.sum_beta_alpha == pytest.approx(float(zeta(1.26)), rel=1e-6)
    assert report.sum_inv_gamma == pytest.approx(math.pi**2 / 6.0, rel=1e-6)


def test_check_conditions_divergent_series():
    model = SpectralModel(SequenceRule.power(1.0, 2.0), SequenceRule.power(1.0, -0.2), 4, 1.5)
    report = check_conditions(model)
    assert report.sum_beta_alpha is None
    assert not report.all_pass


def test_check_conditions_list_model_uncertified(two_mode_15):
    report = check_conditions(two_mode_15)
    assert not report.certified
    assert report.sum_beta_alpha == pytest.approx(1.0 + 0.6**1.5, rel=1e-12)


def test_admissible_beta_interval_domain():
    lo, hi = admissible_beta_interval(1.5, 1.8)
    assert (lo, hi) == (pytest.approx(0.4), 1.0)
    with pytest.raises(ValueError):
        admissible_beta_interval(0.9, 1.8)
    with pytest.raises(ValueError):
        admissible_beta_interval(1.9, 1.8)


def test_ou_scale_limits(single_mode_15):
    assert ou_scale(single_mode_15, 1, 0.0) == 0.0
    long_run = ou_scale(single_mode_15, 1, 200.0)
    assert long_run == pytest.approx((1.0 / 1.5) ** (1.0 / 1.5), rel=1e-12)
    ts = np.linspace(0.01, 5.0, 40)
    vals = [ou_scale(single_mode_15, 1, t) for t in ts]
    assert all(a < b for a, b in zip(vals, vals[1:]))


def test_ou_scales_matches_scalar(two_mode_15):
    vec = ou_scales(two_mode_15, 0.7)
    assert vec[0] == pytest.approx(ou_scale(two_mode_15, 1, 0.7), rel=1e-14)
    assert vec[1] == pytest.approx(ou_scale(two_mode_15, 2, 0.7), rel=1e-14)


def test_gronwall_sum_finite():
    v = spectral.gronwall_sum(_rd_model(), 1.0)
    assert 0.0 < v < 2.0
