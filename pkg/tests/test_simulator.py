import math

import numpy as np
import pytest

from stablespde import kolmogorov as K
from stablespde import simulator as sim
from stablespde import stable
from stablespde.registry import make_drift
from stablespde.rng import stream


def _zero_drift(pts):
    pts = np.atleast_2d(pts)
    return np.zeros((pts.shape[0], 1))


def _config(model, drift=_zero_drift, name="zero", dt=1.0 / 64, horizon=0.5, seed=3,
            noise="skeleton", x0=None):
    if x0 is None:
        x0 = np.full(model.truncation, 0.5)
    return sim.SimConfig(
        model=model, drift=drift, drift_name=name, x0=x0, dt=dt, horizon=horizon,
        noise_mode=noise, seed=seed, epsilon=0.05, base_cells=8,
    )


def test_constant_drift_closed_form(single_mode_15):
    # with no noise injected, exponential Euler is exact for constant drift
    cfg = _config(single_mode_15, drift=lambda p: np.full((np.atleast_2d(p).shape[0], 1), 0.7),
                  name="const", noise="skeleton", dt=1.0 / 64, horizon=0.5, seed=1)
    sk = sim.NoiseSkeleton.build(single_mode_15, 0.5, 0.05, 8, 1)
    sk.var_rate = 0.0
    sk.big_jumps = [[]]
    path = sim.simulate_path(cfg, skeleton=sk)
    t = path.times
    exact = math.exp(-t[-1]) * 0.5 + 0.7 * (1.0 - math.exp(-t[-1]))
    assert path.states[-1, 0] == pytest.approx(exact, abs=1e-12)


def test_skeleton_refinement_conserves_increments(single_mode_15):
    sk = sim.NoiseSkeleton.build(single_mode_15, 1.0, 0.05, 4, 9)
    base = sk.increments(0)
    fine = sk.increments(3)
    regrouped = fine.reshape(1, 4, 8).sum(axis=2)
    assert np.allclose(regrouped, base, atol=1e-14)


def test_skeleton_level_for_dt(single_mode_15):
    sk = sim.NoiseSkeleton.build(single_mode_15, 1.0, 0.05, 4, 9)
    assert sk.level_for_dt(0.25) == 0
    assert sk.level_for_dt(0.125) == 1
    with pytest.raises(ValueError):
        sk.level_for_dt(0.1)


def test_big_jumps_magnitude_above_threshold(single_mode_15):
    sk = sim.NoiseSkeleton.build(single_mode_15, 2.0, 0.1, 4, 11)
    for events in sk.big_jumps:
        for t, z in events:
            assert abs(z) >= 0.1


def test_config_digest_sensitivity(single_mode_15):
    a = _config(single_mode_15, seed=1).digest()
    b = _config(single_mode_15, seed=2).digest()
    c = _config(single_mode_15, seed=1).digest()
    assert a != b
    assert a == c


def test_simulate_rejects_bad_steps(single_mode_15):
    cfg = _config(single_mode_15, dt=0.3, horizon=0.5)
    with pytest.raises(ValueError):
        sim.simulate_path(cfg)


def test_refinement_distances_decrease(single_mode_15):
    cfg = _config(single_mode_15, dt=1.0 / 64, horizon=0.5, seed=5)
    out = sim.shared_noise_refinement_experiment(
        cfg, [1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128], replicates=10
    )
    medians = [float(np.median(out["distances"][dt])) for dt in out["levels"]]
    assert all(a > b for a, b in zip(medians, medians[1:]))


def test_refinement_requires_skeleton_mode(single_mode_15):
    cfg = _config(single_mode_15, noise="exact-increment")
    with pytest.raises(ValueError):
        sim.shared_noise_refinement_experiment(cfg, [0.25, 0.125])


def test_exact_increments_match_semigroup_law(single_mode_15):
    # terminal law of the driftless path equals the one-shot convolution law
    from scipy.stats import ks_2samp

    from stablespde import mehler

    t_end = 0.5
    terminals = []
    for rep in range(400):
        cfg = _config(single_mode_15, noise="exact-increment", seed=1000 + rep, dt=1.0 / 32,
                      horizon=t_end)
        terminals.append(sim.simulate_path(cfg).states[-1, 0])
    direct = mehler.sample_ou_state(
        single_mode_15, np.array([0.5]), t_end, stream(77), count=400
    )[:, 0]
    assert ks_2samp(np.array(terminals), direct).pvalue > 1e-3


def test_ito_residual_zero_drift_centered(single_mode_15):
    levy_c = stable.levy_constant(1.5)
    f = lambda p: np.cos(np.atleast_2d(p)[:, 0])
    terms = []
    for rep in range(60):
        cfg = _config(single_mode_15, seed=300 + rep, dt=1.0 / 64, horizon=0.5)
        sk = sim.NoiseSkeleton.build(single_mode_15, 0.5, 0.05, 8, 300 + rep)
        path = sim.simulate_path(cfg, skeleton=sk)
        terms.append(sim.ito_residual(path, f, single_mode_15, sk, levy_c)[-1, 0])
    terms = np.array(terms)
    se = terms.std(ddof=1) / math.sqrt(terms.size)
    assert abs(terms.mean()) <= 4.0 * se + 1e-3


def test_zvonkin_residual_vanishes_without_drift(single_mode_15):
    levy_c = stable.levy_constant(1.5)
    cfg = _config(single_mode_15, seed=5, dt=1.0 / 64, horizon=0.5)
    sk = sim.NoiseSkeleton.build(single_mode_15, 0.5, 0.05, 8, 5)
    path = sim.simulate_path(cfg, skeleton=sk)
    zero_u = K.GridFunction((np.linspace(-12, 12, 9),), np.zeros((9, 1)))
    res = sim.zvonkin_identity_residual(path, zero_u, single_mode_15, 10.0, sk, levy_c)
    assert np.max(res) < 1e-12


def test_zvonkin_residual_decreases_with_dt(single_mode_15, table_15):
    levy_c = stable.levy_constant(1.5)
    drift = make_drift("holder-power", amp=0.3, exponent=0.75)
    axes = (np.linspace(-12, 12, 257),)
    F = K.GridFunction.from_callable(axes, lambda p: drift(p)[:, 0])
    c_a = stable.c_alpha_constant(table_15)
    state = K.solve_picard(
        F, F, single_mode_15, lam=10.0, table=table_15, c_alpha=c_a,
        gamma_exponent=1.5, drift_beta=0.75, stream=stream(5),
    )
    med = []
    for dt in (1.0 / 16, 1.0 / 32, 1.0 / 64):
        vals = []
        for rep in range(30):
            cfg = _config(single_mode_15, drift=drift, name="holder", dt=dt, horizon=0.5,
                          seed=40 + rep)
            sk = sim.NoiseSkeleton.build(single_mode_15, 0.5, 0.05, 8, 40 + rep)
            path = sim.simulate_path(cfg, skeleton=sk)
            res = sim.zvonkin_identity_residual(
                path, state.iterate, single_mode_15, 10.0, sk, levy_c
            )
            vals.append(res[-1])
        med.append(float(np.median(vals)))
    assert med[0] > med[1] > med[2]


def test_zvonkin_requires_matching_codomain(single_mode_15):
    levy_c = stable.levy_constant(1.5)
    cfg = _config(single_mode_15, seed=5, dt=1.0 / 64, horizon=0.5)
    sk = sim.NoiseSkeleton.build(single_mode_15, 0.5, 0.05, 8, 5)
    path = sim.simulate_path(cfg, skeleton=sk)
    wide_u = K.GridFunction((np.linspace(-12, 12, 9),), np.zeros((9, 2)))
    with pytest.raises(ValueError):
        sim.zvonkin_identity_residual(path, wide_u, single_mode_15, 10.0, sk, levy_c)
