"""End-to-end acceptance suite.

Each test prints a single pass/fail line for its criterion and asserts it.
Shared heavy artifacts (density tables, solved equations) are module
fixtures so the whole suite stays inside its time budget.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from stablespde import cli, kolmogorov, mehler, simulator, spectral, stable
from stablespde.registry import make_drift, make_testfn
from stablespde.rng import stream
from stablespde.spectral import (
    SequenceRule,
    SpectralModel,
    lambda_t,
    lambda_t_envelope,
    ou_scales,
    reaction_diffusion_preset,
)


def _verdict(name, ok):
    print(f"ACCEPTANCE {name}: {'PASS' if ok else 'FAIL'}")
    assert ok, name


@pytest.fixture(scope="module")
def tables():
    return {a: stable.build_density_table(a) for a in (1.0, 1.2, 1.5, 1.8)}


@pytest.fixture(scope="module")
def single_mode():
    return SpectralModel(
        SequenceRule.explicit([1.0]), SequenceRule.explicit([1.0]), 1, 1.5
    )


@pytest.fixture(scope="module")
def solved_equation(tables, single_mode):
    """lam=10 solution with the Holder drift, reused by criteria 4 and 5."""
    table = tables[1.5]
    drift = make_drift("holder-power", amp=0.3, exponent=0.75)
    axes = (np.linspace(-12.0, 12.0, 257),)
    F = kolmogorov.GridFunction.from_callable(axes, lambda p: drift(p)[:, 0])
    c_a = stable.c_alpha_constant(table)
    state = kolmogorov.solve_picard(
        F, F, single_mode, lam=10.0, table=table, c_alpha=c_a,
        gamma_exponent=1.5, drift_beta=0.75, stream=stream(5),
    )
    return state, F, axes


def test_1_stable_law_fidelity(tables):
    ok = True
    for alpha in (1.2, 1.5, 1.8):
        draws = stable.sample_standard(stable.StableLaw(alpha), 1_000_000, stream(101))
        for u in (0.5, 1.0, 2.0):
            est = float(np.mean(np.cos(u * draws)))
            ok &= abs(est - math.exp(-(u**alpha))) < 4e-3
        ok &= abs(tables[alpha].normalization() - 1.0) < 1e-6
    ok &= abs(stable.c_alpha_constant(tables[1.0]) - 0.5) < 1e-4
    _verdict("1 stable-law-fidelity", ok)


def test_2_spectral_functionals():
    ok = True
    model, budget = reaction_diffusion_preset(1, 1.8, 0.35, truncation=8)
    # brute-force agreement of the smoothing functional
    n = np.arange(1.0, 1_000_001.0)
    g = n**2.0
    b = g**-0.35
    for t in np.geomspace(1e-3, 30.0, 120):
        brute = float(np.max(np.exp(-g * t) * g ** (1.0 / 1.8) / b))
        ok &= abs(lambda_t(model, t) - brute) <= 1e-12 * brute
    # envelope dominance on 1000 probes
    env = lambda_t_envelope(0.35, 1.8)
    probes = np.geomspace(1e-4, 50.0, 1000)
    ok &= bool(np.all([lambda_t(model, t) <= env(t) * (1 + 1e-12) for t in probes]))
    # regularity-budget arithmetic for the p=1, alpha=1.8, r=0.35 example
    ok &= abs(budget.gamma_exponent - 1.1042944785276074) < 1e-10
    ok &= abs(budget.beta_interval[0] - 0.7957055214723925) < 1e-10
    ok &= abs(budget.beta_interval[1] - 1.0) < 1e-10
    _verdict("2 spectral-functionals", ok)


def _cos_oracles(model, x, t, u):
    damp = np.exp(-model.gammas() * t)
    scales = ou_scales(model, t)
    decay = math.exp(-float(np.sum(np.abs(u * scales) ** model.alpha)))
    phase = float(u @ (damp * x))
    value = math.cos(phase) * decay
    grad = lambda h: -math.sin(phase) * float(u @ (damp * h)) * decay
    hess = lambda h, g: -math.cos(phase) * float(u @ (damp * h)) * float(u @ (damp * g)) * decay
    return value, grad, hess


def test_3_mehler_derivative_formulas(tables, single_mode):
    table = tables[1.5]
    ok = True
    f = make_testfn("cos-linear", arity=1)
    x = np.array([0.7])
    h = np.array([1.0])
    u = np.ones(1)
    for i, t in enumerate((0.1, 0.25, 0.5, 1.0, 2.0)):
        _, grad, hess = _cos_oracles(single_mode, x, t, u)
        ge = mehler.gradient(f, single_mode, x, h, t, 100_000, stream(120 + i), table)
        he = mehler.hessian_action(
            f, single_mode, x, h, h, t, 100_000, stream(140 + i), table
        )
        ok &= abs(ge.value - grad(h)) <= 3.0 * ge.std_error
        ok &= abs(he.value - hess(h, h)) <= 3.0 * he.std_error
    # score estimators vanish for the constant function
    one = make_testfn("constant", arity=1)
    g0 = mehler.gradient(one, single_mode, x, h, 0.5, 100_000, stream(160), table)
    h0 = mehler.hessian_action(one, single_mode, x, h, h, 0.5, 100_000, stream(161), table)
    ok &= abs(g0.value) <= 3.0 * g0.std_error
    ok &= abs(h0.value) <= 3.0 * h0.std_error
    # bound suites over 100 random tuples with the computed score constants
    c_a = stable.c_alpha_constant(table)
    q2 = stable.curvature_constant(table)
    rng = np.random.default_rng(7)
    violations = 0
    for i in range(100):
        t = float(rng.uniform(0.05, 3.0))
        xx = rng.uniform(-3.0, 3.0, 1)
        hh = np.array([rng.choice([-1.0, 1.0])])
        gg = np.array([rng.choice([-1.0, 1.0])])
        ge = mehler.gradient(f, single_mode, xx, hh, t, 10_000, stream(200 + i), table)
        if abs(ge.value) > mehler.gradient_sup_bound(single_mode, t, c_a, hh) + 3.0 * ge.std_error:
            violations += 1
        he = mehler.hessian_action(
            f, single_mode, xx, hh, gg, t, 10_000, stream(300 + i), table
        )
        bound2 = mehler.hessian_sup_bound(single_mode, t, c_a, q2, hh, gg)
        if abs(he.value) > bound2 + 3.0 * he.std_error:
            violations += 1
    ok &= violations == 0
    _verdict("3 mehler-derivative-formulas", ok)


def _resolvent_oracle(table, lam, F, x):
    """Independent quadrature of int_0^inf exp(-lam t) R_t F(x) dt at a point."""
    s = np.concatenate(
        [-np.geomspace(8.0, 35.0, 80)[::-1], np.arange(-8.0, 8.0, 1.0 / 128.0),
         np.geomspace(8.0, 35.0, 80)]
    )
    p = table.pdf(s)
    w = np.zeros_like(s)
    ds = np.diff(s)
    w[:-1] += 0.5 * ds * p[:-1]
    w[1:] += 0.5 * ds * p[1:]

    def rt(t):
        d = math.exp(-t)
        c = (-math.expm1(-1.5 * t) / 1.5) ** (1.0 / 1.5)
        return float(w @ F((d * x + c * s)[:, None])[:, 0])

    val, _ = quad(lambda t: math.exp(-lam * t) * rt(t), 1e-7, 40.0 / lam, limit=300)
    return val


def test_4_kolmogorov_solver(tables, single_mode):
    table = tables[1.5]
    ok = True
    axes = (np.linspace(-12.0, 12.0, 257),)
    source = make_testfn("holder-power", arity=1, exponent=0.75)
    F = kolmogorov.GridFunction.from_callable(axes, source.evaluator)
    zero = kolmogorov.GridFunction(axes, np.zeros((257, 1)))
    c_a = stable.c_alpha_constant(table)
    state0 = kolmogorov.solve_picard(
        F, zero, single_mode, lam=10.0, table=table, c_alpha=c_a,
        gamma_exponent=1.5, drift_beta=0.75, stream=stream(6),
    )
    probes = np.linspace(-4.0, 4.0, 17)
    sup_err = 0.0
    for x in probes:
        oracle = _resolvent_oracle(table, 10.0, F.evaluate, float(x))
        got = float(state0.iterate.evaluate(np.array([[x]]))[0, 0])
        sup_err = max(sup_err, abs(got - oracle))
    ok &= sup_err < 1e-3
    # geometric decay of successive Picard norms with the Holder drift
    drift = make_drift("holder-power", amp=0.3, exponent=0.75)
    B = kolmogorov.GridFunction.from_callable(axes, lambda p: drift(p)[:, 0])
    state = kolmogorov.solve_picard(
        B, B, single_mode, lam=10.0, table=table, c_alpha=c_a,
        gamma_exponent=1.5, drift_beta=0.75, stream=stream(5),
    )
    norms = state.successive_norms
    ok &= state.contraction_bound < 1.0
    ok &= all(b / a < state.contraction_bound + 0.05 for a, b in zip(norms, norms[1:]))
    # resolvent gain shrinks along the lambda ladder
    ratios = []
    for lam in (5.0, 10.0, 20.0, 40.0):
        st = kolmogorov.solve_picard(
            B, B, single_mode, lam=lam, table=table, c_alpha=c_a,
            gamma_exponent=1.5, drift_beta=0.75, stream=stream(5),
        )
        ratios.append(st.iterate.sup_norm() / B.sup_norm())
    ok &= all(a > b for a, b in zip(ratios, ratios[1:]))
    _verdict("4 kolmogorov-solver", ok)


def test_5_generator_symbol(tables, solved_equation, single_mode):
    ok = True
    levy_c = stable.levy_constant(1.5)
    beta1 = 0.8
    model = SpectralModel(
        SequenceRule.explicit([1.0]), SequenceRule.explicit([beta1]), 1, 1.5
    )
    for u in (0.5, 1.0, 2.0):
        fn = lambda pts: np.cos(u * np.atleast_2d(pts)[:, 0])
        for x in (0.0, 0.4):
            out = kolmogorov.generator_apply(fn, model, np.array([x]), levy_c, delta=1e-3)
            drift_part = -1.0 * x * (-u * math.sin(u * x))
            jump = float(out[0]) - drift_part
            ok &= abs(jump - (-(beta1**1.5) * u**1.5 * math.cos(u * x))) < 1e-3
    # double-increment inequality on 10^4 random triples
    state, F, _ = solved_equation
    c_lam = spectral.c_lambda_integral(single_mode, 10.0, state.norm_index - 0.75)
    report = kolmogorov.verify_estimates(
        state, F, F, single_mode, 0.75, c_lam, stream(9), n_triples=10_000
    )
    ok &= report["double_increment_pass_rate"] >= 0.99
    _verdict("5 generator-symbol", ok)


def test_6_ito_zvonkin_residuals(tables, solved_equation, single_mode):
    ok = True
    levy_c = stable.levy_constant(1.5)
    f = lambda p: np.cos(np.atleast_2d(p)[:, 0])
    terms = []
    for rep in range(1000):
        cfg = simulator.SimConfig(
            model=single_mode, drift=lambda p: np.zeros((np.atleast_2d(p).shape[0], 1)),
            drift_name="zero", x0=np.array([0.5]), dt=1.0 / 64, horizon=0.5,
            noise_mode="skeleton", seed=1000 + rep, epsilon=0.05, base_cells=8,
        )
        sk = simulator.NoiseSkeleton.build(single_mode, 0.5, 0.05, 8, 1000 + rep)
        path = simulator.simulate_path(cfg, skeleton=sk)
        terms.append(simulator.ito_residual(path, f, single_mode, sk, levy_c)[-1, 0])
    terms = np.array(terms)
    se = float(terms.std(ddof=1) / math.sqrt(terms.size))
    ok &= abs(float(terms.mean())) <= 3.0 * se
    # transformed mild identity defect decreases along the dt ladder
    state, _, _ = solved_equation
    drift = make_drift("holder-power", amp=0.3, exponent=0.75)
    medians = []
    for dt in (1.0 / 16, 1.0 / 32, 1.0 / 64):
        vals = []
        for rep in range(30):
            cfg = simulator.SimConfig(
                model=single_mode, drift=drift, drift_name="holder",
                x0=np.array([0.5]), dt=dt, horizon=0.5, noise_mode="skeleton",
                seed=40 + rep, epsilon=0.05, base_cells=8,
            )
            sk = simulator.NoiseSkeleton.build(single_mode, 0.5, 0.05, 8, 40 + rep)
            path = simulator.simulate_path(cfg, skeleton=sk)
            res = simulator.zvonkin_identity_residual(
                path, state.iterate, single_mode, 10.0, sk, levy_c
            )
            vals.append(float(res[-1]))
        medians.append(float(np.median(vals)))
    ok &= medians[0] > medians[1] > medians[2]
    _verdict("6 ito-zvonkin-residuals", ok)


def test_7_pathwise_uniqueness_surrogate():
    ok = True
    drift = make_drift("holder-power", amp=0.3, exponent=0.9)
    for n_modes in (1, 4):
        model, _ = reaction_diffusion_preset(1, 1.8, 0.35, truncation=n_modes)
        cfg = simulator.SimConfig(
            model=model, drift=drift, drift_name="holder-power",
            x0=np.full(n_modes, 0.5), dt=1.0 / 128, horizon=0.5,
            noise_mode="skeleton", seed=500, epsilon=0.05, base_cells=4,
        )
        out = simulator.shared_noise_refinement_experiment(
            cfg, [1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128], replicates=200
        )
        medians = [float(np.median(out["distances"][dt])) for dt in out["levels"]]
        ok &= all(a > b for a, b in zip(medians, medians[1:]))
    _verdict("7 pathwise-uniqueness-surrogate", ok)


def test_8_determinism(tmp_path):
    ok = True
    runs = [
        (["sample", "--alpha", "1.5", "--count", "100000", "--seed", "2",
          "--skip-table"], "char_fn.txt"),
        (["semigroup", "--alpha", "1.5", "--fn", "cos-linear", "--oracle",
          "--samples", "20000", "--seed", "3"], "semigroup.txt"),
    ]
    for i, (argv, record) in enumerate(runs):
        first = tmp_path / f"run{i}"
        second = tmp_path / f"replay{i}"
        rc = cli.main(argv + ["--out", str(first)])
        ok &= rc == cli.EXIT_OK
        rc = cli.replay(first / "manifest.txt", second)
        ok &= rc == cli.EXIT_OK
        ok &= (first / record).read_bytes() == (second / record).read_bytes()
    _verdict("8 determinism", ok)
