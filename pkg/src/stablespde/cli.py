"""Command-line orchestration: subcommand dispatch, registries, manifests.

Subcommands: check | sample | semigroup | kolmogorov | simulate | experiment.
Every run writes delimited record files (one-line ``#`` schema header) plus
a manifest that pins the resolved argument vector and seed, so re-running
from the manifest reproduces the records byte for byte.

Exit codes: 0 pass, 2 suite failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import math
import shlex
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kolmogorov, mehler, simulator, spectral, stable
from .registry import make_drift, make_testfn, registry_lookup
from .rng import stream

__all__ = ["main", "RunManifest", "load_manifest", "replay", "load_gridfunction"]

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_USAGE = 64

_VERSION = "1.0.0"


class _Parser(argparse.ArgumentParser):
    """argparse with the usage-error exit code of scriptable tools (64)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Manifest plumbing
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    subcommand: str
    argv: list[str]
    config_hash: str
    seed: int
    version: str = _VERSION
    table_key: str = "none"
    outputs: list[str] = field(default_factory=list)
    wall_clock: float = 0.0


def _write_manifest(man: RunManifest, out_dir: Path) -> Path:
    path = out_dir / "manifest.txt"
    lines = [
        f"subcommand={man.subcommand}",
        f"argv={shlex.join(man.argv)}",
        f"config_hash={man.config_hash}",
        f"seed={man.seed}",
        f"version={man.version}",
        f"table_key={man.table_key}",
    ]
    lines += [f"output={o}" for o in man.outputs]
    lines.append(f"wall_clock={man.wall_clock!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_manifest(path) -> RunManifest:
    man = RunManifest("", [], "", 0)
    for line in Path(path).read_text().splitlines():
        key, _, val = line.partition("=")
        if key == "subcommand":
            man.subcommand = val
        elif key == "argv":
            man.argv = shlex.split(val)
        elif key == "config_hash":
            man.config_hash = val
        elif key == "seed":
            man.seed = int(val)
        elif key == "version":
            man.version = val
        elif key == "table_key":
            man.table_key = val
        elif key == "output":
            man.outputs.append(val)
        elif key == "wall_clock":
            man.wall_clock = float(val)
    return man


def replay(manifest_path, out_dir) -> int:
    """Re-execute a recorded run, redirecting outputs to out_dir."""
    man = load_manifest(manifest_path)
    argv = list(man.argv)
    if "--out" in argv:
        argv[argv.index("--out") + 1] = str(out_dir)
    else:
        argv += ["--out", str(out_dir)]
    if "--seed" not in argv:
        argv += ["--seed", str(man.seed)]
    return main(argv)


def _records(path: Path, header: str, rows) -> None:
    """Delimited records with a one-line schema header; repr floats."""
    lines = [f"# {header}"]
    for row in rows:
        lines.append("\t".join(repr(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return int(args.seed)
    return int(np.random.SeedSequence().entropy % 2**32)


def _finish(args, name: str, out_dir: Path, outputs: list[str], seed: int, table_key="none"):
    payload = shlex.join(args._argv)
    man = RunManifest(
        subcommand=name,
        argv=args._argv,
        config_hash=hashlib.sha256(payload.encode()).hexdigest()[:16],
        seed=seed,
        table_key=table_key,
        outputs=outputs,
        wall_clock=time.time(),
    )
    _write_manifest(man, out_dir)


# ---------------------------------------------------------------------------
# Model construction shared by subcommands
# ---------------------------------------------------------------------------


def _add_model_flags(sp):
    sp.add_argument("--preset", default="single", help="model preset: single | rd")
    sp.add_argument("--alpha", type=float, default=1.5)
    sp.add_argument("--p", type=int, default=1, help="rd preset: Laplacian power")
    sp.add_argument("--r", type=float, default=0.35, help="rd preset: amplitude decay ratio")
    sp.add_argument("--truncation", type=int, default=4)
    sp.add_argument("--gamma1", type=float, default=1.0, help="single preset: gamma_1")
    sp.add_argument("--beta1", type=float, default=1.0, help="single preset: beta_1")


def _build_model(args):
    """Returns (model, budget-or-None)."""
    if args.preset == "rd":
        factory = registry_lookup("preset", "rd")
        return factory(args.p, args.alpha, args.r, truncation=args.truncation)
    if args.preset == "single":
        model = spectral.SpectralModel(
            gamma_rule=spectral.SequenceRule.explicit([args.gamma1]),
            beta_rule=spectral.SequenceRule.explicit([args.beta1]),
            truncation=1,
            alpha=args.alpha,
        )
        return model, None
    raise KeyError(f"unknown preset {args.preset!r}; available: ['rd', 'single']")


def _full_drift(drift, n_modes):
    """Broadcast a scalar drift field to the leading mode of an N-vector."""

    def B(pts):
        vals = np.asarray(drift(np.atleast_2d(pts)), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.shape[-1] == 1 and n_modes > 1:
            out = np.zeros((vals.shape[0], n_modes))
            out[:, 0] = vals[:, 0]
            return out
        return vals

    return B


# ---------------------------------------------------------------------------
# GridFunction serialization (consumed by the simulate subcommand)
# ---------------------------------------------------------------------------


def dump_gridfunction(u: kolmogorov.GridFunction, path: Path) -> None:
    lines = [f"# gridfunction dims={u.dims} codim={u.codim}"]
    for d, a in enumerate(u.axes):
        lines.append(f"# axis{d} lo={float(a[0])!r} hi={float(a[-1])!r} n={a.size}")
    flat = u.values.reshape(-1, u.codim)
    for row in flat:
        lines.append("\t".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def load_gridfunction(path) -> kolmogorov.GridFunction:
    lines = Path(path).read_text().splitlines()
    head = dict(tok.split("=") for tok in lines[0].split() if "=" in tok)
    dims = int(head["dims"])
    codim = int(head["codim"])
    axes = []
    for d in range(dims):
        parts = dict(tok.split("=") for tok in lines[1 + d].split()[2:])
        axes.append(np.linspace(float(parts["lo"]), float(parts["hi"]), int(parts["n"])))
    vals = np.array(
        [[float(v) for v in ln.split("\t")] for ln in lines[1 + dims :] if ln], dtype=float
    )
    shape = tuple(a.size for a in axes) + (codim,)
    return kolmogorov.GridFunction(tuple(axes), vals.reshape(shape))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_check(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args)
    model, budget = _build_model(args)
    report = spectral.check_conditions(model)
    rows = [
        ("alpha", float(model.alpha)),
        ("truncation", model.truncation),
        ("certified", report.certified),
        ("sum_beta_alpha", _opt(report.sum_beta_alpha)),
        ("sum_inv_gamma", _opt(report.sum_inv_gamma)),
        ("gamma_exponent", _opt(report.gamma_exponent)),
        ("all_pass", report.all_pass),
    ]
    if budget is not None:
        rows += [
            ("beta_interval_lo", float(budget.beta_interval[0])),
            ("beta_interval_hi", float(budget.beta_interval[1])),
            ("picard_norm_index", float(budget.picard_norm_index)),
        ]
    _records(out_dir / "report.txt", "field\tvalue", rows)
    probe_rows = [(q, lam, _opt(v)) for (q, lam, v) in report.lambda_probe]
    _records(out_dir / "lambda_probes.txt", "exponent\tlambda\tintegral", probe_rows)
    for k, v in rows:
        print(f"{k}: {v}")
    _finish(args, "check", out_dir, ["report.txt", "lambda_probes.txt"], seed)
    return EXIT_OK if report.all_pass else EXIT_FAIL


def _opt(v):
    return float(v) if v is not None else "divergent"


def _cmd_sample(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args)
    law = stable.StableLaw(args.alpha)
    draws = stable.sample_standard(law, args.count, stream(seed, 0))
    probes = [float(u) for u in args.probes.split(",")]
    rows = []
    ok = True
    for u in probes:
        cf = float(np.mean(np.cos(u * draws)))
        oracle = math.exp(-abs(u) ** args.alpha)
        stderr = float(np.std(np.cos(u * draws), ddof=1) / math.sqrt(args.count))
        status = abs(cf - oracle) <= args.tol
        ok &= status
        rows.append((u, cf, stderr, oracle, "pass" if status else "FAIL"))
    table_key = "none"
    if not args.skip_table:
        table = stable.build_density_table(args.alpha)
        norm = table.normalization()
        status = abs(norm - 1.0) <= 1e-5
        ok &= status
        rows.append(("normalization", norm, 0.0, 1.0, "pass" if status else "FAIL"))
        table_key = f"alpha={args.alpha!r}"
        if args.dump_table:
            stable.save_table(table, str(out_dir / "density_table.txt"))
    _records(out_dir / "char_fn.txt", "u\testimate\tstderr\toracle\tstatus", rows)
    if args.dump_samples:
        _records(out_dir / "samples.txt", "draw", [(float(v),) for v in draws])
    for row in rows:
        print("\t".join(str(v) for v in row))
    outputs = ["char_fn.txt"] + (["samples.txt"] if args.dump_samples else [])
    _finish(args, "sample", out_dir, outputs, seed, table_key)
    return EXIT_OK if ok else EXIT_FAIL


def _cos_oracle(model, x, t, u):
    damp = np.exp(-model.gammas() * t)
    scales = spectral.ou_scales(model, t)
    return float(np.cos(u @ (damp * x)) * math.exp(-np.sum(np.abs(u * scales) ** model.alpha)))


def _cmd_semigroup(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args)
    model, _ = _build_model(args)
    n = model.truncation
    f = make_testfn(args.fn, arity=n)
    x = np.array([float(v) for v in args.x.split(",")], dtype=float)
    if x.size == 1 and n > 1:
        x = np.full(n, x[0])
    ladder = [float(t) for t in args.t_ladder.split(",")]
    rows = []
    ok = True
    for i, t in enumerate(ladder):
        est = mehler.apply(f, model, x, t, args.samples, stream(seed, i))
        oracle = ""
        if args.oracle:
            if args.fn != "cos-linear":
                raise SystemExit("closed-form oracle is only available for --fn cos-linear")
            oracle = _cos_oracle(model, x, t, np.ones(n))
            status = abs(est.value - oracle) <= 3.0 * est.std_error + 1e-12
        else:
            status = abs(est.value) <= f.bound_sup + 1e-12
        ok &= status
        rows.append(
            (t, est.value, est.std_error, f.bound_sup, oracle, "pass" if status else "FAIL")
        )
    _records(
        out_dir / "semigroup.txt", "t\testimate\tstderr\tbound\toracle\tstatus", rows
    )
    for row in rows:
        print("\t".join(str(v) for v in row))
    _finish(args, "semigroup", out_dir, ["semigroup.txt"], seed, f"alpha={model.alpha!r}")
    return EXIT_OK if ok else EXIT_FAIL


def _cmd_kolmogorov(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = _resolve_seed(args)
    model, budget = _build_model(args)
    n = model.truncation
    if n > 3:
        raise SystemExit("grid solver supports at most 3 modes; lower --truncation")
    lo, hi, count = args.grid.split(":")
    axes = tuple(np.linspace(float(lo), float(hi), int(count)) for _ in range(n))
    drift = make_drift(args.drift, amp=args.drift_amp, exponent=args.drift_exponent)
    drift_beta = getattr(drift, "holder_exponent", args.drift_exponent)
    source = make_testfn(args.source, arity=n)
    F = kolmogorov.GridFunction.from_callable(axes, source.evaluator)
    B = kolmogorov.GridFunction.from_callable(axes, _full_drift(drift, n))
    table = stable.build_density_table(model.alpha)
    c_a = stable.c_alpha_constant(table)
    gamma_exp = budget.gamma_exponent if budget is not None else model.alpha
    state = kolmogorov.solve_picard(
        F,
        B,
        model,
        lam=args.lam,
        table=table,
        c_alpha=c_a,
        gamma_exponent=gamma_exp,
        drift_beta=drift_beta,
        theta=args.theta,
        stream=stream(seed, 7),
        t_nodes=args.t_nodes,
    )
    rows = [
        ("lambda", float(state.lam)),
        ("theta", float(state.theta)),
        ("norm_index", float(state.norm_index)),
        ("iterations", state.iteration),
        ("contraction_bound", float(state.contraction_bound)),
    ]
    rows += [(f"successive_norm_{i}", float(v)) for i, v in enumerate(state.successive_norms)]
    _records(out_dir / "picard.txt", "field\tvalue", rows)
    dump_gridfunction(state.iterate, out_dir / "solution.txt")
    for k, v in rows:
        print(f"{k}: {v}")
    _finish(
        args, "kolmogorov", out_dir, ["picard.txt", "solution.txt"], seed,
        f"alpha={model.alpha!r}",
    )
    converged = state.successive_norms[-1] < state.successive_norms[0]
    return EXIT_OK if converged else EXIT_FAIL


def _model_from_config(cfg):
    sec = cfg["model"]
    preset = sec.get("preset", "single")
    alpha = sec.getfloat("alpha", 1.5)
    if preset == "rd":
        factory = registry_lookup("preset", "rd")
        model, _ = factory(
            sec.getint("p", 1), alpha, sec.getfloat("r", 0.35), sec.getint("truncation", 4)
        )
        return model
    if preset == "single":
        return spectral.SpectralModel(
            spectral.SequenceRule.explicit([sec.getfloat("gamma1", 1.0)]),
            spectral.SequenceRule.explicit([sec.getfloat("beta1", 1.0)]),
            1,
            alpha,
        )
    raise KeyError(f"unknown preset {preset!r} in config")


def _simconfig_from_file(path, seed_override=None, dt=None):
    cfg = configparser.ConfigParser()
    if not cfg.read(path):
        raise SystemExit(f"cannot read config file {path}")
    model = _model_from_config(cfg)
    dsec = cfg["drift"] if cfg.has_section("drift") else {}
    drift_name = dsec.get("name", "zero")
    drift = make_drift(
        drift_name,
        amp=float(dsec.get("amp", 0.3)),
        exponent=float(dsec.get("exponent", 0.75)),
        slope=float(dsec.get("slope", 1.0)),
        cap=float(dsec.get("cap", 1.0)),
    )
    sec = cfg["simulation"]
    x0 = np.array([float(v) for v in sec.get("x0", "0.0").split(",")])
    if x0.size == 1 and model.truncation > 1:
        x0 = np.full(model.truncation, x0[0])
    seed = seed_override if seed_override is not None else sec.getint("seed", 0)
    sim_cfg = simulator.SimConfig(
        model=model,
        drift=_full_drift(drift, model.truncation),
        drift_name=drift_name,
        x0=x0,
        dt=dt if dt is not None else sec.getfloat("dt", 1.0 / 64),
        horizon=sec.getfloat("horizon", 1.0),
        noise_mode=sec.get("noise", "skeleton"),
        seed=seed,
        epsilon=sec.getfloat("epsilon", 0.05),
        base_cells=sec.getint("base_cells", 8),
    )
    ladder = [float(v) for v in sec.get("dt_ladder", "").split(",") if v.strip()]
    replicates = sec.getint("replicates", 8)
    return sim_cfg, ladder, replicates


def _cmd_simulate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg, _, _ = _simconfig_from_file(args.config, seed_override=args.seed)
    seed = cfg.seed
    path = simulator.simulate_path(cfg)
    n = cfg.model.truncation
    header = "t\t" + "\t".join(f"x{k + 1}" for k in range(n))
    rows = [
        tuple([float(t)] + [float(v) for v in row])
        for t, row in zip(path.times, path.states)
    ]
    _records(out_dir / "path.txt", header, rows)
    outputs = ["path.txt"]
    if args.residual_fn is not None:
        if cfg.noise_mode != "skeleton":
            raise SystemExit("residual series require skeleton noise mode")
        sk = simulator.NoiseSkeleton.build(
            cfg.model, cfg.horizon, cfg.epsilon, cfg.base_cells, cfg.seed
        )
        f = make_testfn(args.residual_fn, arity=n)
        res = simulator.ito_residual(
            simulator.simulate_path(cfg, skeleton=sk),
            f,
            cfg.model,
            sk,
            stable.levy_constant(cfg.model.alpha),
            drift=cfg.drift,
        )
        _records(
            out_dir / "residual.txt",
            "t\tresidual",
            [(float(t), float(r[0])) for t, r in zip(path.times, res)],
        )
        outputs.append("residual.txt")
    print(f"steps={path.times.size - 1} terminal={path.states[-1].tolist()}")
    _finish(args, "simulate", out_dir, outputs, seed)
    return EXIT_OK


def _cmd_experiment(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg, ladder, replicates = _simconfig_from_file(args.config, seed_override=args.seed)
    seed = cfg.seed
    if len(ladder) < 2:
        raise SystemExit("config must set simulation.dt_ladder with at least two levels")
    result = simulator.shared_noise_refinement_experiment(cfg, ladder, replicates)
    rows = []
    for dt in result["levels"]:
        for rep, dist in enumerate(result["distances"][dt]):
            rows.append((rep, float(dt), float(dist)))
    _records(out_dir / "distances.txt", "replicate\tdt\tsup_distance", rows)
    outputs = ["distances.txt"]
    medians = [
        (i, float(dt), float(np.median(result["distances"][dt])))
        for i, dt in enumerate(result["levels"])
    ]
    if args.emit_plot_data:
        _records(out_dir / "plot.txt", "level\tdt\tmedian_distance", medians)
        outputs.append("plot.txt")
    for level, dt, med in medians:
        print(f"level={level} dt={dt} median_distance={med}")
    _finish(args, "experiment", out_dir, outputs, seed)
    vals = [m[2] for m in medians]
    decreasing = all(a > b for a, b in zip(vals, vals[1:])) if len(vals) > 1 else True
    return EXIT_OK if decreasing else EXIT_FAIL


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="stablespde", description=__doc__)
    sub = parser.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default="stablespde-out")

    sp = sub.add_parser("check", help="verify model admissibility conditions")
    _add_model_flags(sp)
    common(sp)

    sp = sub.add_parser("sample", help="draw stable variates and check the law")
    sp.add_argument("--alpha", type=float, default=1.5)
    sp.add_argument("--count", type=int, default=200_000)
    sp.add_argument("--probes", default="0.5,1,2")
    sp.add_argument("--tol", type=float, default=4e-3)
    sp.add_argument("--skip-table", action="store_true")
    sp.add_argument("--dump-table", action="store_true")
    sp.add_argument("--dump-samples", action="store_true")
    common(sp)

    sp = sub.add_parser("semigroup", help="Monte Carlo semigroup evaluation")
    _add_model_flags(sp)
    sp.add_argument("--fn", default="cos-linear")
    sp.add_argument("--t-ladder", default="0.1,0.25,0.5,1.0,2.0")
    sp.add_argument("--samples", type=int, default=50_000)
    sp.add_argument("--x", default="0.5")
    sp.add_argument("--oracle", action="store_true")
    common(sp)

    sp = sub.add_parser("kolmogorov", help="solve the nonlocal elliptic equation")
    _add_model_flags(sp)
    sp.add_argument("--lam", type=float, default=10.0)
    sp.add_argument("--theta", type=float, default=None)
    sp.add_argument("--grid", default="-12:12:257", help="lo:hi:count per mode")
    sp.add_argument("--drift", default="zero")
    sp.add_argument("--drift-amp", type=float, default=0.3)
    sp.add_argument("--drift-exponent", type=float, default=0.75)
    sp.add_argument("--source", default="holder-power")
    sp.add_argument("--t-nodes", type=int, default=257)
    common(sp)

    sp = sub.add_parser("simulate", help="integrate one path from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--residual-fn", default=None)
    common(sp)

    sp = sub.add_parser("experiment", help="shared-noise refinement study")
    sp.add_argument("--config", required=True)
    sp.add_argument("--emit-plot-data", action="store_true")
    common(sp)
    return parser


_COMMANDS = {
    "check": _cmd_check,
    "sample": _cmd_sample,
    "semigroup": _cmd_semigroup,
    "kolmogorov": _cmd_kolmogorov,
    "simulate": _cmd_simulate,
    "experiment": _cmd_experiment,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    args._argv = argv
    try:
        return _COMMANDS[args.command](args)
    except KeyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
