"""Nonlocal elliptic Kolmogorov equation on truncated coordinates.

Solves ``lam*U - <B, DU> - L U = F`` by the semigroup fixed point

    U = int_0^inf exp(-lam*t) R_t(<B, DU> + F) dt

iterated from U_0 = 0, where R_t is the Mehler semigroup and L its
generator (diagonal drift plus per-mode symmetric jump integrals).  Grids
are tensor products over at most three leading modes; everything off-grid
uses constant extension and is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import SpectralModel, ou_scales
from .stable import DensityTable, _tail_mass

__all__ = [
    "GridFunction",
    "PicardState",
    "semigroup_resolvent",
    "solve_picard",
    "generator_apply",
    "residual",
    "verify_estimates",
    "empirical_holder_norm",
]


@dataclass
class GridFunction:
    """Vector-valued function sampled on a uniform tensor grid (dims <= 3).

    values has shape grid_shape + (codim,).  Evaluation is multilinear with
    constant extension outside the extent; ``evaluate`` can report which
    points were extrapolated.
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    extrapolations: int = field(default=0, compare=False)

    def __post_init__(self):
        self.axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        if len(self.axes) > 3:
            raise ValueError("at most 3 grid dimensions are supported")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == len(self.axes):
            self.values = self.values[..., None]
        expected = tuple(a.size for a in self.axes)
        if self.values.shape[:-1] != expected:
            raise ValueError("values shape does not match axes")

    @property
    def dims(self) -> int:
        return len(self.axes)

    @property
    def codim(self) -> int:
        return self.values.shape[-1]

    @classmethod
    def from_callable(cls, axes, fn, codim: int | None = None) -> "GridFunction":
        axes = tuple(np.asarray(a, dtype=float) for a in axes)
        pts = cls(axes, np.zeros(tuple(a.size for a in axes) + (1,))).points()
        vals = np.asarray(fn(pts), dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        return cls(axes, vals.reshape(tuple(a.size for a in axes) + (vals.shape[-1],)))

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def _clip(self, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        lo = np.array([a[0] for a in self.axes])
        hi = np.array([a[-1] for a in self.axes])
        clipped = np.clip(pts, lo, hi)
        flag = np.any(pts != clipped, axis=1)
        return clipped, flag

    def evaluate(self, pts, return_flag: bool = False):
        """Multilinear interpolation at pts (M, dims) -> (M, codim)."""
        clipped, flag = self._clip(pts)
        self.extrapolations += int(flag.sum())
        out = _multilinear(self.axes, self.values, clipped)
        if return_flag:
            return out, flag
        return out

    def jacobian_values(self) -> np.ndarray:
        """Central finite-difference Jacobian, shape grid_shape + (codim, dims)."""
        grads = []
        for d in range(self.dims):
            grads.append(np.gradient(self.values, self.axes[d], axis=d))
        return np.stack(grads, axis=-1)

    def jacobian_at(self, pts) -> np.ndarray:
        """Interpolated Jacobian at pts, shape (M, codim, dims)."""
        jac = self.jacobian_values()
        flat = jac.reshape(jac.shape[: self.dims] + (self.codim * self.dims,))
        clipped, _ = self._clip(pts)
        vals = _multilinear(self.axes, flat, clipped)
        return vals.reshape(-1, self.codim, self.dims)

    def sup_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.values, axis=-1)))

    def spacing(self) -> float:
        return float(min(a[1] - a[0] for a in self.axes))


def _multilinear(axes, values, pts) -> np.ndarray:
    """Multilinear interpolation of a gridded array at clipped points."""
    dims = len(axes)
    grid_shape = tuple(a.size for a in axes)
    codim = values.shape[-1]
    if dims == 1:
        x = axes[0]
        out = np.empty((pts.shape[0], codim))
        for c in range(codim):
            out[:, c] = np.interp(pts[:, 0], x, values[:, c])
        return out
    # locate cells and assemble corner weights
    idx = []
    frac = []
    for d in range(dims):
        a = axes[d]
        i = np.clip(np.searchsorted(a, pts[:, d]) - 1, 0, a.size - 2)
        idx.append(i)
        frac.append((pts[:, d] - a[i]) / (a[i + 1] - a[i]))
    out = np.zeros((pts.shape[0], codim))
    flat_values = values.reshape(-1, codim)
    strides = np.array([int(np.prod(grid_shape[d + 1 :])) for d in range(dims)])
    for corner in range(2**dims):
        w = np.ones(pts.shape[0])
        offset = np.zeros(pts.shape[0], dtype=int)
        for d in range(dims):
            bit = (corner >> d) & 1
            w = w * (frac[d] if bit else 1.0 - frac[d])
            offset = offset + (idx[d] + bit) * strides[d]
        out += w[:, None] * flat_values[offset]
    return out


# ---------------------------------------------------------------------------
# Semigroup resolvent
# ---------------------------------------------------------------------------


def _as_evaluator(g, dims: int = 1):
    """Normalize GridFunction / TestFunction / callable to pts -> (M, codim)."""
    if isinstance(g, GridFunction):
        return g.evaluate, g.codim
    evaluator = getattr(g, "evaluator", g)

    def ev(pts):
        vals = np.asarray(evaluator(np.atleast_2d(pts)), dtype=float)
        return vals[:, None] if vals.ndim == 1 else vals

    probe = ev(np.zeros((1, dims)))
    return ev, probe.shape[-1]


def _time_nodes(lam: float, t_min: float, t_max: float, count: int):
    """Log-spaced Simpson nodes and weights on [t_min, t_max]."""
    if count % 2 == 0:
        count += 1
    tau = np.linspace(math.log(t_min), math.log(t_max), count)
    h = tau[1] - tau[0]
    w = np.ones(count)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    w *= h / 3.0
    t = np.exp(tau)
    return t, w * t  # d t = t d tau


def _convolution_nodes(table: DensityTable):
    """Quadrature nodes/weights in the standard stable variable.

    Trapezoid over a thinned copy of the density grid; the tail mass beyond
    the last node is returned separately (the integrand there is treated as
    constant at the edge value).
    """
    core = np.arange(-8.0, 8.0 + 1e-12, 1.0 / 64.0)
    tail = np.geomspace(8.0, float(table.grid[-1]), 120)[1:]
    s = np.concatenate([-tail[::-1], core, tail])
    p = table.pdf(s)
    w = np.zeros_like(s)
    ds = np.diff(s)
    w[:-1] += 0.5 * ds * p[:-1]
    w[1:] += 0.5 * ds * p[1:]
    tail_mass = _tail_mass(table.alpha, float(s[-1]))
    return s, w, tail_mass


def semigroup_resolvent(
    g,
    model: SpectralModel,
    lam: float,
    axes,
    table: DensityTable,
    t_nodes: int = 257,
    t_min: float = 1e-5,
    samples: int = 2000,
    stream: np.random.Generator | None = None,
    tol: float = 1e-3,
) -> tuple[GridFunction, dict]:
    """Laplace transform of the semigroup orbit, evaluated on a grid.

    For one grid dimension the per-time semigroup action is computed by
    deterministic convolution against the tabulated density; in higher
    dimensions it falls back to Monte Carlo with common random numbers
    across grid points.  Returns the grid function and a diagnostics dict
    with the reported time-truncation bound.
    """
    if lam <= 0:
        raise ValueError("lambda must be positive")
    axes = tuple(np.asarray(a, dtype=float) for a in axes)
    dims = len(axes)
    ev, codim = _as_evaluator(g, dims)
    if dims != model.truncation:
        raise ValueError("grid dimensionality must match the model truncation")
    t_max = 40.0 / lam
    t, tw = _time_nodes(lam, t_min, t_max, t_nodes)
    gammas = model.gammas()
    base = GridFunction(axes, np.zeros(tuple(a.size for a in axes) + (codim,)))
    pts = base.points()
    acc = np.zeros((pts.shape[0], codim))

    if dims == 1:
        s, w, tail_mass = _convolution_nodes(table)
        for tj, wj in zip(t, tw):
            d = math.exp(-gammas[0] * tj)
            c = float(ou_scales(model, tj)[0])
            eval_pts = (d * pts[:, 0])[:, None] + c * s[None, :]
            vals = ev(eval_pts.reshape(-1, 1)).reshape(pts.shape[0], s.size, codim)
            rt = np.einsum("s,xsc->xc", w, vals)
            rt += tail_mass * (vals[:, 0, :] + vals[:, -1, :])
            acc += wj * math.exp(-lam * tj) * rt
    else:
        if stream is None:
            raise ValueError("multi-dimensional resolvent needs a stream handle")
        from .stable import StableLaw, sample_standard

        noise = sample_standard(StableLaw(model.alpha), samples * dims, stream).reshape(
            samples, dims
        )
        for tj, wj in zip(t, tw):
            d = np.exp(-gammas * tj)
            c = ou_scales(model, tj)
            eval_pts = d * pts[:, None, :] + c * noise[None, :, :]
            vals = ev(eval_pts.reshape(-1, dims)).reshape(pts.shape[0], samples, codim)
            acc += wj * math.exp(-lam * tj) * vals.mean(axis=1)

    sup_g = float(np.max(np.abs(ev(pts))))
    trunc_bound = sup_g * (t_min + math.exp(-lam * t_max) / lam)
    diag = {"truncation_bound": trunc_bound, "t_nodes": t.size, "within_tol": trunc_bound <= tol}
    return GridFunction(axes, acc.reshape(tuple(a.size for a in axes) + (codim,))), diag


# ---------------------------------------------------------------------------
# Empirical Holder norms
# ---------------------------------------------------------------------------


def empirical_holder_norm(
    u: GridFunction, index: float, stream: np.random.Generator, n_pairs: int = 2000
) -> float:
    """Surrogate C^index norm for index in (1, 2).

    sup |U| plus sup of the finite-difference Jacobian norm plus the max
    Holder quotient (exponent index-1) of the Jacobian over sampled grid
    point pairs.  A lower bound of the true norm, by construction.
    """
    if not (1.0 < index < 2.0):
        raise ValueError("index must lie in (1, 2)")
    jac = u.jacobian_values().reshape(-1, u.codim, u.dims)
    jac_norm = np.linalg.norm(jac, axis=(1, 2))
    pts = u.points()
    i = stream.integers(0, pts.shape[0], size=n_pairs)
    j = stream.integers(0, pts.shape[0], size=n_pairs)
    keep = i != j
    i, j = i[keep], j[keep]
    dist = np.linalg.norm(pts[i] - pts[j], axis=1)
    dj = np.linalg.norm(jac[i] - jac[j], axis=(1, 2))
    quot = float(np.max(dj / dist ** (index - 1.0))) if i.size else 0.0
    return u.sup_norm() + float(np.max(jac_norm)) + quot


def grid_holder_norm(values: np.ndarray, pts: np.ndarray, exponent: float) -> float:
    """Surrogate C^exponent norm (0 < exponent <= 1) of gridded values."""
    vals = values.reshape(pts.shape[0], -1)
    sup = float(np.max(np.linalg.norm(vals, axis=1)))
    n = min(pts.shape[0], 600)
    sel = np.linspace(0, pts.shape[0] - 1, n).astype(int)
    dv = np.linalg.norm(vals[sel][:, None, :] - vals[sel][None, :, :], axis=-1)
    dx = np.linalg.norm(pts[sel][:, None, :] - pts[sel][None, :, :], axis=-1)
    mask = dx > 0
    return sup + float(np.max(dv[mask] / dx[mask] ** exponent))


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------


@dataclass
class PicardState:
    iterate: GridFunction
    iteration: int
    successive_norms: list[float]
    lam: float
    theta: float
    norm_index: float
    contraction_bound: float


def solve_picard(
    F: GridFunction,
    B: GridFunction,
    model: SpectralModel,
    lam: float,
    table: DensityTable,
    c_alpha: float,
    gamma_exponent: float,
    drift_beta: float,
    theta: float | None = None,
    tol: float = 1e-4,
    max_iter: int = 30,
    stream: np.random.Generator | None = None,
    t_nodes: int = 257,
) -> PicardState:
    """Fixed-point iteration U_n = resolvent(<B, DU_{n-1}> + F).

    Refuses to start unless the precomputed contraction factor
    2 * c_alpha * C_lambda * ||B||_beta is below 1, and aborts if the
    measured successive-norm ratio stays >= 1 for three steps.
    """
    from .spectral import c_lambda_integral

    if theta is None:
        theta = _default_theta(gamma_exponent, drift_beta, model.alpha)
    norm_index = gamma_exponent + theta
    c_lam = c_lambda_integral(model, lam, norm_index - drift_beta)
    if c_lam is None:
        raise ValueError("C_lambda integral divergent for this norm index")
    b_norm = grid_holder_norm(B.values, B.points(), drift_beta)
    contraction = 2.0 * c_alpha * c_lam * b_norm
    if contraction >= 1.0:
        raise ValueError(
            f"contraction factor {contraction:.3g} >= 1; increase lambda before iterating"
        )
    norm_stream = stream if stream is not None else np.random.default_rng(0)

    axes = F.axes
    b_vals = B.values  # grid_shape + (codim,)
    u = GridFunction(axes, np.zeros_like(F.values))
    norms: list[float] = []
    prev = u
    for it in range(1, max_iter + 1):
        jac = prev.jacobian_values()  # grid + (codim, dims)
        source = np.einsum("...cd,...d->...c", jac, b_vals) + F.values
        u, _ = semigroup_resolvent(
            GridFunction(axes, source), model, lam, axes, table, t_nodes=t_nodes, stream=stream
        )
        diff = GridFunction(axes, u.values - prev.values)
        norms.append(empirical_holder_norm(diff, norm_index, norm_stream))
        prev = u
        if norms[-1] < tol:
            break
        if len(norms) >= 4 and all(
            norms[-k] >= norms[-k - 1] for k in (1, 2, 3)
        ):
            raise ArithmeticError(
                f"no contraction: successive-norm ratio {norms[-1] / norms[-2]:.3g} >= 1"
            )
    return PicardState(
        iterate=u,
        iteration=len(norms),
        successive_norms=norms,
        lam=lam,
        theta=theta,
        norm_index=norm_index,
        contraction_bound=contraction,
    )


def _default_theta(gamma_exponent: float, beta: float, alpha: float) -> float:
    """Midpoint theta with theta < beta, 2(gamma+theta-1) > alpha, gamma+theta < 2."""
    lo = max(0.0, alpha / 2.0 + 1.0 - gamma_exponent)
    hi = min(beta, 2.0 - gamma_exponent)
    if lo >= hi:
        raise ValueError("no admissible theta: need alpha/2 + 1 - gamma < min(beta, 2 - gamma)")
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Generator
# ---------------------------------------------------------------------------


def _jump_nodes(delta: float, zmax: float):
    """Log-spaced composite Gauss-Legendre nodes on (delta, zmax)."""
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    edges = np.geomspace(delta, zmax, 81)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    z = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
    w = (half[:, None] * gl_w[None, :]).ravel()
    return z, w


def generator_apply(
    u,
    model: SpectralModel,
    x: np.ndarray,
    levy_c: float,
    delta: float | None = None,
    zmax: float = 500.0,
) -> np.ndarray:
    """The semigroup generator at a point: diagonal drift + jump integrals.

    u may be a GridFunction or any callable pts -> (M, codim).  The jump
    integral per mode uses the symmetrized increment (which cancels the
    small-jump compensator), a Taylor term below ``delta`` and the constant
    extension of u far out.  Returns a codim vector.
    """
    x = np.asarray(x, dtype=float)
    ev, codim = _as_evaluator(u, x.size)
    a = model.alpha
    gammas = model.gammas()
    betas = model.betas()
    n = model.truncation
    if delta is None:
        delta = u.spacing() if isinstance(u, GridFunction) else 1e-3

    ux = ev(x[None, :])[0]
    if isinstance(u, GridFunction):
        jac = u.jacobian_at(x[None, :])[0]  # (codim, dims)
    else:
        jac = _fd_jacobian(ev, x, codim, h=delta)
    drift = jac @ (-gammas * x)

    z, w = _jump_nodes(delta, zmax)
    jump = np.zeros(codim)
    for k in range(n):
        shifts = np.zeros((2 * z.size, n))
        shifts[: z.size, k] = z
        shifts[z.size :, k] = -z
        vals = ev(x[None, :] + shifts)
        sym = vals[: z.size] + vals[z.size :] - 2.0 * ux  # (nodes, codim)
        integral = (w * levy_c * z ** (-1.0 - a)) @ sym
        # Taylor core below delta: integrand ~ (1/2) u'' z^2 * nu
        e = np.zeros(n)
        e[k] = delta
        second = (ev((x + e)[None, :])[0] + ev((x - e)[None, :])[0] - 2.0 * ux) / delta**2
        integral += levy_c * second * delta ** (2.0 - a) / (2.0 - a)
        jump += betas[k] ** a * integral
    return drift + jump


def _fd_jacobian(ev, x, codim, h=1e-4):
    n = x.size
    jac = np.zeros((codim, n))
    for d in range(n):
        e = np.zeros(n)
        e[d] = h
        jac[:, d] = (ev((x + e)[None, :])[0] - ev((x - e)[None, :])[0]) / (2.0 * h)
    return jac


def residual(
    U: GridFunction,
    F: GridFunction,
    B: GridFunction,
    model: SpectralModel,
    lam: float,
    probes: np.ndarray,
    levy_c: float,
) -> dict:
    """Pointwise defect lam*U - <B, DU> - L U - F over interior probes.

    Probes outside the grid extent are flagged and excluded from the
    summary statistics.
    """
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    _, flag = U._clip(probes)
    rows = []
    for p, bad in zip(probes, flag):
        if bad:
            continue
        lhs = (
            lam * U.evaluate(p[None, :])[0]
            - U.jacobian_at(p[None, :])[0] @ B.evaluate(p[None, :])[0]
            - generator_apply(U, model, p, levy_c)
        )
        rows.append(float(np.linalg.norm(lhs - F.evaluate(p[None, :])[0])))
    return {
        "max": max(rows) if rows else math.nan,
        "mean": float(np.mean(rows)) if rows else math.nan,
        "count": len(rows),
        "flagged": int(flag.sum()),
    }


def verify_estimates(
    state: PicardState,
    F: GridFunction,
    B: GridFunction,
    model: SpectralModel,
    drift_beta: float,
    c_lambda: float,
    stream: np.random.Generator,
    n_triples: int = 10_000,
) -> dict:
    """Empirical regularity checks on a converged Picard state.

    Compares the surrogate (gamma+theta)-norm of U against
    C_lambda * ||F||_beta and samples the double-increment inequality
    |U(x+z)-U(x)-U(y+z)+U(y)| <= |x-y| |z|^(gamma+theta-1) ||U|| over random
    interior triples with |z| <= 1.
    """
    u = state.iterate
    u_norm = empirical_holder_norm(u, state.norm_index, stream)
    f_norm = grid_holder_norm(F.values, F.points(), drift_beta)
    pts = u.points()
    lo = pts.min(axis=0) + 1.0
    hi = pts.max(axis=0) - 1.0
    x = stream.uniform(lo, hi, size=(n_triples, u.dims))
    y = stream.uniform(lo, hi, size=(n_triples, u.dims))
    z = stream.uniform(-1.0, 1.0, size=(n_triples, u.dims))
    z /= np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1.0)
    lhs = np.linalg.norm(
        u.evaluate(x + z) - u.evaluate(x) - u.evaluate(y + z) + u.evaluate(y), axis=1
    )
    rhs = (
        np.linalg.norm(x - y, axis=1)
        * np.linalg.norm(z, axis=1) ** (state.norm_index - 1.0)
        * u_norm
    )
    ok = lhs <= rhs + 1e-12
    return {
        "u_norm": u_norm,
        "f_norm": f_norm,
        "regularity_bound": c_lambda * f_norm,
        "norm_ratio": u_norm / f_norm if f_norm > 0 else math.inf,
        "double_increment_pass_rate": float(np.mean(ok)),
    }
