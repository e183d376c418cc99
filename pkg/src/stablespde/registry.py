"""Named drifts, test functions, and model presets.

Entries are factories so arity and shape parameters can be bound at lookup
time.  Drift evaluators are vectorized maps (samples, modes) ->
(samples, modes) or (samples, 1); test functions are
:class:`~stablespde.mehler.TestFunction` instances with declared sup bounds
and, where exact, Holder metadata.
"""

from __future__ import annotations

import numpy as np

from .mehler import TestFunction
from .spectral import reaction_diffusion_preset

__all__ = ["registry_lookup", "make_drift", "make_testfn", "registry_names"]


# ---------------------------------------------------------------------------
# Drifts.  All fields are bounded (clipped or saturating), so they sit in
# C_b^beta for the stated exponent.
# ---------------------------------------------------------------------------


def _zero_drift(**_params):
    def B(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.zeros((pts.shape[0], 1))

    B.holder_exponent = 1.0
    B.bound_sup = 0.0
    return B


def _holder_power_drift(amp: float = 0.3, exponent: float = 0.75, **_params):
    if not 0.0 < exponent <= 1.0:
        raise ValueError("exponent must lie in (0, 1]")

    def B(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return amp * np.minimum(1.0, np.abs(pts[:, 0:1])) ** exponent

    B.holder_exponent = exponent
    B.bound_sup = abs(amp)
    return B


def _clipped_linear_drift(slope: float = 1.0, cap: float = 1.0, **_params):
    if cap <= 0:
        raise ValueError("cap must be positive")

    def B(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.clip(slope * pts, -cap, cap)

    B.holder_exponent = 1.0
    B.bound_sup = cap
    return B


_DRIFTS = {
    "zero": _zero_drift,
    "holder-power": _holder_power_drift,
    "clipped-linear": _clipped_linear_drift,
}


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------


def _constant_fn(arity: int = 1, value: float = 1.0, **_params):
    return TestFunction(
        arity=arity,
        evaluator=lambda pts: np.full(np.atleast_2d(pts).shape[0], value),
        bound_sup=abs(value),
        name="constant",
        holder_meta=(1.0, abs(value)),
    )


def _cos_linear_fn(arity: int = 1, weights=None, **_params):
    u = np.ones(arity) if weights is None else np.asarray(weights, dtype=float)
    if u.size != arity:
        raise ValueError("weights length must equal the arity")
    return TestFunction(
        arity=arity,
        evaluator=lambda pts: np.cos(np.atleast_2d(pts) @ u),
        bound_sup=1.0,
        name="cos-linear",
    )


def _holder_power_fn(arity: int = 1, exponent: float = 0.75, **_params):
    if not 0.0 < exponent <= 1.0:
        raise ValueError("exponent must lie in (0, 1]")

    # sup = 1; the Holder quotient of s -> min(1, |s|)^e is exactly 1,
    # attained in the limit toward the origin
    return TestFunction(
        arity=arity,
        evaluator=lambda pts: np.minimum(1.0, np.abs(np.atleast_2d(pts)[:, 0])) ** exponent,
        bound_sup=1.0,
        name="holder-power",
        holder_meta=(exponent, 1.0),
    )


def _bump_fn(arity: int = 1, radius: float = 1.0, **_params):
    def ev(pts):
        r2 = np.sum((np.atleast_2d(pts) / radius) ** 2, axis=1)
        out = np.zeros(r2.shape)
        inside = r2 < 1.0
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
        return out

    return TestFunction(arity=arity, evaluator=ev, bound_sup=1.0, name="bump")


_TESTFNS = {
    "constant": _constant_fn,
    "cos-linear": _cos_linear_fn,
    "holder-power": _holder_power_fn,
    "bump": _bump_fn,
}

_PRESETS = {
    "rd": reaction_diffusion_preset,
}

_KINDS = {"drift": _DRIFTS, "testfn": _TESTFNS, "preset": _PRESETS}


def registry_names(kind: str) -> list[str]:
    if kind not in _KINDS:
        raise KeyError(f"unknown registry kind {kind!r}; kinds: {sorted(_KINDS)}")
    return sorted(_KINDS[kind])


def registry_lookup(kind: str, name: str):
    """Return the named factory; unknown names list what is available."""
    table = _KINDS.get(kind)
    if table is None:
        raise KeyError(f"unknown registry kind {kind!r}; kinds: {sorted(_KINDS)}")
    if name not in table:
        raise KeyError(f"unknown {kind} {name!r}; available: {sorted(table)}")
    return table[name]


def make_drift(name: str, **params):
    return registry_lookup("drift", name)(**params)


def make_testfn(name: str, **params) -> TestFunction:
    return registry_lookup("testfn", name)(**params)
