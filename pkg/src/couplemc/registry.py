"""Built-in coefficient fields and terminal functions, selectable by name
from experiment configs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coefficients import (CoefficientField, ModulusOfContinuity, ZERO_MODULUS,
                           sqrt_spd)
from .errors import ConfigError, ValidationError


def _as_matrix(a0, dim: int) -> np.ndarray:
    A = np.asarray(a0, dtype=float)
    if A.ndim == 0:
        return float(A) * np.eye(dim)
    if A.ndim == 1:
        return np.diag(A)
    return A


def _as_vector(b0, dim: int) -> np.ndarray:
    v = np.asarray(b0, dtype=float)
    if v.ndim == 0:
        return np.full(dim, float(v))
    return v


def make_constant_field(dim: int = 1, a0=1.0, b0=0.0, c0: float = 0.0,
                        lam: float | None = None) -> CoefficientField:
    """Constant coefficients: a0 (scalar, diagonal, or full matrix), drift
    b0 and potential c0."""
    dim = int(dim)
    A = _as_matrix(a0, dim)
    bvec = _as_vector(b0, dim)
    w = np.linalg.eigvalsh(0.5 * (A + A.T))
    if w.min() <= 0:
        raise ValidationError("a0 must be positive definite")
    if lam is None:
        lam = float(max(w.max(), 1.0 / w.min()))
    sig = sqrt_spd(A)

    def a(t, x):
        return np.broadcast_to(A, (len(x), dim, dim))

    def sigma(t, x):
        return np.broadcast_to(sig, (len(x), dim, dim))

    def b(t, x):
        return np.broadcast_to(bvec, (len(x), dim))

    def c(t, x):
        return np.full(len(x), float(c0))

    return CoefficientField(dim=dim, a=a, b=b, c=c, lam=lam,
                            b_sup=float(np.linalg.norm(bvec)), c_sup=abs(float(c0)),
                            modulus=ZERO_MODULUS, sigma=sigma)


def make_sin_field(dim: int = 1, amp: float = 0.5, c0: float = 0.0) -> CoefficientField:
    """Smooth 1D-structured field a(x) = (1 + amp*sin(x_1))^2 * I."""
    dim = int(dim)
    if not 0.0 <= amp < 1.0:
        raise ValidationError("amp must lie in [0, 1)")
    eye = np.eye(dim)
    lam = float(max((1.0 + amp) ** 2, (1.0 - amp) ** -2))

    def root(x):
        return 1.0 + amp * np.sin(x[:, 0])

    def a(t, x):
        return root(x)[:, None, None] ** 2 * eye

    def sigma(t, x):
        return root(x)[:, None, None] * eye

    def b(t, x):
        return np.zeros((len(x), dim))

    def c(t, x):
        return np.full(len(x), float(c0))

    # |d a/dx| <= 2 amp (1 + amp): Lipschitz modulus
    modulus = ModulusOfContinuity("power", scale=2.0 * amp * (1.0 + amp), alpha=1.0)
    return CoefficientField(dim=dim, a=a, b=b, c=c, lam=lam, b_sup=0.0,
                            c_sup=abs(float(c0)), modulus=modulus, sigma=sigma)


def make_power_modulus_field(dim: int = 1, height: float = 0.5,
                             alpha: float = 0.5) -> CoefficientField:
    """Holder-alpha field a(x) = (1 + height * min(|x_1|, 1)^alpha) * I."""
    dim = int(dim)
    if height <= 0 or not 0.0 < alpha <= 1.0:
        raise ValidationError("need height > 0 and alpha in (0, 1]")
    eye = np.eye(dim)

    def g(x):
        return 1.0 + height * np.minimum(np.abs(x[:, 0]), 1.0) ** alpha

    def a(t, x):
        return g(x)[:, None, None] * eye

    def sigma(t, x):
        return np.sqrt(g(x))[:, None, None] * eye

    def b(t, x):
        return np.zeros((len(x), dim))

    def c(t, x):
        return np.zeros(len(x))

    modulus = ModulusOfContinuity("power", scale=height, alpha=alpha)
    return CoefficientField(dim=dim, a=a, b=b, c=c, lam=1.0 + height,
                            b_sup=0.0, c_sup=0.0, modulus=modulus, sigma=sigma)


def make_log_modulus_field(dim: int = 1, height: float = 0.5,
                           alpha: float = 2.0) -> CoefficientField:
    """Field with the logarithmic modulus min(1, (-log r)^(-alpha)); Dini
    for alpha > 1, merely continuous for alpha <= 1."""
    dim = int(dim)
    if height <= 0 or alpha <= 0:
        raise ValidationError("need height > 0 and alpha > 0")
    eye = np.eye(dim)
    modulus = ModulusOfContinuity("log_power", scale=height, alpha=alpha)

    def g(x):
        return 1.0 + modulus(np.abs(x[:, 0]))

    def a(t, x):
        return g(x)[:, None, None] * eye

    def sigma(t, x):
        return np.sqrt(g(x))[:, None, None] * eye

    def b(t, x):
        return np.zeros((len(x), dim))

    def c(t, x):
        return np.zeros(len(x))

    return CoefficientField(dim=dim, a=a, b=b, c=c, lam=1.0 + height,
                            b_sup=0.0, c_sup=0.0, modulus=modulus, sigma=sigma)


def make_sgn_drift_field(theta: float = 1.0) -> CoefficientField:
    """1D unit diffusion with discontinuous drift -theta*sgn(x); the
    closed-form density oracle exists for this field."""
    if theta < 0:
        raise ValidationError("theta must be nonnegative")

    def a(t, x):
        return np.ones((len(x), 1, 1))

    def sigma(t, x):
        return np.ones((len(x), 1, 1))

    def b(t, x):
        return -theta * np.sign(x)

    def c(t, x):
        return np.zeros(len(x))

    return CoefficientField(dim=1, a=a, b=b, c=c, lam=1.0, b_sup=theta,
                            c_sup=0.0, modulus=ZERO_MODULUS, sigma=sigma)


FIELD_BUILDERS: dict[str, Callable[..., CoefficientField]] = {
    "constant": make_constant_field,
    "sin": make_sin_field,
    "power-modulus": make_power_modulus_field,
    "log-modulus": make_log_modulus_field,
    "sgn-drift": make_sgn_drift_field,
}


@dataclass(frozen=True)
class TerminalFunction:
    """Terminal datum f with its declared sup-norm (inf when unbounded)."""

    fn: Callable  # (n, d) -> (n,)
    sup_norm: float
    name: str = ""

    def __call__(self, y):
        return self.fn(np.atleast_2d(np.asarray(y, dtype=float)))


def make_gaussian_bump(center=0.0, width: float = 1.0) -> TerminalFunction:
    if width <= 0:
        raise ValidationError("width must be positive")

    def fn(y):
        ctr = _as_vector(center, y.shape[1])
        return np.exp(-np.sum((y - ctr) ** 2, axis=1) / (2.0 * width**2))

    return TerminalFunction(fn=fn, sup_norm=1.0, name="gaussian-bump")


def make_linear(coeffs=1.0) -> TerminalFunction:
    def fn(y):
        cv = _as_vector(coeffs, y.shape[1])
        return y @ cv

    return TerminalFunction(fn=fn, sup_norm=np.inf, name="linear")


def make_constant_terminal(value: float = 1.0) -> TerminalFunction:
    def fn(y):
        return np.full(len(y), float(value))

    return TerminalFunction(fn=fn, sup_norm=abs(float(value)), name="constant")


TERMINAL_BUILDERS: dict[str, Callable[..., TerminalFunction]] = {
    "gaussian-bump": make_gaussian_bump,
    "linear": make_linear,
    "constant": make_constant_terminal,
}


def build_field(name: str, params: dict | None = None) -> CoefficientField:
    if name not in FIELD_BUILDERS:
        raise ConfigError(f"unknown field {name!r}; known: {sorted(FIELD_BUILDERS)}")
    try:
        return FIELD_BUILDERS[name](**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for field {name!r}: {exc}") from exc


def build_terminal(name: str, params: dict | None = None) -> TerminalFunction:
    if name not in TERMINAL_BUILDERS:
        raise ConfigError(f"unknown terminal {name!r}; known: {sorted(TERMINAL_BUILDERS)}")
    try:
        return TERMINAL_BUILDERS[name](**(params or {}))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for terminal {name!r}: {exc}") from exc
