"""PDE coefficient data: the triple (a, b, c), moduli of continuity, and
the symmetric square root used as the diffusion coefficient.

Coefficient callables are batched: ``a(t, x)`` takes a scalar time and an
array of points with shape (n, d) and returns (n, d, d); ``b`` returns
(n, d) and ``c`` returns (n,).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DiniDivergenceError, EllipticityError, ValidationError

_SYM_RTOL = 1e-12


@dataclass(frozen=True)
class ModulusOfContinuity:
    """A parametric modulus rho(r): nondecreasing, rho(0) = 0.

    kind is one of:
      * ``zero``      -- identically zero (constant coefficients)
      * ``power``     -- scale * r**alpha, alpha in (0, 1]
      * ``log_power`` -- scale * min(1, (-log r)**(-alpha)), alpha > 0
      * ``tabulated`` -- linear interpolation of (r, value) samples
    """

    kind: str
    scale: float = 1.0
    alpha: float | None = None
    table_r: tuple = ()
    table_v: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "power", "log_power", "tabulated"):
            raise ValidationError(f"unknown modulus kind {self.kind!r}")
        if self.scale < 0:
            raise ValidationError("modulus scale must be >= 0")
        if self.kind == "power":
            if self.alpha is None or not 0.0 < self.alpha <= 1.0:
                raise ValidationError("power modulus needs alpha in (0, 1]")
        if self.kind == "log_power":
            if self.alpha is None or self.alpha <= 0.0:
                raise ValidationError("log_power modulus needs alpha > 0")
        if self.kind == "tabulated":
            r = np.asarray(self.table_r, dtype=float)
            v = np.asarray(self.table_v, dtype=float)
            if r.size < 2 or r.size != v.size:
                raise ValidationError("tabulated modulus needs matching r/value samples")
            if r[0] != 0.0 or v[0] != 0.0:
                raise ValidationError("tabulated modulus must start at (0, 0)")
            if np.any(np.diff(r) <= 0) or np.any(np.diff(v) < 0):
                raise ValidationError("tabulated modulus must be nondecreasing")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            out = np.zeros_like(r)
        elif self.kind == "power":
            out = self.scale * np.power(r, self.alpha)
        elif self.kind == "log_power":
            out = np.empty_like(r)
            inside = (r > 0.0) & (r < 1.0)
            with np.errstate(divide="ignore"):
                out[inside] = self.scale * np.minimum(
                    1.0, (-np.log(r[inside])) ** (-self.alpha)
                )
            out[r <= 0.0] = 0.0
            out[r >= 1.0] = self.scale
        else:
            out = np.interp(
                r,
                np.asarray(self.table_r, dtype=float),
                np.asarray(self.table_v, dtype=float),
            )
        return out if out.ndim else float(out)


ZERO_MODULUS = ModulusOfContinuity("zero", scale=0.0)


def dini_integral(rho: ModulusOfContinuity | Callable, eps0: float) -> float:
    """Integral of rho(r)/r over [eps0, 1] by adaptive quadrature."""
    if not 0.0 < eps0 < 1.0:
        raise ValidationError("eps0 must lie in (0, 1)")
    value, _ = quad(lambda r: rho(r) / r, eps0, 1.0, epsrel=1e-10, epsabs=0.0, limit=200)
    return value


def classify_dini(rho: ModulusOfContinuity | Callable) -> tuple[str, float]:
    """Classify a modulus as Dini (rho(r)/r integrable at 0) or not.

    The parametric families have closed-form answers: power moduli always
    integrate (value scale/alpha), the logarithmic family integrates
    exactly when alpha > 1 (value scale*alpha/(alpha-1)); the logarithmic
    tail decays like 1/log(1/eps), far too slowly for a numeric cutoff to
    resolve.  Tabulated moduli and plain callables fall back to a numeric
    check: the cutoff is halved from 1e-4 down to 1e-8 and the modulus
    passes when the integral has stabilized (relative change <= 1e-3 on
    the last halving).  Returns the label and the integral value (the
    numeric lower-cutoff value in the fallback case).
    """
    if isinstance(rho, ModulusOfContinuity):
        if rho.kind == "zero" or rho.scale == 0.0:
            return "Dini", 0.0
        if rho.kind == "power":
            return "Dini", rho.scale / rho.alpha
        if rho.kind == "log_power":
            if rho.alpha > 1.0:
                # scale * (1 + Integral_0^1/e (-log r)^-alpha dr/r)
                return "Dini", rho.scale * rho.alpha / (rho.alpha - 1.0)
            return "not Dini", np.inf
    eps = 1e-4
    prev = dini_integral(rho, eps)
    while eps > 1e-8:
        eps *= 0.5
        cur = dini_integral(rho, eps)
        prev, last_change = cur, abs(cur - prev) / max(abs(cur), 1e-300)
    if last_change <= 1e-3:
        return "Dini", prev
    return "not Dini at this resolution", prev


def sqrt_spd(A: np.ndarray) -> np.ndarray:
    """Principal symmetric square root of a symmetric positive-definite
    matrix (batched over leading axes)."""
    A = np.asarray(A, dtype=float)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise ValidationError("expected square matrices")
    asym = np.abs(A - np.swapaxes(A, -1, -2)).max()
    scale = np.abs(A).max()
    if asym > _SYM_RTOL * max(scale, 1.0):
        raise ValidationError(f"matrix not symmetric (asymmetry {asym:.3e})")
    w, V = np.linalg.eigh(0.5 * (A + np.swapaxes(A, -1, -2)))
    if np.any(w <= 0.0):
        raise EllipticityError(f"nonpositive eigenvalue {w.min():.6e}")
    root = (V * np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (root + np.swapaxes(root, -1, -2))


def require_dini(rho) -> None:
    """Raise DiniDivergenceError unless rho passes the numeric Dini check."""
    label, _ = classify_dini(rho)
    if label != "Dini":
        raise DiniDivergenceError("modulus fails the Dini integrability check")


@dataclass(frozen=True)
class CoefficientField:
    """The PDE data (a, b, c) with its ellipticity constant and declared
    bounds; the problem definition for all simulations."""

    dim: int
    a: Callable  # (t, x[n,d]) -> (n, d, d)
    b: Callable  # (t, x[n,d]) -> (n, d)
    c: Callable  # (t, x[n,d]) -> (n,)
    lam: float   # ellipticity constant: eigenvalues of a in [1/lam, lam]
    b_sup: float
    c_sup: float
    modulus: ModulusOfContinuity = field(default=ZERO_MODULUS)
    # optional shortcut returning sigma(t, x) directly; when absent the
    # principal square root of a(t, x) is taken pointwise
    sigma: Callable | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValidationError("dim must be a positive integer")
        if self.lam <= 0:
            raise ValidationError("ellipticity constant must be positive")
        if self.b_sup < 0 or self.c_sup < 0:
            raise ValidationError("declared bounds must be nonnegative")


@dataclass(frozen=True)
class ValidationReport:
    """Worst-case excursions of a coefficient field over a sample set."""

    passed: bool
    eig_min: float
    eig_max: float
    eig_lo_required: float
    eig_hi_required: float
    b_max: float
    c_max: float
    asymmetry_max: float
    n_points: int

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (
            f"{status}: eigenvalues [{self.eig_min:.6g}, {self.eig_max:.6g}] "
            f"(required [{self.eig_lo_required:.6g}, {self.eig_hi_required:.6g}]), "
            f"max|b| {self.b_max:.6g}, max|c| {self.c_max:.6g}, "
            f"asymmetry {self.asymmetry_max:.3g}, {self.n_points} sample points"
        )


_SLACK = 1e-9


def validate_field(field_: CoefficientField, points: np.ndarray,
                   times=(0.0,)) -> ValidationReport:
    """Check the standing assumptions on (a, b, c) over a sample set.

    points has shape (n, d).  Passing requires all sampled eigenvalues in
    [1/lam - slack, lam + slack] and |b|, |c| within the declared bounds.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.size == 0:
        raise ValidationError("sampler is empty")
    eig_min, eig_max, b_max, c_max, asym_max = np.inf, -np.inf, 0.0, 0.0, 0.0
    for t in times:
        A = np.asarray(field_.a(t, points), dtype=float)
        asym = np.abs(A - np.swapaxes(A, -1, -2)).max()
        asym_max = max(asym_max, float(asym))
        w = np.linalg.eigvalsh(0.5 * (A + np.swapaxes(A, -1, -2)))
        eig_min = min(eig_min, float(w.min()))
        eig_max = max(eig_max, float(w.max()))
        bv = np.asarray(field_.b(t, points), dtype=float)
        b_max = max(b_max, float(np.linalg.norm(bv, axis=-1).max()))
        cv = np.asarray(field_.c(t, points), dtype=float)
        c_max = max(c_max, float(np.abs(cv).max()))
    lo, hi = 1.0 / field_.lam, field_.lam
    scale = max(abs(eig_max), 1.0)
    passed = (
        eig_min >= lo - _SLACK
        and eig_max <= hi + _SLACK
        and b_max <= field_.b_sup + _SLACK
        and c_max <= field_.c_sup + _SLACK
        and asym_max <= _SYM_RTOL * scale
    )
    return ValidationReport(
        passed=passed,
        eig_min=eig_min,
        eig_max=eig_max,
        eig_lo_required=lo,
        eig_hi_required=hi,
        b_max=b_max,
        c_max=c_max,
        asymmetry_max=asym_max,
        n_points=len(points) * len(tuple(times)),
    )


def default_sample_points(dim: int, box_half_width: float = 2.0,
                          grid_per_axis: int = 101, n_random: int = 1000,
                          seed: int = 0) -> np.ndarray:
    """Default validation sample set: an axis grid plus quasi-random points."""
    axis = np.linspace(-box_half_width, box_half_width, grid_per_axis)
    if dim == 1:
        grid = axis[:, None]
    else:
        # full tensor grids blow up with dim; take per-axis slices through 0
        cols = []
        for j in range(dim):
            pts = np.zeros((grid_per_axis, dim))
            pts[:, j] = axis
            cols.append(pts)
        grid = np.concatenate(cols, axis=0)
    sob = _halton(n_random, dim, seed)
    rand = (2.0 * sob - 1.0) * box_half_width
    return np.concatenate([grid, rand], axis=0)


def _halton(n: int, dim: int, seed: int) -> np.ndarray:
    primes = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37]
    if dim > len(primes):
        rng = np.random.default_rng(seed)
        return rng.random((n, dim))
    out = np.empty((n, dim))
    for j in range(dim):
        base = primes[j]
        seq = np.zeros(n)
        f, idx = 1.0, np.arange(1, n + 1) + seed
        work = idx.astype(float)
        denom = float(base)
        while np.any(work > 0):
            seq += (work % base) / denom
            work //= base
            denom *= base
        out[:, j] = seq % 1.0
    return out
