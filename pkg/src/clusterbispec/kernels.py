"""Offspring displacement kernels: densities, transforms, tails, samplers.

All Fourier transforms use the convention

    hhat(w) = int e^{-i w t} h(t) dt,

so hhat(0) = 1 and hhat(-w) = conj(hhat(w)) for real densities.  Kernels are
immutable after construction; every method is pure and safe to call
concurrently.  RNG state is caller-owned (numpy Generator) and never shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, trapezoid

__all__ = [
    "Kernel",
    "Exponential",
    "Lomax",
    "UniformHalf",
    "SymmetricLaplace",
    "TabulatedSymmetric",
    "TailClass",
    "QuadratureNotConverged",
    "UnsupportedKernelScaling",
    "InvalidKernel",
    "density",
    "transform",
    "transform_with_bound",
    "sample_displacement",
    "survival",
    "scale_kernel",
    "kernel_from_spec",
    "load_tabulated_csv",
]

TRANSFORM_TOL = 1e-9  # absolute error target for quadrature transforms


class QuadratureNotConverged(RuntimeError):
    """Oscillatory quadrature missed its error target within the segment cap."""


class UnsupportedKernelScaling(ValueError):
    """Kernel family is not closed under the time-scale map h -> b*h(b*t)."""


class InvalidKernel(ValueError):
    """Kernel parameters or tabulated data violate a construction invariant."""


@dataclass(frozen=True)
class TailClass:
    """Upper-tail classification used by the small-frequency asymptotics.

    kind is one of 'regularly_varying' (index in (0,2], constant slowly
    varying level), 'finite_third_moment', 'finite_second_moment', 'unknown'.
    """

    kind: str
    index: float | None = None
    level: float | None = None


class Kernel:
    """Common surface for offspring displacement laws.

    Subclasses provide density/transform/survival/sample plus tail metadata.
    ``one_sided`` kernels put zero mass on (-inf, 0); ``symmetric`` kernels
    satisfy density(x) == density(-x) exactly.
    """

    one_sided = False
    symmetric = False

    def density(self, x):
        raise NotImplementedError

    def transform(self, omega):
        raise NotImplementedError

    def survival(self, x):
        """P(X > x)."""
        raise NotImplementedError

    def sample(self, rng, size=None):
        raise NotImplementedError

    def tail_quantile(self, eps):
        """q with P(|X| > q) <= eps; used for simulation window padding."""
        raise NotImplementedError

    def tail_class(self) -> TailClass:
        return TailClass("unknown")

    def monotone_one_sided(self) -> bool:
        """True when the density is nonincreasing on (0, inf) with no mass below 0."""
        return False

    def spec_string(self) -> str:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# closed-form families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Exponential(Kernel):
    """One-sided exponential kernel h(t) = beta e^{-beta t} on (0, inf)."""

    beta: float
    one_sided = True

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidKernel(f"Exponential rate must be positive, got {self.beta}")

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.beta * np.exp(-self.beta * np.clip(x, 0, None)), 0.0)

    def transform(self, omega):
        w = np.asarray(omega, dtype=float)
        return self.beta / (self.beta + 1j * w)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, np.exp(-self.beta * np.clip(x, 0, None)))

    def sample(self, rng, size=None):
        # inverse CDF so the stream consumption is one uniform per draw
        u = rng.random(size)
        return -np.log1p(-u) / self.beta

    def tail_quantile(self, eps):
        return -math.log(eps) / self.beta

    def tail_class(self):
        return TailClass("finite_third_moment")

    def monotone_one_sided(self):
        return True

    def spec_string(self):
        return f"exp:{self.beta:g}"


@dataclass(frozen=True)
class Lomax(Kernel):
    """Heavy-tailed Lomax kernel h(t) = alpha (1+t)^{-1-alpha} on (0, inf)."""

    alpha: float
    one_sided = True

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise InvalidKernel(f"Lomax tail index must be positive, got {self.alpha}")

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, self.alpha * (1.0 + np.clip(x, 0, None)) ** (-1.0 - self.alpha), 0.0)

    def transform(self, omega):
        return _oscillatory_transform(self.density, omega)[0]

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0, 1.0, (1.0 + np.clip(x, 0, None)) ** (-self.alpha))

    def sample(self, rng, size=None):
        u = rng.random(size)
        return (1.0 - u) ** (-1.0 / self.alpha) - 1.0

    def tail_quantile(self, eps):
        return eps ** (-1.0 / self.alpha) - 1.0

    def tail_class(self):
        if self.alpha <= 2.0:
            return TailClass("regularly_varying", index=self.alpha, level=1.0)
        if self.alpha <= 3.0:
            return TailClass("finite_second_moment")
        return TailClass("finite_third_moment")

    def monotone_one_sided(self):
        return True

    def moment(self, p: int) -> float:
        """Raw moment E X^p; inf when p >= alpha."""
        if p >= self.alpha:
            return math.inf
        out = float(math.factorial(p))
        for k in range(1, p + 1):
            out /= self.alpha - k
        return out

    def spec_string(self):
        return f"lomax:{self.alpha:g}"


@dataclass(frozen=True)
class UniformHalf(Kernel):
    """One-sided uniform kernel h(t) = 1/a on (0, a)."""

    a: float
    one_sided = True

    def __post_init__(self):
        if not (self.a > 0 and math.isfinite(self.a)):
            raise InvalidKernel(f"UniformHalf width must be positive, got {self.a}")

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0) & (x <= self.a), 1.0 / self.a, 0.0)

    def transform(self, omega):
        w = np.asarray(omega, dtype=float)
        half = self.a * w / 2.0
        # exp(-i a w / 2) sinc(a w / 2); np.sinc carries a pi factor
        return np.exp(-1j * half) * np.sinc(half / np.pi)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip(1.0 - x / self.a, 0.0, 1.0)

    def sample(self, rng, size=None):
        return self.a * rng.random(size)

    def tail_quantile(self, eps):
        return self.a

    def tail_class(self):
        return TailClass("finite_third_moment")

    def monotone_one_sided(self):
        return True

    def spec_string(self):
        return f"uhalf:{self.a:g}"


@dataclass(frozen=True)
class SymmetricLaplace(Kernel):
    """Centrally symmetric Laplace kernel h(x) = (beta/2) e^{-beta |x|}."""

    beta: float
    symmetric = True

    def __post_init__(self):
        if not (self.beta > 0 and math.isfinite(self.beta)):
            raise InvalidKernel(f"SymmetricLaplace rate must be positive, got {self.beta}")

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * self.beta * np.exp(-self.beta * np.abs(x))

    def transform(self, omega):
        w = np.asarray(omega, dtype=float)
        return (self.beta**2 / (self.beta**2 + w**2)).astype(complex)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, 0.5 * np.exp(-self.beta * np.abs(x)), 1.0 - 0.5 * np.exp(-self.beta * np.abs(x)))

    def sample(self, rng, size=None):
        u = rng.random(size)
        mag = -np.log1p(-rng.random(size)) / self.beta
        return np.where(u < 0.5, -mag, mag)

    def tail_quantile(self, eps):
        return -math.log(eps) / self.beta

    def tail_class(self):
        return TailClass("finite_third_moment")

    def spec_string(self):
        return f"slap:{self.beta:g}"


@dataclass(frozen=True)
class TabulatedSymmetric(Kernel):
    """Even density given by samples on a uniform grid x_k = k * spacing, k >= 0.

    Linear interpolation between samples; transforms are trapezoidal cosine
    sums.  Samples are validated to integrate to 1 within 1e-3 and then
    renormalized exactly.
    """

    values: np.ndarray
    spacing: float
    symmetric = True
    _cdf: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or len(vals) < 2:
            raise InvalidKernel("tabulated kernel needs at least two samples")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise InvalidKernel(f"grid spacing must be positive, got {self.spacing}")
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise InvalidKernel("tabulated density samples must be finite and nonnegative")
        total = 2.0 * trapezoid(vals, dx=self.spacing)  # even extension
        if abs(total - 1.0) > 1e-3:
            raise InvalidKernel(f"tabulated density integrates to {total:.6f}, expected 1")
        vals = vals / total
        object.__setattr__(self, "values", vals)
        # CDF of |X| on the half grid, for sampling and survival
        seg = 0.5 * (vals[1:] + vals[:-1]) * self.spacing
        cdf = np.concatenate([[0.0], np.cumsum(seg)]) * 2.0
        object.__setattr__(self, "_cdf", cdf)

    @property
    def grid(self):
        return self.spacing * np.arange(len(self.values))

    def density(self, x):
        ax = np.abs(np.asarray(x, dtype=float))
        return np.interp(ax, self.grid, self.values, right=0.0)

    def transform(self, omega):
        w = np.asarray(omega, dtype=float)
        phases = np.cos(np.multiply.outer(w, self.grid))
        vals = 2.0 * trapezoid(phases * self.values, dx=self.spacing, axis=-1)
        return vals.astype(complex) if np.ndim(omega) else complex(vals)

    def survival(self, x):
        x = np.asarray(x, dtype=float)
        half = np.interp(np.abs(x), self.grid, self._cdf / 2.0, right=0.5)
        return np.where(x >= 0, 0.5 - half, 0.5 + half)

    def sample(self, rng, size=None):
        u = rng.random(size) * self._cdf[-1]
        mag = np.interp(u, self._cdf, self.grid)
        sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return sign * mag

    def tail_quantile(self, eps):
        tail = self._cdf[-1] - self._cdf  # P(|X| > x_k)
        idx = np.searchsorted(-tail, -eps)
        return float(self.grid[min(idx, len(self.grid) - 1)])

    def tail_class(self):
        return TailClass("finite_third_moment")  # bounded support

    def spec_string(self):
        return "tab:<inline>"


# ---------------------------------------------------------------------------
# module-level operation surface
# ---------------------------------------------------------------------------


def density(kernel: Kernel, x):
    """Density h(x); zero outside the support."""
    return kernel.density(x)


def transform(kernel: Kernel, omega):
    """Fourier transform hhat(omega) = int e^{-i omega t} h(t) dt."""
    return kernel.transform(omega)


def transform_with_bound(kernel: Kernel, omega):
    """Transform plus an absolute error bound (0.0 for closed forms)."""
    if isinstance(kernel, Lomax):
        return _oscillatory_transform(kernel.density, omega)
    return kernel.transform(omega), 0.0


def sample_displacement(kernel: Kernel, rng, size=None):
    """Draw displacement(s) from the kernel using the caller's generator."""
    return kernel.sample(rng, size)


def survival(kernel: Kernel, x):
    """Upper-tail probability P(X > x)."""
    return kernel.survival(x)


def scale_kernel(kernel: Kernel, beta: float) -> Kernel:
    """Time-scale map h(t) -> beta*h(beta*t) for families closed under it."""
    if not (beta > 0 and math.isfinite(beta)):
        raise ValueError(f"scale factor must be positive, got {beta}")
    if isinstance(kernel, Exponential):
        return Exponential(kernel.beta * beta)
    if isinstance(kernel, UniformHalf):
        return UniformHalf(kernel.a / beta)
    if isinstance(kernel, SymmetricLaplace):
        return SymmetricLaplace(kernel.beta * beta)
    raise UnsupportedKernelScaling(
        f"{type(kernel).__name__} is not closed under time scaling"
    )


# ---------------------------------------------------------------------------
# oscillatory quadrature
# ---------------------------------------------------------------------------

# QUADPACK's Fourier-transform path (weight='cos'/'sin' on [0, inf)) splits
# the axis at successive half-period points pi/omega and accelerates the
# alternating segment series with the epsilon algorithm, which is exactly the
# splitting-plus-acceleration scheme we need for monotone heavy-tailed
# integrands.  limlst caps the number of cycles considered.
_QUAD_LIMLST = 400
_QUAD_LIMIT = 500


def _oscillatory_transform(dens, omega, tol=TRANSFORM_TOL):
    """hhat(omega) for a one-sided density via Fourier quadrature.

    Returns (values, max_abs_error).  Raises QuadratureNotConverged when the
    reported error bound exceeds ``tol`` at any frequency.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    worst = 0.0
    mags, inverse = np.unique(np.abs(w), return_inverse=True)
    vals = np.empty(len(mags), dtype=complex)
    for i, aw in enumerate(mags):
        if aw == 0.0:
            vals[i] = 1.0
            continue
        U, eU = quad(dens, 0.0, np.inf, weight="cos", wvar=aw,
                     epsabs=0.5 * tol, limlst=_QUAD_LIMLST, limit=_QUAD_LIMIT)
        V, eV = quad(dens, 0.0, np.inf, weight="sin", wvar=aw,
                     epsabs=0.5 * tol, limlst=_QUAD_LIMLST, limit=_QUAD_LIMIT)
        err = float(np.hypot(eU, eV))
        if err > tol:
            raise QuadratureNotConverged(
                f"transform at |omega|={aw:g}: error bound {err:.2e} > {tol:.1e}"
            )
        worst = max(worst, err)
        vals[i] = U - 1j * V
    out = vals[inverse].reshape(w.shape)
    out[w < 0] = np.conj(out[w < 0])
    if np.ndim(omega) == 0:
        return complex(out.reshape(-1)[0]), worst
    return out, worst


def lomax_transform_gammainc(alpha: float, omega: float) -> complex:
    """Incomplete-gamma representation of the Lomax transform (cross-check).

    Substituting u = 1 + t gives alpha e^{i w} (i w)^alpha Gamma(-alpha, i w).
    Requires mpmath; the quadrature path is the normative one.
    """
    import mpmath as mp

    if omega == 0.0:
        return 1.0 + 0.0j
    z = 1j * mp.mpf(omega)
    a = mp.mpf(alpha)
    return complex(a * mp.e**z * z**a * mp.gammainc(-a, z))


# ---------------------------------------------------------------------------
# kernel spec mini-grammar and tabulated CSV I/O
# ---------------------------------------------------------------------------

_FAMILIES = "exp:beta, lomax:alpha, uhalf:a, slap:beta, match:<base>:<m>, tab:<path>"


def kernel_from_spec(spec: str) -> Kernel:
    """Parse a kernel spec string.

    Grammar: exp:beta, lomax:alpha, uhalf:a, slap:beta, match:<base>:<m>,
    match:<path.json>, tab:<path>.
    """
    parts = spec.strip().split(":")
    name = parts[0].lower()
    try:
        if name == "exp" and len(parts) == 2:
            return Exponential(float(parts[1]))
        if name == "lomax" and len(parts) == 2:
            return Lomax(float(parts[1]))
        if name == "uhalf" and len(parts) == 2:
            return UniformHalf(float(parts[1]))
        if name == "slap" and len(parts) == 2:
            return SymmetricLaplace(float(parts[1]))
        if name == "tab" and len(parts) >= 2:
            return load_tabulated_csv(":".join(parts[1:]))
        if name == "match" and len(parts) >= 2:
            from .match import MatchSpec, build_matched_kernel, load_matched_kernel

            rest = ":".join(parts[1:])
            if rest.endswith(".json"):
                return load_matched_kernel(rest)
            base = kernel_from_spec(":".join(parts[1:-1]))
            return build_matched_kernel(MatchSpec(base=base, m=float(parts[-1])))
    except ValueError as exc:
        raise InvalidKernel(f"bad kernel spec {spec!r}: {exc}") from exc
    raise InvalidKernel(f"unknown kernel spec {spec!r}; valid families: {_FAMILIES}")


def load_tabulated_csv(path: str) -> TabulatedSymmetric:
    """Load a tabulated symmetric kernel from CSV `x,density` (header row).

    x must be strictly increasing, uniformly spaced, and start at 0.
    """
    xs, ds = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.lower().replace(" ", "") == "x,density":
                continue
            try:
                sx, sd = line.split(",")
                xs.append(float(sx))
                ds.append(float(sd))
            except ValueError as exc:
                raise InvalidKernel(f"{path}:{lineno}: cannot parse {line!r}") from exc
    x = np.asarray(xs)
    if len(x) < 2 or np.any(np.diff(x) <= 0):
        raise InvalidKernel(f"{path}: x column must be strictly increasing")
    dx = x[1] - x[0]
    if abs(x[0]) > 1e-9 * dx or np.max(np.abs(np.diff(x) - dx)) > 1e-9 * dx:
        raise InvalidKernel(f"{path}: grid must be uniform and start at 0")
    return TabulatedSymmetric(np.asarray(ds), float(dx))
