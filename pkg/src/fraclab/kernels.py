"""Test-function machinery: Hermite polynomials, Gaussian mollifier
derivatives, and a catalogue of kernels with closed-form weak derivatives.

All catalogue derivatives are analytic; estimators never differentiate
numerically, so rate measurements are not contaminated by finite-difference
error.  Kernels are immutable and addressable by string specs such as
``"gaussian_deriv(l=1,eps=1)"`` in experiment configs.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.integrate import quad

from .errors import CapabilityError, DomainError, IntegrabilityError

__all__ = [
    "HermitePoly",
    "hermite_eval",
    "hermite_coefficients",
    "mollifier_deriv",
    "Kernel",
    "KernelMoments",
    "kernel_deriv",
    "compute_moments",
    "antiderivative",
    "catalogue_kernel",
    "CATALOGUE",
    "DEFAULT_KAPPAS",
]

#: Weight exponents exposed by default; the theorems need kappa < 1/2.
DEFAULT_KAPPAS = (0.1, 0.25, 0.49)

_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Mollifier arguments beyond this many standard deviations evaluate to 0;
# exp(-z^2/2) underflows long before, this just keeps the Hermite factor
# from overflowing first.
MOLLIFIER_CUTOFF = 40.0


# ---------------------------------------------------------------------------
# Hermite polynomials (probabilists' convention)
# ---------------------------------------------------------------------------

def hermite_eval(q: int, x) -> "float | np.ndarray":
    """H_q(x) by the three-term recurrence H_{q+1} = x H_q - q H_{q-1}."""
    if q < 0 or int(q) != q:
        raise DomainError(f"Hermite order must be a nonnegative integer, got {q!r}")
    x_arr = np.asarray(x, dtype=np.float64)
    prev = np.ones_like(x_arr)
    if q == 0:
        return float(prev) if x_arr.ndim == 0 else prev
    cur = x_arr.copy()
    for k in range(1, int(q)):
        prev, cur = cur, x_arr * cur - k * prev
    return float(cur) if x_arr.ndim == 0 else cur


def hermite_coefficients(q: int) -> tuple[int, ...]:
    """Exact integer coefficients of H_q, lowest degree first (leading 1)."""
    if q < 0 or int(q) != q:
        raise DomainError(f"Hermite order must be a nonnegative integer, got {q!r}")
    prev, cur = [1], [0, 1]
    if q == 0:
        return (1,)
    for k in range(1, int(q)):
        nxt = [0] + cur  # x * H_k
        for i, c in enumerate(prev):
            nxt[i] -= k * c
        prev, cur = cur, nxt
    return tuple(cur)


@dataclass(frozen=True)
class HermitePoly:
    """H_q with its exact coefficient vector (leading coefficient 1)."""

    order: int

    @property
    def coefficients(self) -> tuple[int, ...]:
        return hermite_coefficients(self.order)

    def __call__(self, x):
        return hermite_eval(self.order, x)


# ---------------------------------------------------------------------------
# Gaussian mollifier derivatives
# ---------------------------------------------------------------------------

def mollifier_deriv(order: int, epsilon: float, x) -> "float | np.ndarray":
    """order-th derivative of the centered Gaussian density of variance epsilon.

    Closed form eps^{-(order+1)/2} (-1)^order H_order(x/sqrt(eps)) phi(x/sqrt(eps))
    with phi the standard normal density.  Arguments with |x|/sqrt(eps) above
    ``MOLLIFIER_CUTOFF`` (~40 standard deviations) return exactly 0.
    """
    if epsilon <= 0 or not np.isfinite(epsilon):
        raise DomainError(f"mollifier variance must be positive, got {epsilon!r}")
    if order < 0 or int(order) != order:
        raise DomainError(f"mollifier derivative order must be >= 0, got {order!r}")
    x_arr = np.asarray(x, dtype=np.float64)
    scale = math.sqrt(epsilon)
    z = x_arr / scale
    inside = np.abs(z) <= MOLLIFIER_CUTOFF
    z_safe = np.where(inside, z, 0.0)
    phi = np.exp(-0.5 * z_safe**2) / _SQRT_2PI
    sign = -1.0 if order % 2 else 1.0
    out = np.where(
        inside,
        epsilon ** (-(order + 1) / 2.0) * sign * hermite_eval(order, z_safe) * phi,
        0.0,
    )
    return float(out) if x_arr.ndim == 0 else out


# ---------------------------------------------------------------------------
# Kernel values
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """A test function with closed-form weak derivatives up to a fixed order.

    ``support`` is (a, b) for compactly supported kernels and None for the
    whole line; ``decay`` in {"gaussian", "compact", "polynomial"} selects the
    tail-truncation rule used by quadrature (``decay_scale`` is the Gaussian
    standard deviation, or the polynomial power).
    """

    name: str
    derivs: tuple
    support: "tuple[float, float] | None"
    decay: str
    decay_scale: float = 1.0

    @property
    def max_derivative_order(self) -> int:
        return len(self.derivs) - 1

    def __call__(self, x):
        return self.derivs[0](np.asarray(x, dtype=np.float64))

    def deriv(self, j: int, x):
        if j < 0 or j > self.max_derivative_order:
            raise CapabilityError(
                f"kernel {self.name!r} provides derivatives up to order "
                f"{self.max_derivative_order}, requested {j}"
            )
        return self.derivs[j](np.asarray(x, dtype=np.float64))

    def derivative(self, j: int = 1) -> "Kernel":
        """The j-th derivative as a kernel sharing this kernel's callables.

        Evaluations of ``self.deriv(i + j)`` and ``self.derivative(j).deriv(i)``
        are therefore bit-for-bit identical.
        """
        if j < 0 or j > self.max_derivative_order:
            raise CapabilityError(
                f"kernel {self.name!r} cannot shift by {j} derivative orders"
            )
        name = self.name + "'" * j
        return Kernel(name, self.derivs[j:], self.support, self.decay, self.decay_scale)


def kernel_deriv(kernel: Kernel, j: int, x):
    """Evaluate the j-th weak derivative of a kernel (closed form, never FD)."""
    return kernel.deriv(j, x)


# ---------------------------------------------------------------------------
# Catalogue
# ---------------------------------------------------------------------------

_CAT_ORDERS = 6  # closed-form derivatives shipped per Gaussian-type kernel


def _gaussian_kernel(eps: float = 1.0) -> Kernel:
    derivs = tuple(
        (lambda j: (lambda x: mollifier_deriv(j, eps, x)))(j) for j in range(_CAT_ORDERS + 1)
    )
    return Kernel(
        name=f"gaussian(eps={eps:g})",
        derivs=derivs,
        support=None,
        decay="gaussian",
        decay_scale=math.sqrt(eps),
    )


def _gaussian_deriv_kernel(l: int, eps: float = 1.0) -> Kernel:
    if l < 0 or int(l) != l:
        raise DomainError(f"gaussian_deriv order must be >= 0, got {l!r}")
    derivs = tuple(
        (lambda j: (lambda x: mollifier_deriv(l + j, eps, x)))(j) for j in range(_CAT_ORDERS + 1)
    )
    return Kernel(
        name=f"gaussian_deriv(l={l},eps={eps:g})",
        derivs=derivs,
        support=None,
        decay="gaussian",
        decay_scale=math.sqrt(eps),
    )


def _affine_gaussian_deriv(j: int, x: np.ndarray) -> np.ndarray:
    # d^j/dx^j [(x+1) phi(x)] by Leibniz: (x+1) phi^{(j)} + j phi^{(j-1)},
    # with phi^{(k)} = (-1)^k H_k phi.
    phi = np.exp(-0.5 * x**2) / _SQRT_2PI
    sign_j = -1.0 if j % 2 else 1.0
    out = (x + 1.0) * sign_j * hermite_eval(j, x) * phi
    if j >= 1:
        sign_jm1 = -1.0 if (j - 1) % 2 else 1.0
        out = out + j * sign_jm1 * hermite_eval(j - 1, x) * phi
    return out


def _affine_gaussian_kernel() -> Kernel:
    derivs = tuple(
        (lambda j: (lambda x: _affine_gaussian_deriv(j, x)))(j) for j in range(_CAT_ORDERS + 1)
    )
    return Kernel(
        name="affine_gaussian",
        derivs=derivs,
        support=None,
        decay="gaussian",
        decay_scale=1.0,
    )


def _bump_deriv_raw(j: int, x: np.ndarray) -> np.ndarray:
    """j-th derivative (j <= 4) of exp(-1/(1-x^2)) on (-1,1), 0 outside.

    Uses the exponential chain rule with u(x) = -1/(1-x^2); masking keeps the
    rational prefactors finite where exp(u) has already underflowed to 0.
    """
    inside = 1.0 - x**2 > 1e-12
    xs = np.where(inside, x, 0.0)
    w = 1.0 / (1.0 - xs**2)
    b = np.exp(-w)
    if j == 0:
        f = b
    else:
        u1 = -2.0 * xs * w**2
        if j == 1:
            f = u1 * b
        else:
            u2 = -2.0 * w**2 - 8.0 * xs**2 * w**3
            if j == 2:
                f = (u2 + u1**2) * b
            else:
                u3 = -24.0 * xs * w**3 - 48.0 * xs**3 * w**4
                if j == 3:
                    f = (u3 + 3.0 * u1 * u2 + u1**3) * b
                elif j == 4:
                    u4 = -24.0 * w**3 - 288.0 * xs**2 * w**4 - 384.0 * xs**4 * w**5
                    f = (u4 + 4.0 * u1 * u3 + 3.0 * u2**2 + 6.0 * u1**2 * u2 + u1**4) * b
                else:
                    raise CapabilityError(f"bump derivatives available to order 4, got {j}")
    return np.where(inside, f, 0.0)


def _bump_kernel() -> Kernel:
    derivs = tuple((lambda j: (lambda x: _bump_deriv_raw(j, x)))(j) for j in range(5))
    return Kernel(name="bump", derivs=derivs, support=(-1.0, 1.0), decay="compact")


def _bump_deriv_kernel() -> Kernel:
    derivs = tuple((lambda j: (lambda x: _bump_deriv_raw(j + 1, x)))(j) for j in range(4))
    return Kernel(name="bump_deriv", derivs=derivs, support=(-1.0, 1.0), decay="compact")


def _zero_kernel() -> Kernel:
    derivs = tuple((lambda x: np.zeros_like(x)) for _ in range(_CAT_ORDERS + 1))
    return Kernel(name="zero", derivs=derivs, support=(-1.0, 1.0), decay="compact")


CATALOGUE: Mapping[str, Callable[..., Kernel]] = {
    "gaussian": _gaussian_kernel,
    "gaussian_deriv": _gaussian_deriv_kernel,
    "affine_gaussian": _affine_gaussian_kernel,
    "bump": _bump_kernel,
    "bump_deriv": _bump_deriv_kernel,
    "zero": _zero_kernel,
}

_SPEC_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z_0-9]*)\s*(?:\((.*)\))?\s*$")


def catalogue_kernel(spec: str) -> Kernel:
    """Build a catalogue kernel from a string like ``gaussian_deriv(l=1,eps=1)``."""
    match = _SPEC_RE.match(spec)
    if not match:
        raise DomainError(f"cannot parse kernel spec {spec!r}")
    name, arg_str = match.group(1), match.group(2)
    if name not in CATALOGUE:
        raise DomainError(f"unknown kernel {name!r}; catalogue: {sorted(CATALOGUE)}")
    kwargs = {}
    if arg_str:
        for part in arg_str.split(","):
            if not part.strip():
                continue
            key, _, val = part.partition("=")
            if not val:
                raise DomainError(f"kernel arguments must be key=value, got {part!r}")
            key = key.strip()
            num = float(val)
            kwargs[key] = int(num) if key == "l" else num
    try:
        return CATALOGUE[name](**kwargs)
    except TypeError as exc:
        raise DomainError(f"bad arguments for kernel {name!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# Moments and norms
# ---------------------------------------------------------------------------

#: |mu[g]| at or below this declares the kernel zero-energy (tied to the
#: quadrature tolerance actually achieved below).
ZERO_ENERGY_TOL = 1e-9


@dataclass(frozen=True)
class KernelMoments:
    """Integrals of a kernel: mu = int g, mu_tilde = int x g(x) dx, weighted
    L1 norms int (1+|x|)^kappa |g|, and L2 norms of derivatives."""

    mu: float
    mu_tilde: float
    weighted_l1: dict
    l2_of_deriv: dict
    zero_energy: bool
    achieved_tol: float


def _integration_bounds(kernel: Kernel) -> tuple[float, float, float]:
    """(lo, hi, tail_bound) for quadrature over the kernel's effective support."""
    if kernel.support is not None:
        lo, hi = kernel.support
        return lo, hi, 0.0
    if kernel.decay == "gaussian":
        cut = 14.0 * kernel.decay_scale
        return -cut, cut, 1e-12
    if kernel.decay == "polynomial":
        p = kernel.decay_scale
        if p <= 1.0:
            raise IntegrabilityError(
                f"kernel {kernel.name!r} with polynomial decay {p} is not integrable"
            )
        cut = max(100.0, (1e-9 * (p - 1.0)) ** (1.0 / (1.0 - p)))
        return -cut, cut, 1e-9
    raise IntegrabilityError(f"kernel {kernel.name!r} has no integrable decay class")


def _quad(f, lo, hi) -> tuple[float, float]:
    val, err = quad(f, lo, hi, epsabs=1e-12, epsrel=1e-12, limit=400)
    return val, err


def compute_moments(
    kernel: Kernel,
    kappas: Sequence[float] = DEFAULT_KAPPAS,
    ells: "Sequence[int] | None" = None,
) -> KernelMoments:
    """Adaptive quadrature of the moments and norms entering the rate theorems.

    Absolute tolerance 1e-10 on compact supports, 1e-9 with tail truncation
    otherwise; the achieved tolerance is recorded on the result.
    """
    if ells is None:
        ells = tuple(range(min(kernel.max_derivative_order, 3) + 1))
    for ell in ells:
        if ell > kernel.max_derivative_order:
            raise CapabilityError(
                f"kernel {kernel.name!r} has no derivative of order {ell}"
            )
    if kernel.decay == "polynomial" and any(
        kernel.decay_scale <= 1.0 + kappa for kappa in kappas
    ):
        raise IntegrabilityError(
            f"weighted L1 norm diverges for decay power {kernel.decay_scale}"
        )
    lo, hi, tail = _integration_bounds(kernel)
    errs = [tail]

    mu, err = _quad(lambda x: kernel.deriv(0, x), lo, hi)
    errs.append(err)
    mu_tilde, err = _quad(lambda x: x * kernel.deriv(0, x), lo, hi)
    errs.append(err)

    weighted = {}
    for kappa in kappas:
        val, err = _quad(lambda x: (1.0 + abs(x)) ** kappa * abs(kernel.deriv(0, x)), lo, hi)
        weighted[float(kappa)] = val
        errs.append(err)

    l2 = {}
    for ell in ells:
        val, err = _quad(lambda x: kernel.deriv(ell, x) ** 2, lo, hi)
        l2[int(ell)] = math.sqrt(max(val, 0.0))
        errs.append(err)

    achieved = max(errs)
    return KernelMoments(
        mu=mu,
        mu_tilde=mu_tilde,
        weighted_l1=weighted,
        l2_of_deriv=l2,
        zero_energy=abs(mu) <= ZERO_ENERGY_TOL,
        achieved_tol=achieved,
    )


# ---------------------------------------------------------------------------
# Antiderivative of a zero-energy kernel
# ---------------------------------------------------------------------------

_ANTIDERIVATIVE_PAIRS = {"bump_deriv": "bump"}


def antiderivative(kernel: Kernel) -> Kernel:
    """F(x) = int_{-inf}^x k, for compactly supported zero-energy k.

    F is again compactly supported (zero energy kills the right tail) and has
    one more derivative order than k, with F' = k exactly.  Catalogue pairs
    (bump_deriv -> bump) are returned in closed form; otherwise F is computed
    by adaptive quadrature from the left support edge.
    """
    if kernel.support is None:
        raise DomainError(
            f"antiderivative requires compact support, kernel {kernel.name!r} has none"
        )
    lo, hi = kernel.support
    mu, _ = _quad(lambda x: kernel.deriv(0, x), lo, hi)
    if abs(mu) > ZERO_ENERGY_TOL:
        raise DomainError(
            f"antiderivative requires zero energy, kernel {kernel.name!r} has mu={mu:.3e}"
        )
    base = kernel.name.split("(")[0]
    if base in _ANTIDERIVATIVE_PAIRS:
        return CATALOGUE[_ANTIDERIVATIVE_PAIRS[base]]()

    def primitive(x):
        x_arr = np.asarray(x, dtype=np.float64)
        flat = np.atleast_1d(x_arr).ravel()
        out = np.zeros_like(flat)
        for i, xi in enumerate(flat):
            if xi <= lo or xi >= hi:
                out[i] = 0.0
            else:
                out[i] = quad(lambda y: kernel.deriv(0, y), lo, xi, limit=400)[0]
        out = out.reshape(np.atleast_1d(x_arr).shape)
        return float(out) if x_arr.ndim == 0 else out

    derivs = (primitive,) + kernel.derivs
    return Kernel(
        name=f"int({kernel.name})",
        derivs=derivs,
        support=(lo, hi),
        decay="compact",
    )
