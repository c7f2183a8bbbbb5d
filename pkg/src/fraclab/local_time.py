"""Three estimation routes for the spatial derivatives of local time.

Given a sampled path X on a uniform grid, level ``lam`` and order ``ell``:

* ``g_statistic``   -- the discrete high-frequency sum
  sum_{i=2}^{floor(n t)} g^{(ell)}(n^a (X_{(i-1)/n} - lam)), optionally
  normalized by n^{a(ell+1)-1};
* ``mollified_dlt`` -- trapezoidal discretization of
  int_0^t phi_eps^{(ell)}(X_s - lam) ds with the Gaussian mollifier phi_eps;
* ``fourier_dlt``   -- truncated spectral form
  (1/2pi) int_{-N}^{N} int_0^t (i xi)^ell e^{i xi (X_s - lam)} ds dxi,
  optionally damped by exp(-eps xi^2 / 2), in which case it coincides with
  the mollified route up to quadrature error.

The occupation measure of an interval closes the loop: integrating the
order-0 profile over levels reproduces the occupation time.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import CapabilityError, DomainError, NumericalError
from .fbm import FbmPath, _floor_index
from .kernels import Kernel, mollifier_deriv

__all__ = [
    "StatisticSpec",
    "DltEstimate",
    "g_statistic",
    "g_statistic_curve",
    "mollified_dlt",
    "mollified_dlt_curve",
    "fourier_dlt",
    "occupation_time",
    "dlt_profile",
]


@dataclass(frozen=True)
class StatisticSpec:
    """Order ell, scaling exponent a, level lam, horizon t of one estimate.

    The theorems want 0 < a <= H; that is a hypothesis of the limit results,
    not a precondition of the computation, so it is not enforced here.
    """

    ell: int
    a: float
    lam: float
    t: float

    def __post_init__(self):
        if self.ell < 0 or int(self.ell) != self.ell:
            raise DomainError(f"derivative order must be a nonnegative integer, got {self.ell!r}")
        if self.t < 0:
            raise DomainError(f"time horizon must be nonnegative, got {self.t!r}")
        object.__setattr__(self, "ell", int(self.ell))


@dataclass(frozen=True)
class DltEstimate:
    """One estimated value, tagged with its route and replay parameters."""

    value: float
    route: str
    params: dict
    ell: int
    lam: float
    t: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "DltEstimate":
        return cls(**json.loads(text))


def _check_horizon(path: FbmPath, t: float) -> None:
    if t > path.grid.horizon + 1e-12:
        raise DomainError(f"time {t} exceeds path horizon {path.grid.horizon}")


# ---------------------------------------------------------------------------
# Discrete statistic
# ---------------------------------------------------------------------------

def g_statistic(
    path: FbmPath, kernel: Kernel, spec: StatisticSpec, normalized: bool = True
) -> DltEstimate:
    """High-frequency sum of g^{(ell)} over the first floor(n t) grid points.

    The sum runs over i = 2..floor(n t), evaluating at X_{(i-1)/n}; it is 0
    when n t < 2.  With ``normalized`` the raw sum is scaled by
    n^{a(ell+1)-1}, the normalization under which it estimates
    mu[g] * L_t^{(ell)}(lam).
    """
    _check_horizon(path, spec.t)
    if spec.ell > kernel.max_derivative_order:
        raise CapabilityError(
            f"kernel {kernel.name!r} has no derivative of order {spec.ell}"
        )
    n = path.grid.n
    m_t = _floor_index(n * spec.t)
    if m_t < 2:
        raw = 0.0
    else:
        args = (path.values[1:m_t] - spec.lam) * float(n) ** spec.a
        raw = float(np.sum(kernel.deriv(spec.ell, args)))
    value = raw * float(n) ** (spec.a * (spec.ell + 1) - 1.0) if normalized else raw
    return DltEstimate(
        value=value,
        route="discrete",
        params={
            "n": n,
            "a": spec.a,
            "kernel": kernel.name,
            "normalized": bool(normalized),
        },
        ell=spec.ell,
        lam=spec.lam,
        t=spec.t,
    )


def g_statistic_curve(
    path: FbmPath,
    kernel: Kernel,
    ell: int,
    a: float,
    lam: float,
    t_values: Sequence[float],
    normalized: bool = True,
) -> np.ndarray:
    """Values of the statistic at several horizons, via one prefix sum."""
    n = path.grid.n
    terms = kernel.deriv(ell, (path.values[1:] - lam) * float(n) ** a)
    prefix = np.concatenate([[0.0], np.cumsum(terms)])  # prefix[j] = sum over i=2..j+1
    scale = float(n) ** (a * (ell + 1) - 1.0) if normalized else 1.0
    out = np.empty(len(t_values))
    for idx, t in enumerate(t_values):
        _check_horizon(path, t)
        m_t = _floor_index(n * t)
        out[idx] = scale * prefix[m_t - 1] if m_t >= 2 else 0.0
    return out


# ---------------------------------------------------------------------------
# Trapezoid machinery shared by the time-integral routes
# ---------------------------------------------------------------------------

def _trapezoid_nodes(path: FbmPath, t0: float, t1: float) -> tuple[np.ndarray, np.ndarray]:
    """(x values, weights) of the trapezoid rule for int_{t0}^{t1} f(X_s) ds.

    Integrates over the path's own grid; non-grid-aligned endpoints add a
    partial cell with the path linearly interpolated at the endpoint.
    """
    if t1 < t0 - 1e-12:
        raise DomainError(f"empty integration interval [{t0}, {t1}]")
    _check_horizon(path, t1)
    if t0 < -1e-12:
        raise DomainError(f"integration start {t0} below 0")
    n = path.grid.n
    i_lo = int(math.ceil(n * t0 - 1e-9))
    i_hi = _floor_index(n * t1)
    xs: list[float] = []
    ws: list[float] = []
    if i_hi >= i_lo:
        node_x = path.values[i_lo : i_hi + 1]
        node_w = np.full(i_hi - i_lo + 1, 1.0 / n)
        node_w[0] *= 0.5
        node_w[-1] *= 0.5
        if i_hi == i_lo:
            node_w[:] = 0.0
        xs_arr = [node_x]
        ws_arr = [node_w]
        left_gap = i_lo / n - t0
        if left_gap > 1e-12:
            x_t0 = _interp_value(path, t0)
            xs_arr.append(np.array([x_t0, path.values[i_lo]]))
            ws_arr.append(np.array([left_gap / 2, left_gap / 2]))
        right_gap = t1 - i_hi / n
        if right_gap > 1e-12:
            x_t1 = _interp_value(path, t1)
            xs_arr.append(np.array([path.values[i_hi], x_t1]))
            ws_arr.append(np.array([right_gap / 2, right_gap / 2]))
        return np.concatenate(xs_arr), np.concatenate(ws_arr)
    # whole interval inside one grid cell
    xa, xb = _interp_value(path, t0), _interp_value(path, t1)
    gap = t1 - t0
    return np.array([xa, xb]), np.array([gap / 2, gap / 2])


def _interp_value(path: FbmPath, t: float) -> float:
    n = path.grid.n
    i = min(_floor_index(n * t), path.grid.num_nodes - 1)
    if i >= path.grid.num_nodes - 1:
        return float(path.values[-1])
    frac = n * t - i
    return float((1 - frac) * path.values[i] + frac * path.values[i + 1])


# ---------------------------------------------------------------------------
# Mollified route
# ---------------------------------------------------------------------------

def mollified_dlt(
    path: FbmPath, spec: StatisticSpec, epsilon: float, t_start: float = 0.0
) -> DltEstimate:
    """Trapezoid discretization of int_{t_start}^t phi_eps^{(ell)}(X_s - lam) ds."""
    if epsilon <= 0:
        raise DomainError(f"mollifier variance must be positive, got {epsilon!r}")
    xs, ws = _trapezoid_nodes(path, t_start, spec.t)
    value = float(ws @ mollifier_deriv(spec.ell, epsilon, xs - spec.lam))
    return DltEstimate(
        value=value,
        route="mollified",
        params={"epsilon": epsilon, "n": path.grid.n, "t_start": t_start},
        ell=spec.ell,
        lam=spec.lam,
        t=spec.t,
    )


def mollified_dlt_curve(
    path: FbmPath, ell: int, epsilon: float, lam: float, t_values: Sequence[float]
) -> np.ndarray:
    """Mollified values at several grid-aligned horizons via one cumulative pass."""
    if epsilon <= 0:
        raise DomainError(f"mollifier variance must be positive, got {epsilon!r}")
    n = path.grid.n
    f = mollifier_deriv(ell, epsilon, path.values - lam)
    cells = (f[1:] + f[:-1]) / (2.0 * n)
    cumulative = np.concatenate([[0.0], np.cumsum(cells)])
    out = np.empty(len(t_values))
    for idx, t in enumerate(t_values):
        _check_horizon(path, t)
        out[idx] = cumulative[_floor_index(n * t)]
    return out


# ---------------------------------------------------------------------------
# Fourier route
# ---------------------------------------------------------------------------

_XI_CHUNK = 256


def fourier_dlt(
    path: FbmPath,
    spec: StatisticSpec,
    xi_cutoff: float,
    xi_step: float,
    damping: float = 0.0,
) -> DltEstimate:
    """Truncated Fourier representation, trapezoid in both time and frequency.

    Computes (1/2pi) int_{-N}^{N} (i xi)^ell e^{-damping xi^2/2}
    [int_0^t e^{i xi (X_s - lam)} ds] dxi on a symmetric frequency grid.  The
    exact integral is real by conjugate symmetry; the numerical imaginary
    residue is checked against a 1e-8 relative threshold.
    """
    if xi_cutoff <= 0 or xi_step <= 0:
        raise DomainError("frequency cutoff and step must be positive")
    if damping < 0:
        raise DomainError(f"damping variance must be nonnegative, got {damping!r}")
    half = max(int(round(xi_cutoff / xi_step)), 1)
    xi = np.arange(-half, half + 1, dtype=np.float64) * xi_step
    xs, ws = _trapezoid_nodes(path, 0.0, spec.t)
    shifted = xs - spec.lam

    total = 0.0 + 0.0j
    abs_sum = 0.0
    for start in range(0, xi.size, _XI_CHUNK):
        chunk = xi[start : start + _XI_CHUNK]
        phase = np.exp(1j * np.outer(chunk, shifted))
        time_integral = phase @ ws
        f = (1j * chunk) ** spec.ell * time_integral
        if damping > 0.0:
            f = f * np.exp(-0.5 * damping * chunk**2)
        weights = np.full(chunk.size, xi_step)
        if start == 0:
            weights[0] = xi_step / 2
        if start + chunk.size == xi.size:
            weights[-1] = xi_step / 2
        total += weights @ f
        abs_sum += float(weights @ np.abs(f))

    value_c = total / (2.0 * math.pi)
    scale = max(abs(value_c.real), abs_sum / (2.0 * math.pi) * 1e-6, 1e-300)
    if abs(value_c.imag) > 1e-8 * scale:
        raise NumericalError(
            f"fourier route imaginary residue {value_c.imag:.3e} exceeds 1e-8 "
            f"relative to {scale:.3e}; frequency grid is not symmetric enough"
        )
    return DltEstimate(
        value=float(value_c.real),
        route="fourier",
        params={
            "xi_cutoff": half * xi_step,
            "xi_step": xi_step,
            "damping": damping,
            "n": path.grid.n,
        },
        ell=spec.ell,
        lam=spec.lam,
        t=spec.t,
    )


# ---------------------------------------------------------------------------
# Occupation measure and level profiles
# ---------------------------------------------------------------------------

def occupation_time(path: FbmPath, interval: tuple, t: float) -> float:
    """Trapezoid-discretized time spent in [lo, hi] up to t.

    Plain node counting with half-weighted endpoints; no sub-grid crossing
    interpolation, so the result carries an O(1/n) bias at level crossings.
    """
    lo, hi = interval
    if not lo < hi:
        raise DomainError(f"interval must satisfy lo < hi, got ({lo}, {hi})")
    xs, ws = _trapezoid_nodes(path, 0.0, t)
    inside = (xs >= lo) & (xs <= hi)
    return float(ws @ inside.astype(np.float64))


_LAMBDA_CHUNK = 256


def dlt_profile(
    path: FbmPath,
    ell: int,
    epsilon: float,
    lambda_grid: Sequence[float],
    t: float,
) -> list[DltEstimate]:
    """Mollified estimates on a grid of levels, one pass over the path.

    Levels are processed in chunks so the (levels x nodes) argument matrix
    stays small on fine grids.
    """
    if epsilon <= 0:
        raise DomainError(f"mollifier variance must be positive, got {epsilon!r}")
    lams = np.asarray(lambda_grid, dtype=np.float64)
    xs, ws = _trapezoid_nodes(path, 0.0, t)
    values = np.empty(lams.size)
    for start in range(0, lams.size, _LAMBDA_CHUNK):
        block = lams[start : start + _LAMBDA_CHUNK]
        diffs = xs[None, :] - block[:, None]
        values[start : start + block.size] = mollifier_deriv(ell, epsilon, diffs) @ ws
    return [
        DltEstimate(
            value=float(v),
            route="mollified",
            params={"epsilon": epsilon, "n": path.grid.n, "t_start": 0.0},
            ell=int(ell),
            lam=float(lam),
            t=float(t),
        )
        for lam, v in zip(lams, values)
    ]
