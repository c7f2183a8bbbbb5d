"""Exact fractional Brownian motion simulation and Gaussian linear algebra.

The process is centered Gaussian with covariance

    R(s, t) = (s^{2H} + t^{2H} - |t - s|^{2H}) / 2,   0 < H < 1.

Two exact samplers are provided on uniform grids: a Cholesky factorization of
the full covariance (O(m^3) reference) and circulant embedding of the
stationary increment sequence (O(m log m)).  The module also exposes the
closed-form Gaussian identities used by the estimators and oracles:
increment inner products, conditional variances by Gaussian regression, and
the determinant/telescoping-variance decomposition.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np

from .errors import DomainError, EmbeddingError, NumericalError, ResourceError

__all__ = [
    "Hurst",
    "TimeGrid",
    "FbmPath",
    "GaussianConditioning",
    "GENERATOR_NAME",
    "rng_for",
    "cov",
    "cov_matrix",
    "increment_inner_product",
    "simulate",
    "subsample",
    "conditional_variance",
    "det_decomposition",
    "local_nondeterminism_probe",
    "save_path",
    "load_path",
]

#: Counter-based generator backing all simulation; recorded in every report.
GENERATOR_NAME = "numpy.Philox(SeedSequence(seed, spawn_key=stream))"

# Guard rails for the two samplers (float64 working memory).
_CHOLESKY_MAX_NODES = 20_000
_CIRCULANT_MAX_NODES = 2**24

# Relative floor below the largest circulant eigenvalue: anything more
# negative is a real embedding failure, anything above is FFT noise.
_EIG_CLAMP_REL = 1e-9


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for (seed, stream...) -- order independent.

    Distinct streams (e.g. replication indices) give statistically
    independent, individually reproducible generators.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(s) for s in stream))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Hurst:
    """Hurst parameter, constrained to the open interval (0, 1)."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not np.isfinite(v) or not 0.0 < v < 1.0:
            raise DomainError(f"Hurst parameter must lie in (0, 1), got {self.value!r}")
        object.__setattr__(self, "value", v)


def as_hurst(h: "Hurst | float") -> Hurst:
    return h if isinstance(h, Hurst) else Hurst(float(h))


def _floor_index(x: float) -> int:
    """floor(x) robust to float drift of grid-aligned products like n*t."""
    return int(np.floor(x + 1e-9))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_i = i/n for i = 0..floor(n*horizon).

    Times are handled as (index, grid) pairs: nodes are always computed as
    integer/n so nested grids share bit-identical node values.
    """

    n: int
    horizon: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"grid frequency n must be a positive integer, got {self.n!r}")
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise DomainError(f"grid horizon must be positive, got {self.horizon!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def num_nodes(self) -> int:
        return _floor_index(self.n * self.horizon) + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.num_nodes, dtype=np.float64) / self.n

    def node_index(self, t: float) -> int:
        """Largest node index i with i/n <= t (tolerant of float drift)."""
        if t < -1e-12 or t > self.horizon + 1e-12:
            raise DomainError(f"time {t} outside grid horizon {self.horizon}")
        return min(_floor_index(self.n * t), self.num_nodes - 1)


@dataclass(frozen=True)
class FbmPath:
    """One exactly-sampled trajectory on a uniform grid, with provenance.

    ``stream`` is the RNG sub-stream (e.g. a replication index) the path was
    drawn from; (seed, stream, grid, hurst, method) replay it bit for bit.
    """

    hurst: Hurst
    grid: TimeGrid
    values: np.ndarray
    seed: int
    method: str
    generator: str = GENERATOR_NAME
    stream: tuple = ()

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.shape[0] != self.grid.num_nodes:
            raise DomainError(
                f"path length {vals.shape} does not match grid node count {self.grid.num_nodes}"
            )
        if vals[0] != 0.0:
            raise DomainError("fBm paths start at X_0 = 0")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "hurst", as_hurst(self.hurst))

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    def shifted(self, c: float) -> "FbmPath":
        """The path with c added to every value except the pinned origin.

        Used by equivariance tests; not a valid fBm sample (X_0 stays 0 only
        for c = 0), so it bypasses the origin check by re-anchoring.
        """
        vals = self.values + float(c)
        obj = object.__new__(FbmPath)
        object.__setattr__(obj, "hurst", self.hurst)
        object.__setattr__(obj, "grid", self.grid)
        vals.setflags(write=False)
        object.__setattr__(obj, "values", vals)
        object.__setattr__(obj, "seed", self.seed)
        object.__setattr__(obj, "method", self.method)
        object.__setattr__(obj, "generator", self.generator)
        object.__setattr__(obj, "stream", self.stream)
        return obj


@dataclass(frozen=True)
class GaussianConditioning:
    """Query Var[X_t | X_{t_1}, ..., X_{t_m}] for distinct positive times."""

    target_time: float
    conditioner_times: tuple
    hurst: Hurst

    def __post_init__(self):
        ts = tuple(float(t) for t in self.conditioner_times)
        allt = (float(self.target_time),) + ts
        if any(t <= 0 for t in allt):
            raise DomainError("conditioning times must be strictly positive")
        if len(set(allt)) != len(allt):
            raise DomainError("conditioning times must be distinct")
        object.__setattr__(self, "target_time", float(self.target_time))
        object.__setattr__(self, "conditioner_times", ts)
        object.__setattr__(self, "hurst", as_hurst(self.hurst))


# ---------------------------------------------------------------------------
# Covariance identities
# ---------------------------------------------------------------------------

def cov(s, t, hurst) -> "float | np.ndarray":
    """fBm covariance R(s, t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2."""
    h = as_hurst(hurst).value
    s_arr = np.asarray(s, dtype=np.float64)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(s_arr < 0) or np.any(t_arr < 0):
        raise DomainError("covariance times must be nonnegative")
    two_h = 2.0 * h
    out = 0.5 * (s_arr**two_h + t_arr**two_h - np.abs(t_arr - s_arr) ** two_h)
    if out.ndim == 0:
        return float(out)
    return out


def cov_matrix(times: Sequence[float], hurst) -> np.ndarray:
    """Covariance matrix of (X_{t_1}, ..., X_{t_m})."""
    t = np.asarray(times, dtype=np.float64)
    return cov(t[:, None], t[None, :], hurst)


def increment_inner_product(u: float, h: float, v: float, k: float, hurst) -> float:
    """E[(X_{u+h} - X_u)(X_{v+k} - X_v)] as a four-term covariance combination."""
    if h <= 0 or k <= 0:
        raise DomainError("increment widths must be positive")
    if u < 0 or v < 0:
        raise DomainError("increment start times must be nonnegative")
    return float(
        cov(u + h, v + k, hurst) - cov(u + h, v, hurst) - cov(u, v + k, hurst) + cov(u, v, hurst)
    )


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

def _fgn_autocov(m: int, h: float) -> np.ndarray:
    """Autocovariance gamma(0..m) of unit-spacing fractional Gaussian noise."""
    j = np.arange(m + 1, dtype=np.float64)
    return 0.5 * ((j + 1) ** (2 * h) - 2 * j ** (2 * h) + np.abs(j - 1) ** (2 * h))


def _simulate_cholesky(m: int, grid: TimeGrid, h: float, rng: np.random.Generator) -> np.ndarray:
    if m > _CHOLESKY_MAX_NODES:
        raise ResourceError(
            f"cholesky simulation of {m} nodes exceeds the {_CHOLESKY_MAX_NODES}-node budget; "
            "use method='circulant'"
        )
    c = cov_matrix(grid.nodes[1:], h)
    try:
        chol = np.linalg.cholesky(c)
    except np.linalg.LinAlgError:
        # One bounded, documented regularization attempt before failing.
        jitter = 1e-12 * np.trace(c) / m
        try:
            chol = np.linalg.cholesky(c + jitter * np.eye(m))
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"fBm covariance not factorizable even with jitter {jitter:.3e} "
                f"(m={m}, H={h})"
            ) from exc
    return chol @ rng.standard_normal(m)


def _simulate_circulant(m: int, grid: TimeGrid, h: float, rng: np.random.Generator) -> np.ndarray:
    if m > _CIRCULANT_MAX_NODES:
        raise ResourceError(f"circulant simulation of {m} nodes exceeds the budget")
    gamma = _fgn_autocov(m, h)
    first_row = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2m
    eigs = np.fft.fft(first_row).real
    floor = -_EIG_CLAMP_REL * eigs.max()
    if eigs.min() < floor:
        raise EmbeddingError(
            f"circulant embedding produced eigenvalue {eigs.min():.3e} below the "
            f"noise floor {floor:.3e} (m={m}, H={h}); fall back to method='cholesky'"
        )
    eigs = np.clip(eigs, 0.0, None)

    # Hermitian-symmetric complex normals so the synthesized sequence is real.
    z = np.empty(2 * m, dtype=np.complex128)
    z[0] = rng.standard_normal()
    z[m] = rng.standard_normal()
    if m > 1:
        ab = rng.standard_normal((m - 1, 2))
        z[1:m] = (ab[:, 0] + 1j * ab[:, 1]) / np.sqrt(2.0)
        z[m + 1 :] = np.conj(z[1:m][::-1])

    fgn = np.sqrt(2 * m) * np.fft.ifft(np.sqrt(eigs) * z).real[:m]
    return np.cumsum(fgn * grid.n ** (-h))


def simulate(
    grid: TimeGrid, hurst, seed: int, method: str = "circulant", stream: tuple = ()
) -> FbmPath:
    """Sample one fBm path on the grid; exact in law for both methods.

    ``cholesky`` factors the full covariance (reference, O(m^3)); ``circulant``
    embeds the stationary increment autocovariance in a circulant matrix,
    synthesizes fractional Gaussian noise by FFT and cumulatively sums it.
    Identical (grid, hurst, seed, stream, method) reproduce the path bit for
    bit; distinct streams (replication indices) are independent.
    """
    h = as_hurst(hurst).value
    if method not in ("cholesky", "circulant"):
        raise DomainError(f"unknown simulation method {method!r}")
    m = grid.num_nodes - 1
    rng = rng_for(seed, *stream)
    if m == 0:
        inner = np.empty(0)
    elif method == "cholesky":
        inner = _simulate_cholesky(m, grid, h, rng)
    else:
        inner = _simulate_circulant(m, grid, h, rng)
    values = np.concatenate([[0.0], inner])
    return FbmPath(
        hurst=as_hurst(hurst),
        grid=grid,
        values=values,
        seed=int(seed),
        method=method,
        stream=tuple(int(s) for s in stream),
    )


def subsample(path: FbmPath, factor: int) -> FbmPath:
    """Restrict the path to every factor-th node (no re-simulation)."""
    factor = int(factor)
    if factor < 1:
        raise DomainError(f"subsampling factor must be >= 1, got {factor}")
    if path.grid.n % factor != 0:
        raise DomainError(f"factor {factor} does not divide grid frequency n={path.grid.n}")
    if factor == 1:
        return path
    coarse = TimeGrid(path.grid.n // factor, path.grid.horizon)
    values = path.values[::factor][: coarse.num_nodes].copy()
    return FbmPath(
        hurst=path.hurst,
        grid=coarse,
        values=values,
        seed=path.seed,
        method=path.method,
        generator=path.generator,
        stream=path.stream,
    )


# ---------------------------------------------------------------------------
# Conditional variances and determinant decomposition
# ---------------------------------------------------------------------------

def _cond_var(t: float, conditioners: np.ndarray, h: float) -> float:
    var = float(cov(t, t, h))
    if conditioners.size == 0:
        return var
    sigma = cov_matrix(conditioners, h)
    r = np.asarray(cov(conditioners, t, h), dtype=np.float64).reshape(-1)
    try:
        sol = np.linalg.solve(sigma, r)
    except np.linalg.LinAlgError:
        sigma = sigma + 1e-12 * np.eye(sigma.shape[0])
        try:
            sol = np.linalg.solve(sigma, r)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "conditioner covariance singular beyond jitter "
                f"(cond={np.linalg.cond(sigma):.3e}, times={conditioners.tolist()})"
            ) from exc
    out = var - float(r @ sol)
    if out < -1e-10:
        raise NumericalError(
            f"conditional variance {out:.3e} < 0 beyond tolerance "
            f"(cond={np.linalg.cond(sigma):.3e}); conditioners too close"
        )
    return max(out, 0.0)


def conditional_variance(query: GaussianConditioning) -> float:
    """Var[X_t | X_{t_1}, ..., X_{t_m}] by Gaussian regression (>= 0)."""
    return _cond_var(
        query.target_time,
        np.asarray(query.conditioner_times, dtype=np.float64),
        query.hurst.value,
    )


def det_decomposition(times: Sequence[float], hurst) -> tuple[float, float]:
    """Determinant of Cov(X_{t_1},...,X_{t_r}) and its telescoping product.

    The product is Var[X_{t_1}] * prod_j Var[X_{t_j} | X_{t_1},...,X_{t_{j-1}}];
    the two agree exactly for any ordering of the times.
    """
    t = np.asarray(times, dtype=np.float64)
    if t.size < 1:
        raise DomainError("need at least one time")
    if np.any(t <= 0):
        raise DomainError("times must be strictly positive")
    if len(set(t.tolist())) != t.size:
        raise DomainError("times must be distinct")
    h = as_hurst(hurst).value
    det = float(np.linalg.det(cov_matrix(t, h)))
    prod = 1.0
    for j in range(t.size):
        prod *= _cond_var(float(t[j]), t[:j], h)
    return det, prod


def local_nondeterminism_probe(
    samples: int, hurst, horizon: float = 2.0, seed: int = 0, max_conditioners: int = 5
) -> float:
    """Empirical minimum of Var[X_t | X_{t_i}] / min_i |t - t_i|^{2H}.

    The theoretical constant is not quantified here; positivity of the
    returned ratio is the testable claim (t_0 = 0 included in the minimum).
    """
    h = as_hurst(hurst).value
    rng = rng_for(seed, 981)
    worst = np.inf
    for _ in range(samples):
        m = int(rng.integers(1, max_conditioners + 1))
        times = rng.uniform(1e-3, horizon, size=m + 1)
        while len(set(times.tolist())) != m + 1:
            times = rng.uniform(1e-3, horizon, size=m + 1)
        t, conds = float(times[0]), times[1:]
        gaps = np.abs(t - np.concatenate([[0.0], conds]))
        denom = float(gaps.min() ** (2 * h))
        if denom == 0.0:
            continue
        ratio = _cond_var(t, conds, h) / denom
        worst = min(worst, ratio)
    return float(worst)


# ---------------------------------------------------------------------------
# Path import/export
# ---------------------------------------------------------------------------

_BINARY_MAGIC = b"FBPATH1\n"


def _header(path: FbmPath) -> dict:
    return {
        "hurst": path.hurst.value,
        "n": path.grid.n,
        "horizon": path.grid.horizon,
        "seed": path.seed,
        "method": path.method,
        "generator": path.generator,
    }


def save_path(path: FbmPath, file: str, format: str = "binary") -> None:
    """Write a path record: header (H, n, T, seed, method, generator) + values.

    Binary mode stores values as little-endian float64; csv stores one value
    per line after ``# key=value`` header comments.  Both round-trip exactly.
    """
    if format == "binary":
        with open(file, "wb") as fh:
            fh.write(_BINARY_MAGIC)
            fh.write(json.dumps(_header(path), sort_keys=True).encode() + b"\n")
            fh.write(path.values.astype("<f8").tobytes())
    elif format == "csv":
        with open(file, "w", encoding="utf-8") as fh:
            fh.write("# fraclab-path v1\n")
            for key, val in _header(path).items():
                fh.write(f"# {key}={json.dumps(val)}\n")
            fh.write("value\n")
            for v in path.values:
                fh.write(f"{float(v)!r}\n")
    else:
        raise DomainError(f"unknown path format {format!r}")


def load_path(file: str) -> FbmPath:
    """Read a path written by :func:`save_path` (format sniffed from content)."""
    with open(file, "rb") as fh:
        magic = fh.read(len(_BINARY_MAGIC))
        if magic == _BINARY_MAGIC:
            header = json.loads(fh.readline().decode())
            values = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
        else:
            fh.seek(0)
            text = fh.read().decode("utf-8").splitlines()
            if not text or text[0].strip() != "# fraclab-path v1":
                raise DomainError(f"{file}: not a fraclab path file")
            header = {}
            body_at = 0
            for i, line in enumerate(text[1:], start=1):
                if line.startswith("# "):
                    key, _, raw = line[2:].partition("=")
                    header[key] = json.loads(raw)
                else:
                    body_at = i
                    break
            values = np.array([float(x) for x in text[body_at + 1 :] if x.strip()])
    grid = TimeGrid(int(header["n"]), float(header["horizon"]))
    return FbmPath(
        hurst=Hurst(float(header["hurst"])),
        grid=grid,
        values=values,
        seed=int(header["seed"]),
        method=str(header["method"]),
        generator=str(header.get("generator", GENERATOR_NAME)),
    )
