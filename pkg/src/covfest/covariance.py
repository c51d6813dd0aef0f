"""Covariance matrices, Gaussian sampling and the spiked-covariance family."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from covfest import rng as _rng
from covfest.errors import DegenerateCovariance, InvalidInput

__all__ = [
    "CovarianceMatrix",
    "SampleBatch",
    "SpikedModel",
    "sample_covariance",
    "effective_rank",
    "sample_gaussian",
    "spiked_covariance",
    "spiked_kl",
    "operator_norm",
    "read_matrix_csv",
    "read_batch_csv",
]

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
# eigenvalues below this fraction of the top one are zeroed in the square root
SQRT_CUTOFF = 1e-12


class CovarianceMatrix:
    """Immutable symmetric d x d matrix with a lazily computed, cached spectrum.

    ``spectrum`` is sorted in descending order and ``eigvecs[:, i]`` is the
    eigenvector of ``spectrum[i]``.
    """

    def __init__(self, entries: ArrayLike, *, check: bool = True):
        a = np.array(entries, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise InvalidInput(f"covariance must be a non-empty square matrix, got shape {a.shape}")
        if check:
            if not np.all(np.isfinite(a)):
                raise InvalidInput("covariance entries must be finite")
            scale = max(1.0, float(np.max(np.abs(a))))
            if np.max(np.abs(a - a.T)) > SYMMETRY_TOL * scale:
                raise InvalidInput("covariance matrix is not symmetric")
        a.setflags(write=False)
        self._entries = a

    @property
    def entries(self) -> NDArray[np.float64]:
        return self._entries

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    @cached_property
    def _eigh(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        w, v = np.linalg.eigh(self._entries)
        w, v = w[::-1].copy(), v[:, ::-1].copy()
        w.setflags(write=False)
        v.setflags(write=False)
        return w, v

    @property
    def spectrum(self) -> NDArray[np.float64]:
        return self._eigh[0]

    @property
    def eigvecs(self) -> NDArray[np.float64]:
        return self._eigh[1]

    @cached_property
    def clamped_spectrum(self) -> NDArray[np.float64]:
        w = np.clip(self.spectrum, 0.0, None)
        w.setflags(write=False)
        return w

    @property
    def norm(self) -> float:
        """Operator norm, i.e. the top eigenvalue (clamped at 0)."""
        return float(self.clamped_spectrum[0])

    @property
    def trace(self) -> float:
        return float(np.trace(self._entries))

    def is_psd(self) -> bool:
        w = self.spectrum
        return bool(w[-1] >= -PSD_TOL * max(w[0], 0.0))

    @cached_property
    def sqrt(self) -> NDArray[np.float64]:
        """Symmetric square root; eigenvalues below 1e-12 * lambda_1 are treated as 0."""
        w = self.clamped_spectrum
        top = w[0]
        root = np.where(w > SQRT_CUTOFF * top, np.sqrt(w), 0.0) if top > 0 else np.zeros_like(w)
        v = self.eigvecs
        s = (v * root) @ v.T
        s = 0.5 * (s + s.T)
        s.setflags(write=False)
        return s

    def apply(self, fn) -> NDArray[np.float64]:
        """Spectral calculus: V diag(fn(lambda)) V^T."""
        v = self.eigvecs
        out = (v * fn(self.spectrum)) @ v.T
        return 0.5 * (out + out.T)

    def __array__(self, dtype=None, copy=None):
        return self._entries if dtype is None else self._entries.astype(dtype)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CovarianceMatrix):
            return NotImplemented
        return np.array_equal(self._entries, other._entries)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"CovarianceMatrix(dim={self.dim})"

    @classmethod
    def identity(cls, d: int) -> CovarianceMatrix:
        return cls(np.eye(d))

    @classmethod
    def diag(cls, values: ArrayLike) -> CovarianceMatrix:
        return cls(np.diag(np.asarray(values, dtype=np.float64)))

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {"dim": self.dim, "entries": self._entries.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> CovarianceMatrix:
        try:
            dim, entries = int(obj["dim"]), obj["entries"]
        except (KeyError, TypeError) as exc:
            raise InvalidInput(f"matrix JSON needs 'dim' and 'entries': {exc}") from None
        m = cls(entries)
        if m.dim != dim:
            raise InvalidInput(f"declared dim {dim} does not match entries ({m.dim})")
        return m

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> CovarianceMatrix:
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        return _rows_to_csv(self._entries)

    @classmethod
    def from_csv(cls, text: str) -> CovarianceMatrix:
        return cls(_csv_to_rows(text, header=False))


def read_matrix_csv(path: str | Path) -> CovarianceMatrix:
    return CovarianceMatrix.from_csv(Path(path).read_text())


def _rows_to_csv(a: NDArray[np.float64], header: list[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for row in a:
        # repr of a Python float is the shortest round-trip decimal
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def _csv_to_rows(text: str, header: bool) -> NDArray[np.float64]:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if header:
        rows = rows[1:]
    if not rows:
        raise InvalidInput("CSV contains no data rows")
    try:
        return np.array([[float(x) for x in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise InvalidInput(f"malformed CSV: {exc}") from None


@dataclass(frozen=True)
class SampleBatch:
    """n x d matrix of observations; row i is X_i."""

    data: NDArray[np.float64]
    seed: int | None = None
    generator_id: str | None = None

    def __post_init__(self):
        a = np.array(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] == 0:
            raise InvalidInput(f"batch must be an n x d array, got shape {a.shape}")
        if a.shape[0] < 1:
            raise InvalidInput("batch must contain at least one row")
        if not np.all(np.isfinite(a)):
            raise InvalidInput("batch rows must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def to_csv(self) -> str:
        return _rows_to_csv(self.data, header=[f"x{i + 1}" for i in range(self.dim)])

    @classmethod
    def from_csv(cls, text: str) -> SampleBatch:
        return cls(_csv_to_rows(text, header=True))


def read_batch_csv(path: str | Path) -> SampleBatch:
    return SampleBatch.from_csv(Path(path).read_text())


def _as_cov(sigma) -> CovarianceMatrix:
    return sigma if isinstance(sigma, CovarianceMatrix) else CovarianceMatrix(sigma)


def _gram(x: NDArray[np.float64]) -> NDArray[np.float64]:
    s = x.T @ x / x.shape[0]
    return 0.5 * (s + s.T)


def sample_covariance(batch: SampleBatch | ArrayLike) -> CovarianceMatrix:
    """(1/n) sum_i X_i X_i^T (no centering: the data are mean zero by assumption)."""
    x = batch.data if isinstance(batch, SampleBatch) else np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInput("sample covariance needs a non-empty n x d batch")
    return CovarianceMatrix(_gram(x), check=False)


def effective_rank(sigma: CovarianceMatrix | ArrayLike) -> float:
    """tr(Sigma) / ||Sigma||, which lies in [1, rank(Sigma)]."""
    sigma = _as_cov(sigma)
    top = sigma.norm
    if top <= 0.0:
        raise DegenerateCovariance("effective rank is undefined for the zero matrix")
    return float(np.sum(sigma.clamped_spectrum)) / top


def operator_norm(a: ArrayLike) -> float:
    """Spectral norm of a symmetric matrix (largest absolute eigenvalue)."""
    return float(np.max(np.abs(np.linalg.eigvalsh(np.asarray(a, dtype=np.float64)))))


def gaussian_rows(sigma: CovarianceMatrix, n: int, gen: np.random.Generator) -> NDArray[np.float64]:
    z = gen.standard_normal((n, sigma.dim))
    return z @ sigma.sqrt


def sample_gaussian(sigma: CovarianceMatrix | ArrayLike, n: int, seed: int) -> SampleBatch:
    """Draw n i.i.d. rows from N(0, Sigma) using the symmetric square root of Sigma."""
    if not isinstance(sigma, CovarianceMatrix):
        a = np.asarray(sigma, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise InvalidInput("covariance entries must be finite")
        sigma = CovarianceMatrix(a)
    if n < 1:
        raise InvalidInput("n must be at least 1")
    if not sigma.is_psd():
        raise InvalidInput("covariance matrix is not positive semidefinite")
    data = gaussian_rows(sigma, n, _rng.generator(seed))
    return SampleBatch(data, seed=int(seed), generator_id=_rng.GENERATOR_ID)


@dataclass(frozen=True)
class SpikedModel:
    """(lambda - mu) u u^T + mu P_L with L = span(e_1, ..., e_rank).

    ``u`` defaults to e_1.
    """

    dim: int
    rank: int
    lam: float
    mu: float
    u: NDArray[np.float64] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (1 <= self.rank <= self.dim):
            raise InvalidInput(f"rank must be in [1, dim], got {self.rank}")
        if self.u is None:
            u = np.zeros(self.dim)
            u[0] = 1.0
        else:
            u = np.array(self.u, dtype=np.float64)
        if u.shape != (self.dim,):
            raise InvalidInput(f"u must have shape ({self.dim},)")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def effective_rank(self) -> float:
        return (self.lam + (self.rank - 1) * self.mu) / self.lam

    def to_dict(self) -> dict:
        return {"dim": self.dim, "rank": self.rank, "lambda": self.lam, "mu": self.mu, "u": self.u.tolist()}


def spiked_covariance(model: SpikedModel, *, strict: bool = True) -> CovarianceMatrix:
    """Build the spiked covariance; ``strict=False`` admits the lambda == mu boundary."""
    lam, mu, u = float(model.lam), float(model.mu), model.u
    if not mu > 0 or (lam <= mu if strict else lam < mu):
        raise InvalidInput(f"spiked model needs lambda > mu > 0, got lambda={lam}, mu={mu}")
    if abs(float(np.linalg.norm(u)) - 1.0) > 1e-12:
        raise InvalidInput("u must be a unit vector")
    if np.any(u[model.rank:] != 0.0):
        raise InvalidInput("u must lie in the span of the first `rank` coordinates")
    proj = np.zeros((model.dim, model.dim))
    idx = np.arange(model.rank)
    proj[idx, idx] = 1.0
    s = (lam - mu) * np.outer(u, u) + mu * proj
    return CovarianceMatrix(0.5 * (s + s.T))


def spiked_kl(u1: ArrayLike, u2: ArrayLike, lam: float, mu: float) -> float:
    """KL divergence between N(0, Sigma_{u1,lam,mu}) and N(0, Sigma_{u2,lam,mu}).

    Both laws share their spectrum, so the log-determinant term vanishes and
    KL = (lam - mu)(1/mu - 1/lam) / 4 * ||u1 u1^T - u2 u2^T||_F^2.
    """
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if not (mu > 0 and lam > mu):
        raise InvalidInput(f"need lambda > mu > 0, got lambda={lam}, mu={mu}")
    if u1.shape != u2.shape or u1.ndim != 1:
        raise InvalidInput("u1 and u2 must be vectors of the same dimension")
    for u in (u1, u2):
        if abs(float(np.linalg.norm(u)) - 1.0) > 1e-12:
            raise InvalidInput("u1 and u2 must be unit vectors")
    diff = np.outer(u1, u1) - np.outer(u2, u2)
    return 0.25 * (lam - mu) * (1.0 / mu - 1.0 / lam) * float(np.sum(diff * diff))
