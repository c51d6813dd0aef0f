"""Smooth functionals of symmetric matrices and their first-order calculus.

Gradients are symmetric matrices under the trace pairing, so that the
directional derivative of ``f`` at ``Sigma`` along ``H`` is
``tr(H @ frechet_derivative(f, Sigma))``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from covfest.covariance import CovarianceMatrix
from covfest.errors import DomainError, InvalidInput

__all__ = [
    "Polynomial",
    "SmoothedStep",
    "TracePower",
    "LogDet",
    "SpectralLinearForm",
    "BilinearForm",
    "Functional",
    "evaluate",
    "frechet_derivative",
    "sigma_f",
    "taylor_remainder",
    "functional_from_dict",
    "functional_to_dict",
    "functional_from_json",
]

# relative gap below which the Loewner divided difference falls back to g'
DEGENERACY_TOL = 1e-8
# log-det treats lambda_min <= LOGDET_RTOL * lambda_max as singular
LOGDET_RTOL = 1e-12


# scalar functions ------------------------------------------------------------


@dataclass(frozen=True)
class Polynomial:
    """sum_k coeffs[k] * x**k (ascending order)."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        c = tuple(float(a) for a in self.coeffs)
        if not c or not all(np.isfinite(c)):
            raise InvalidInput("polynomial coefficients must be finite and non-empty")
        object.__setattr__(self, "coeffs", c)

    def __call__(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def derivative(self, x):
        return np.polynomial.polynomial.polyval(x, np.polynomial.polynomial.polyder(self.coeffs))

    def to_dict(self) -> dict:
        return {"kind": "polynomial", "coeffs": list(self.coeffs)}


def _bump(t):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


@dataclass(frozen=True)
class SmoothedStep:
    """C-infinity step rising from 0 to 1 on [center - width/2, center + width/2]."""

    center: float
    width: float

    def __post_init__(self):
        if not (np.isfinite(self.center) and np.isfinite(self.width)) or self.width <= 0:
            raise InvalidInput("smoothed step needs a finite center and width > 0")

    def _t(self, x):
        return (np.asarray(x, dtype=np.float64) - self.center) / self.width + 0.5

    def __call__(self, x):
        t = self._t(x)
        a, b = _bump(t), _bump(1.0 - t)
        return a / (a + b)

    def derivative(self, x):
        t = self._t(x)
        a, b = _bump(t), _bump(1.0 - t)
        with np.errstate(divide="ignore", invalid="ignore"):
            da = np.where(t > 0, a / np.where(t > 0, t, 1.0) ** 2, 0.0)
            db = np.where(t < 1, b / np.where(t < 1, 1.0 - t, 1.0) ** 2, 0.0)
        return (da * b + a * db) / (a + b) ** 2 / self.width

    def to_dict(self) -> dict:
        return {"kind": "smoothed_step", "center": self.center, "width": self.width}


ScalarFunction = Union[Polynomial, SmoothedStep]


def scalar_function_from_dict(obj: dict) -> ScalarFunction:
    kind = obj.get("kind")
    if kind == "polynomial":
        return Polynomial(tuple(obj["coeffs"]))
    if kind == "smoothed_step":
        return SmoothedStep(float(obj["center"]), float(obj["width"]))
    raise InvalidInput(f"unknown scalar function kind {kind!r}")


# functionals -----------------------------------------------------------------


def _sym_array(a: ArrayLike, what: str) -> NDArray[np.float64]:
    m = np.array(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInput(f"{what} must be a square matrix")
    if np.max(np.abs(m - m.T), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(m)))):
        raise InvalidInput(f"{what} must be symmetric")
    m.setflags(write=False)
    return m


@dataclass(frozen=True)
class TracePower:
    p: int = 1
    label: str = ""

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise InvalidInput("TracePower needs an integer p >= 1")
        object.__setattr__(self, "p", int(self.p))

    def value(self, s: CovarianceMatrix) -> float:
        a = s.entries
        if self.p == 1:
            return float(np.trace(a))
        if self.p == 2:
            return float(np.sum(a * a))
        half = np.linalg.matrix_power(a, self.p // 2)
        if self.p % 2 == 0:
            return float(np.sum(half * half))
        return float(np.sum((half @ a) * half))

    def gradient(self, s: CovarianceMatrix) -> NDArray[np.float64]:
        if self.p == 1:
            return np.eye(s.dim)
        g = self.p * np.linalg.matrix_power(s.entries, self.p - 1)
        return 0.5 * (g + g.T)

    def parameters(self) -> dict:
        return {"p": self.p}


@dataclass(frozen=True)
class LogDet:
    label: str = ""

    @staticmethod
    def _check(s: CovarianceMatrix) -> None:
        w = s.spectrum
        if not w[-1] > LOGDET_RTOL * max(abs(w[0]), np.finfo(float).tiny):
            raise DomainError(f"log-det needs a positive definite matrix (lambda_min={w[-1]:.3g})")

    def value(self, s: CovarianceMatrix) -> float:
        self._check(s)
        return float(np.sum(np.log(s.spectrum)))

    def gradient(self, s: CovarianceMatrix) -> NDArray[np.float64]:
        self._check(s)
        return s.apply(np.reciprocal)

    def parameters(self) -> dict:
        return {}


@dataclass(frozen=True)
class SpectralLinearForm:
    """<g(Sigma), B> = sum_i g(lambda_i) v_i^T B v_i."""

    g: ScalarFunction
    B: NDArray[np.float64] = field(compare=False)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "B", _sym_array(self.B, "B"))

    def _check_dim(self, s):
        if s.dim != self.B.shape[0]:
            raise InvalidInput(f"B has dimension {self.B.shape[0]}, matrix has {s.dim}")

    def value(self, s: CovarianceMatrix) -> float:
        self._check_dim(s)
        v = s.eigvecs
        diag = np.einsum("ij,ik,kj->j", v, self.B, v)
        return float(np.sum(self.g(s.spectrum) * diag))

    def gradient(self, s: CovarianceMatrix) -> NDArray[np.float64]:
        self._check_dim(s)
        w, v = s.spectrum, s.eigvecs
        gw, dgw = self.g(w), self.g.derivative(w)
        dw = w[:, None] - w[None, :]
        close = np.abs(dw) <= DEGENERACY_TOL * max(1.0, abs(w[0]))
        with np.errstate(divide="ignore", invalid="ignore"):
            loewner = np.where(close, dgw[:, None], (gw[:, None] - gw[None, :]) / np.where(close, 1.0, dw))
        out = v @ (loewner * (v.T @ self.B @ v)) @ v.T
        return 0.5 * (out + out.T)

    def parameters(self) -> dict:
        return {"g": self.g.to_dict(), "B": self.B.tolist()}


@dataclass(frozen=True)
class BilinearForm:
    """u^T Sigma v."""

    u: NDArray[np.float64] = field(compare=False)
    v: NDArray[np.float64] = field(compare=False)
    label: str = ""

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64)
        v = np.array(self.v, dtype=np.float64)
        if u.ndim != 1 or u.shape != v.shape:
            raise InvalidInput("BilinearForm vectors must be 1-d with equal length")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def value(self, s: CovarianceMatrix) -> float:
        if s.dim != self.u.shape[0]:
            raise InvalidInput(f"vectors have dimension {self.u.shape[0]}, matrix has {s.dim}")
        return float(self.u @ s.entries @ self.v)

    def gradient(self, s: CovarianceMatrix) -> NDArray[np.float64]:
        o = np.outer(self.u, self.v)
        return 0.5 * (o + o.T)

    def parameters(self) -> dict:
        return {"u": self.u.tolist(), "v": self.v.tolist()}


Functional = Union[TracePower, LogDet, SpectralLinearForm, BilinearForm]

_KINDS = {
    TracePower: "trace_power",
    LogDet: "log_det",
    SpectralLinearForm: "spectral_linear_form",
    BilinearForm: "bilinear_form",
}


def _cov(sigma) -> CovarianceMatrix:
    return sigma if isinstance(sigma, CovarianceMatrix) else CovarianceMatrix(sigma)


def evaluate(f: Functional, sigma: CovarianceMatrix | ArrayLike) -> float:
    return f.value(_cov(sigma))


def frechet_derivative(f: Functional, sigma: CovarianceMatrix | ArrayLike) -> NDArray[np.float64]:
    return f.gradient(_cov(sigma))


def sigma_f(f: Functional, sigma: CovarianceMatrix | ArrayLike) -> float:
    """sqrt(2) * ||Sigma^{1/2} f'(Sigma) Sigma^{1/2}||_F, the asymptotic sd of sqrt(n)(f(hat Sigma) - f(Sigma))."""
    sigma = _cov(sigma)
    root = sigma.sqrt
    m = root @ f.gradient(sigma) @ root
    return float(np.sqrt(2.0) * np.linalg.norm(m))


def taylor_remainder(f: Functional, sigma: CovarianceMatrix | ArrayLike, h: ArrayLike) -> float:
    """f(Sigma + H) - f(Sigma) - <H, f'(Sigma)>."""
    sigma = _cov(sigma)
    h = _sym_array(h, "H")
    shifted = CovarianceMatrix(sigma.entries + h, check=False)
    return f.value(shifted) - f.value(sigma) - float(np.sum(h * f.gradient(sigma)))


# serialization ---------------------------------------------------------------


def functional_to_dict(f: Functional) -> dict:
    return {"kind": _KINDS[type(f)], "parameters": f.parameters(), "label": f.label}


def functional_from_dict(obj: dict) -> Functional:
    if not isinstance(obj, dict):
        raise InvalidInput("functional spec must be an object")
    unknown = set(obj) - {"kind", "parameters", "label"}
    if unknown:
        raise InvalidInput(f"unknown functional keys: {sorted(unknown)}")
    kind = obj.get("kind")
    params = dict(obj.get("parameters") or {})
    label = str(obj.get("label", ""))
    try:
        if kind == "trace_power":
            return TracePower(int(params.pop("p", 1)), label=label)
        if kind == "log_det":
            return LogDet(label=label)
        if kind == "spectral_linear_form":
            return SpectralLinearForm(scalar_function_from_dict(params["g"]), np.asarray(params["B"]), label=label)
        if kind == "bilinear_form":
            return BilinearForm(np.asarray(params["u"]), np.asarray(params["v"]), label=label)
    except KeyError as exc:
        raise InvalidInput(f"functional {kind!r} is missing parameter {exc}") from None
    raise InvalidInput(f"unknown functional kind {kind!r}")


def functional_from_json(text: str) -> Functional:
    return functional_from_dict(json.loads(text))


def describe(f: Functional) -> str:
    if f.label:
        return f.label
    if isinstance(f, TracePower):
        return f"tr(S^{f.p})"
    return _KINDS[type(f)]
