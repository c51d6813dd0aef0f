"""Experiment configuration: strict TOML/JSON parsing and canonical serialization."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from covfest.covariance import CovarianceMatrix, SpikedModel, read_matrix_csv, spiked_covariance
from covfest.errors import ConfigError, CovfestError
from covfest.functionals import Functional, functional_from_dict, functional_to_dict
from covfest.jackknife import DEFAULT_M_SUBSETS, build_plan
from covfest.bootstrap import DEFAULT_REPS, MAX_DEPTH

__all__ = ["EstimatorSpec", "ModelSpec", "ExperimentConfig", "parse_config", "config_from_dict"]

DEFAULT_REPLICATIONS = 1000
DEFAULT_Q = 2.0

_TOP_KEYS = {"model", "functional", "estimators", "n_grid", "replications", "master_seed", "output_dir", "record_timing"}
_REQUIRED = ("model", "functional", "estimators", "n_grid")
_ESTIMATOR_KEYS = {
    "plugin": {"type"},
    "t1": {"type", "k", "q"},
    "t2": {"type", "k", "q", "m_subsets"},
    "bootstrap": {"type", "k", "reps"},
}


@dataclass(frozen=True)
class EstimatorSpec:
    kind: str
    k: int = 1
    q: float = DEFAULT_Q
    m_subsets: int = DEFAULT_M_SUBSETS
    reps: int = DEFAULT_REPS

    @property
    def label(self) -> str:
        if self.kind == "plugin":
            return "plugin"
        if self.kind == "t1":
            return f"t1(k={self.k},q={self.q:g})"
        if self.kind == "t2":
            return f"t2(k={self.k},q={self.q:g},m={self.m_subsets})"
        return f"bootstrap(k={self.k},reps={self.reps})"

    def to_dict(self) -> dict:
        keys = _ESTIMATOR_KEYS[self.kind] - {"type"}
        return {"type": self.kind, **{k: getattr(self, k) for k in sorted(keys)}}


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # "spiked" or "matrix"
    spiked: SpikedModel | None = None
    path: str | None = None

    def covariance(self) -> CovarianceMatrix:
        if self.kind == "spiked":
            return spiked_covariance(self.spiked)
        return read_matrix_csv(self.path)

    def to_dict(self) -> dict:
        if self.kind == "spiked":
            m = self.spiked
            return {"type": "spiked", "dim": m.dim, "rank": m.rank, "lambda": m.lam, "mu": m.mu, "u": m.u.tolist()}
        return {"type": "matrix", "path": self.path}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    functional: Functional
    estimators: tuple[EstimatorSpec, ...]
    n_grid: tuple[int, ...]
    replications: int = DEFAULT_REPLICATIONS
    master_seed: int = 0
    output_dir: str = "results"
    record_timing: bool = False
    source: str | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "functional": functional_to_dict(self.functional),
            "estimators": [e.to_dict() for e in self.estimators],
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "output_dir": self.output_dir,
            "record_timing": self.record_timing,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def config_hash(self) -> str:
        d = self.to_dict()
        # output location does not change results
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _int(obj: dict, key: str, default=None, *, minimum: int | None = None, path: str | None = None) -> int:
    name = path or key
    if key not in obj:
        if default is None:
            raise ConfigError(name, "missing required field")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(name, f"expected an integer, got {type(v).__name__}")
    if minimum is not None and v < minimum:
        raise ConfigError(name, f"must be >= {minimum}")
    return v


def _float(obj: dict, key: str, default=None, *, path: str | None = None) -> float:
    name = path or key
    if key not in obj:
        if default is None:
            raise ConfigError(name, "missing required field")
        return default
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(name, f"expected a number, got {type(v).__name__}")
    return float(v)


def _reject_unknown(obj: dict, allowed: set[str], prefix: str = "") -> None:
    for key in obj:
        if key not in allowed:
            raise ConfigError(prefix + key, "unknown key")


def _parse_model(obj, base_dir: Path | None) -> ModelSpec:
    if not isinstance(obj, dict):
        raise ConfigError("model", "expected a table")
    kind = obj.get("type")
    if kind == "spiked":
        _reject_unknown(obj, {"type", "dim", "rank", "lambda", "mu", "u"}, "model.")
        dim = _int(obj, "dim", minimum=1, path="model.dim")
        rank = _int(obj, "rank", dim, minimum=1, path="model.rank")
        lam = _float(obj, "lambda", path="model.lambda")
        mu = _float(obj, "mu", path="model.mu")
        u = obj.get("u")
        if u is not None and (not isinstance(u, list) or len(u) != dim):
            raise ConfigError("model.u", f"expected a list of {dim} numbers")
        try:
            model = SpikedModel(dim, rank, lam, mu, u)
            spiked_covariance(model)
        except CovfestError as exc:
            raise ConfigError("model", str(exc)) from None
        return ModelSpec("spiked", spiked=model)
    if kind == "matrix":
        _reject_unknown(obj, {"type", "path"}, "model.")
        if not isinstance(obj.get("path"), str):
            raise ConfigError("model.path", "expected a file path")
        p = Path(obj["path"])
        if not p.is_absolute() and base_dir is not None:
            p = base_dir / p
        return ModelSpec("matrix", path=str(p))
    raise ConfigError("model.type", f"expected 'spiked' or 'matrix', got {kind!r}")


def _parse_estimator(obj, i: int) -> EstimatorSpec:
    prefix = f"estimators[{i}]"
    if not isinstance(obj, dict):
        raise ConfigError(prefix, "expected a table")
    kind = obj.get("type")
    if kind not in _ESTIMATOR_KEYS:
        raise ConfigError(prefix + ".type", f"expected one of {sorted(_ESTIMATOR_KEYS)}, got {kind!r}")
    _reject_unknown(obj, _ESTIMATOR_KEYS[kind], prefix + ".")
    if kind == "plugin":
        return EstimatorSpec("plugin")
    if kind == "bootstrap":
        k = _int(obj, "k", 1, minimum=0, path=prefix + ".k")
        if k > MAX_DEPTH:
            raise ConfigError(prefix + ".k", f"bootstrap depth must be <= {MAX_DEPTH}")
        return EstimatorSpec("bootstrap", k=k, reps=_int(obj, "reps", DEFAULT_REPS, minimum=1, path=prefix + ".reps"))
    k = _int(obj, "k", 2, minimum=1, path=prefix + ".k")
    q = _float(obj, "q", DEFAULT_Q, path=prefix + ".q")
    m = _int(obj, "m_subsets", DEFAULT_M_SUBSETS, minimum=1, path=prefix + ".m_subsets") if kind == "t2" else DEFAULT_M_SUBSETS
    return EstimatorSpec(kind, k=k, q=q, m_subsets=m)


def config_from_dict(obj: dict, base_dir: Path | None = None, source: str | None = None) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("<root>", "expected a table")
    _reject_unknown(obj, _TOP_KEYS)
    for key in _REQUIRED:
        if key not in obj:
            raise ConfigError(key, "missing required field")

    model = _parse_model(obj["model"], base_dir)
    try:
        functional = functional_from_dict(obj["functional"])
    except (CovfestError, TypeError, ValueError) as exc:
        raise ConfigError("functional", str(exc)) from None

    grid = obj["n_grid"]
    if not isinstance(grid, list) or not grid or not all(isinstance(n, int) and not isinstance(n, bool) for n in grid):
        raise ConfigError("n_grid", "expected a non-empty list of integers")
    if any(a >= b for a, b in zip(grid, grid[1:])) or grid[0] < 1:
        raise ConfigError("n_grid", "must be strictly ascending positive integers")

    ests = obj["estimators"]
    if not isinstance(ests, list) or not ests:
        raise ConfigError("estimators", "expected a non-empty list")
    specs = tuple(_parse_estimator(e, i) for i, e in enumerate(ests))
    for i, spec in enumerate(specs):
        if spec.kind in ("t1", "t2"):
            try:
                build_plan(grid[0], spec.k, spec.q)
            except CovfestError as exc:
                raise ConfigError(f"estimators[{i}]", f"invalid for n={grid[0]}: {exc}") from None

    out = obj.get("output_dir", "results")
    if not isinstance(out, str):
        raise ConfigError("output_dir", "expected a string")
    timing = obj.get("record_timing", False)
    if not isinstance(timing, bool):
        raise ConfigError("record_timing", "expected a boolean")
    return ExperimentConfig(
        model=model,
        functional=functional,
        estimators=specs,
        n_grid=tuple(grid),
        replications=_int(obj, "replications", DEFAULT_REPLICATIONS, minimum=1),
        master_seed=_int(obj, "master_seed", 0, minimum=0),
        output_dir=out,
        record_timing=timing,
        source=source,
    )


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read a .json or .toml experiment config (anything not ending in .json is TOML)."""
    path = Path(path)
    text = path.read_text()
    try:
        obj = json.loads(text) if path.suffix.lower() == ".json" else tomli.loads(text)
    except (json.JSONDecodeError, tomli.TOMLDecodeError) as exc:
        raise ConfigError("<file>", f"{path}: {exc}") from None
    return config_from_dict(obj, base_dir=path.parent, source=str(path))
