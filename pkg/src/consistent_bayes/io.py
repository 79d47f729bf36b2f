"""Run configuration and file formats.

Sample batches are stored as CSV with a ``lambda_1..lambda_n,q_1..q_m``
header and 17 significant digits, so doubles survive a round trip. A fitted
KDE is stored as JSON that points at its sample file and carries the
bandwidth vector; the samples are the KDE.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import SampleBatch
from .density import (
    Beta,
    Density,
    GaussianKDE,
    MultivariateStandardNormal,
    Normal,
    TruncatedNormal,
    Uniform,
)
from .errors import InputError
from .experiments import DEFAULT_N_GRID, NONLINEAR_OBSERVED, nonlinear_prior
from .models import MODEL_NAMES, get_model, quantile_matched_uniform_observed

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "build_prior",
    "build_observed",
    "write_batch",
    "read_batch",
    "write_pushforward",
    "read_pushforward",
    "write_json",
    "write_rows",
]

FLOAT_FORMAT = "%.17g"


class ConfigError(InputError):
    """A run configuration that cannot be used; the message names the field."""


@dataclass
class RunConfig:
    experiment_id: str = "run"
    model: str = "nonlinear-system"
    dim: int = 2
    qoi_count: int = 1
    matrix_seed: Optional[int] = None
    prior: object = "default"
    observed: object = "default"
    M: int = 10_000
    seed: int = 0
    bandwidth_rule: object = "silverman"
    out: str = "out"
    workers: int = 1
    block_quantile: str = "mass-preserving"
    renormalize_truncated_normal: bool = False
    safety_factor: float = 1.0
    max_violations: int = 0
    dims: List[int] = field(default_factory=lambda: [2])
    qoi_counts: List[int] = field(default_factory=lambda: [1])
    N_grid: List[int] = field(default_factory=lambda: list(DEFAULT_N_GRID))
    reps: int = 20
    eval_count: int = 10_000
    synthetic: bool = False
    p_values: List[int] = field(default_factory=lambda: [1, 5])
    deltas: List[float] = field(default_factory=lambda: [0.01, 0.05, 0.1])

    def __post_init__(self):
        self.validate()

    def validate(self):
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(f"config field '{name}': {msg}")

        need(isinstance(self.experiment_id, str) and self.experiment_id, "experiment_id", "must be a nonempty string")
        need(self.model in MODEL_NAMES, "model", f"unknown model {self.model!r}; choose from {', '.join(MODEL_NAMES)}")
        for name in ("dim", "qoi_count", "M", "reps", "eval_count", "workers"):
            v = getattr(self, name)
            need(isinstance(v, int) and not isinstance(v, bool) and v >= 1, name, f"must be a positive integer, got {v!r}")
        need(self.M >= 2, "M", "must be at least 2")
        need(isinstance(self.seed, int) and 0 <= self.seed < 2**64, "seed", "must be an integer in [0, 2**64)")
        need(self.block_quantile in ("paper", "mass-preserving"), "block_quantile", "must be 'paper' or 'mass-preserving'")
        need(isinstance(self.safety_factor, (int, float)) and self.safety_factor >= 1, "safety_factor", "must be >= 1")
        need(isinstance(self.max_violations, int) and self.max_violations >= 0, "max_violations", "must be >= 0")
        rule = self.bandwidth_rule
        need(rule in ("silverman", "scott", "lcv") or (isinstance(rule, list) and all(isinstance(x, (int, float)) and x > 0 for x in rule)),
             "bandwidth_rule", "must be 'silverman', 'scott', 'lcv' or a list of positive bandwidths")
        for name in ("dims", "qoi_counts", "N_grid", "p_values"):
            v = getattr(self, name)
            need(isinstance(v, list) and v and all(isinstance(x, int) and x >= 1 for x in v), name, "must be a nonempty list of positive integers")
        need(isinstance(self.deltas, list) and all(isinstance(x, (int, float)) for x in self.deltas), "deltas", "must be a list of numbers")
        need(isinstance(self.prior, (str, dict)), "prior", "must be a string or an object")
        need(isinstance(self.observed, (str, dict)), "observed", "must be a string or an object")

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"config field '{unknown[0]}': unknown key")
        return cls(**data)

    def as_dict(self) -> Dict:
        return asdict(self)

    def replace(self, **changes) -> "RunConfig":
        d = self.as_dict()
        d.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(**d)


def load_config(path) -> RunConfig:
    """Parse a JSON config; syntax errors report the line and column."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(data)


def model_from_config(cfg: RunConfig):
    return get_model(cfg.model, cfg.dim, cfg.qoi_count, cfg.matrix_seed)


def _density_from_spec(spec: Dict, where: str, renormalize: bool) -> Density:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    builders = {
        "uniform": lambda: Uniform(spec["lower"], spec["upper"]),
        "normal": lambda: Normal(spec["mean"], spec["std"]),
        "truncated-normal": lambda: TruncatedNormal(spec["mean"], spec["std"], spec["lower"], spec["upper"],
                                                    spec.get("renormalize", renormalize)),
        "beta": lambda: Beta(spec["alpha"], spec["beta"], spec["lower"], spec["upper"]),
        "standard-normal": lambda: MultivariateStandardNormal(int(spec["dim"])),
    }
    if kind is None:
        raise ConfigError(f"config field '{where}': missing key 'kind'")
    if kind not in builders:
        raise ConfigError(f"config field '{where}': unknown kind {kind!r}")
    try:
        return builders[kind]()
    except KeyError as exc:
        raise ConfigError(f"config field '{where}': missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field '{where}': {exc}") from None


def build_prior(cfg: RunConfig, spec=None) -> Density:
    p = cfg.prior
    if isinstance(p, dict):
        return _density_from_spec(p, "prior", cfg.renormalize_truncated_normal)
    if cfg.model == "nonlinear-system":
        try:
            return nonlinear_prior("uniform" if p == "default" else p)
        except InputError as exc:
            raise ConfigError(f"config field 'prior': {exc}") from None
    if p != "default":
        raise ConfigError(f"config field 'prior': named prior {p!r} only applies to nonlinear-system")
    if cfg.model == "piecewise-2d":
        return Uniform([-1.0, -1.0], [1.0, 1.0])
    if cfg.model.startswith("chi2"):
        return spec.prior()
    return Uniform([-1.0], [1.0])


def build_observed(cfg: RunConfig) -> Density:
    o = cfg.observed
    if isinstance(o, dict):
        return _density_from_spec(o, "observed", cfg.renormalize_truncated_normal)
    if o == "quantile-matched" or (o == "default" and cfg.model.startswith("chi2")):
        m = 1 if cfg.model == "chi2-quadratic" else cfg.qoi_count
        return quantile_matched_uniform_observed(cfg.dim, m, cfg.block_quantile)
    if o != "default":
        raise ConfigError(f"config field 'observed': unknown observed density {o!r}")
    if cfg.model == "nonlinear-system":
        return Normal(*NONLINEAR_OBSERVED)
    if cfg.model == "piecewise-2d":
        return Normal(-2.0, 0.25)
    return TruncatedNormal(0.25, 0.1, -1.0, 1.0, renormalize=cfg.renormalize_truncated_normal)


def _ensure_dir(path):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


def write_batch(path, batch: SampleBatch):
    """CSV with header ``lambda_1..lambda_n,q_1..q_m`` and 17 significant digits."""
    n, m = batch.params.shape[1], batch.qois.shape[1]
    header = ",".join([f"lambda_{i + 1}" for i in range(n)] + [f"q_{j + 1}" for j in range(m)])
    _ensure_dir(path)
    data = np.hstack([batch.params, batch.qois])
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        if data.shape[0]:
            np.savetxt(fh, data, fmt=FLOAT_FORMAT, delimiter=",")


def read_batch(path, seed: int = 0, model_name: str = "") -> SampleBatch:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        n = sum(1 for h in header if h.startswith("lambda_"))
        m = sum(1 for h in header if h.startswith("q_"))
        if n == 0 or m == 0 or n + m != len(header):
            raise InputError(f"{path}: header must read lambda_1..lambda_n,q_1..q_m")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.size == 0:
        data = np.empty((0, n + m))
    if data.shape[1] != n + m:
        raise InputError(f"{path}: rows have {data.shape[1]} columns, header has {n + m}")
    return SampleBatch(data[:, :n], data[:, n:], seed=seed, model_name=model_name)


def write_pushforward(path, kde: GaussianKDE, samples_file: str, extra: Optional[Dict] = None):
    doc = {
        "samples": samples_file,
        "bandwidth": [float(b) for b in kde.bandwidth],
        "rule": kde.rule if isinstance(kde.rule, str) else "explicit",
        "count": int(kde.count),
        "dim": int(kde.dim),
    }
    doc.update(extra or {})
    write_json(path, doc)


def read_pushforward(path) -> Tuple[GaussianKDE, SampleBatch, Dict]:
    """Rebuild the KDE from its JSON record and the referenced sample file."""
    with open(path) as fh:
        doc = json.load(fh)
    samples = doc["samples"]
    if not os.path.isabs(samples):
        samples = os.path.join(os.path.dirname(os.path.abspath(path)), samples)
    batch = read_batch(samples, seed=int(doc.get("seed", 0)), model_name=doc.get("model", ""))
    kde = GaussianKDE(batch.qois, doc["bandwidth"], rule=doc.get("rule", "explicit"))
    return kde, batch, doc


def write_json(path, obj):
    from .experiments import _jsonable

    _ensure_dir(path)
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows(path, header: Sequence[str], rows: Sequence[Sequence]):
    """CSV rows; floats are written with 17 significant digits, None as an empty cell."""
    _ensure_dir(path)

    def cell(v):
        if v is None:
            return ""
        if isinstance(v, (float, np.floating)):
            return FLOAT_FORMAT % v
        return str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([cell(v) for v in row])
