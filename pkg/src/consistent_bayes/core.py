"""Parameter domains, forward models, sample batches and seeded randomness.

Everything here is immutable once built. Sample arrays are row-major,
one sample per row.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DomainError, InputError, ModelEvaluationError

__all__ = [
    "ParameterDomain",
    "ForwardModel",
    "SampleBatch",
    "RngStream",
    "evaluate_batch",
    "sample_uniform",
]

# Fixed chunking keeps batch results independent of the worker count.
_CHUNK_ROWS = 512


def _readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ParameterDomain:
    """Axis-aligned box in R^n, bounds may be infinite.

    Parameters
    ----------
    bounds : sequence of (lower, upper)
        One pair per dimension.
    """

    bounds: np.ndarray

    def __post_init__(self):
        b = np.array(self.bounds, dtype=float)
        if b.ndim != 2 or b.shape[1] != 2 or b.shape[0] < 1:
            raise InputError(f"bounds must have shape (n, 2) with n >= 1, got {b.shape}")
        if np.isnan(b).any():
            raise InputError("bounds must not contain NaN")
        finite = np.isfinite(b).all(axis=1)
        if np.any(b[finite, 0] >= b[finite, 1]):
            raise InputError("every finite bound pair needs lower < upper")
        if np.any(b[:, 0] == np.inf) or np.any(b[:, 1] == -np.inf):
            raise InputError("lower bound +inf or upper bound -inf is empty")
        b.setflags(write=False)
        object.__setattr__(self, "bounds", b)

    @classmethod
    def box(cls, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        return cls(np.column_stack([lower, upper]))

    @classmethod
    def unbounded(cls, dim):
        return cls(np.tile([-np.inf, np.inf], (int(dim), 1)))

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def lower(self):
        return self.bounds[:, 0]

    @property
    def upper(self):
        return self.bounds[:, 1]

    @property
    def is_bounded(self) -> bool:
        return bool(np.isfinite(self.bounds).all())

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def contains(self, x):
        """Boolean mask of rows of ``x`` lying inside the closed box."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise InputError(f"expected points of dimension {self.dim}, got {x.shape[1]}")
        inside = np.all((x >= self.lower) & (x <= self.upper), axis=1)
        return bool(inside[0]) if single else inside


@dataclass(frozen=True)
class ForwardModel:
    """Deterministic map from R^n to R^m.

    ``fn`` maps one n-vector to an m-vector. ``batch_fn``, when given, maps an
    (M, n) array to an (M, m) array and must agree with ``fn`` row by row; it
    is only a fast path.
    """

    name: str
    in_dim: int
    out_dim: int
    fn: Callable[[np.ndarray], np.ndarray]
    batch_fn: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    domain: Optional[ParameterDomain] = field(default=None, compare=False)

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise InputError("in_dim and out_dim must be positive")

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.in_dim:
            raise InputError(f"{self.name}: expected {self.in_dim} inputs, got {x.shape[0]}")
        q = np.asarray(self.fn(x), dtype=float).reshape(-1)
        if q.shape[0] != self.out_dim:
            raise DomainError(f"{self.name}: returned {q.shape[0]} values, expected {self.out_dim}")
        if not np.all(np.isfinite(q)):
            raise DomainError(f"{self.name}: non-finite output at {x}")
        return q

    __call__ = eval


@dataclass(frozen=True)
class SampleBatch:
    """Parameter samples paired with their QoI images.

    Attributes
    ----------
    params : (M, n) array
    qois : (M, m) array
    seed : int
        Seed of the stream the parameters were drawn from.
    model_name : str
    """

    params: np.ndarray
    qois: np.ndarray
    seed: int = 0
    model_name: str = ""
    domain: Optional[ParameterDomain] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        p = _readonly(self.params)
        q = _readonly(self.qois)
        if p.ndim == 1:
            p = p.reshape(-1, 1)
            p.setflags(write=False)
        if q.ndim == 1:
            q = q.reshape(-1, 1)
            q.setflags(write=False)
        if p.ndim != 2 or q.ndim != 2:
            raise InputError("params and qois must be 2-D arrays")
        if p.shape[0] != q.shape[0]:
            raise InputError(f"params has {p.shape[0]} rows but qois has {q.shape[0]}")
        if self.domain is not None and p.shape[0] and not np.all(self.domain.contains(p)):
            raise InputError("batch contains parameters outside the generating domain")
        object.__setattr__(self, "params", p)
        object.__setattr__(self, "qois", q)

    @property
    def count(self) -> int:
        return self.params.shape[0]

    def __len__(self):
        return self.count

    def subset(self, rows):
        """New batch holding the selected rows (index array or boolean mask), order kept."""
        rows = np.asarray(rows)
        return SampleBatch(self.params[rows], self.qois[rows], self.seed, self.model_name, self.domain)


class RngStream:
    """Seeded PCG64 stream; children from :meth:`spawn` are independent.

    PCG64 output depends on the seed only, not on the platform.
    """

    def __init__(self, seed: int, _seed_seq: Optional[np.random.SeedSequence] = None):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise InputError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._seq = _seed_seq if _seed_seq is not None else np.random.SeedSequence(seed)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def spawn(self, n: int) -> list:
        return [RngStream(self.seed, s) for s in self._seq.spawn(n)]

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed})"


def _eval_chunk(model: ForwardModel, rows: np.ndarray, offset: int):
    out = np.empty((rows.shape[0], model.out_dim))
    if model.batch_fn is not None:
        try:
            q = np.asarray(model.batch_fn(rows), dtype=float).reshape(rows.shape[0], model.out_dim)
            if np.all(np.isfinite(q)):
                return q, []
        except Exception:
            pass  # redo row by row to find which rows fail
    failures = []
    for i, x in enumerate(rows):
        try:
            out[i] = model.eval(x)
        except Exception as exc:  # noqa: BLE001 - every row failure is reported
            out[i] = np.nan
            failures.append((offset + i, exc))
    return out, failures


def evaluate_batch(model: ForwardModel, params, workers: int = 1) -> np.ndarray:
    """Evaluate ``model`` on every row of ``params``.

    Rows are processed in fixed-size chunks so the result is bitwise the
    same for any ``workers``. Failing rows do not stop the batch; once all
    chunks are done a :class:`ModelEvaluationError` lists every failure.

    Returns
    -------
    (M, m) ndarray
    """
    params = np.asarray(params, dtype=float)
    if params.ndim == 1 and model.in_dim == 1:
        params = params.reshape(-1, 1)
    if params.ndim != 2 or params.shape[1] != model.in_dim:
        raise InputError(f"{model.name}: expected rows of length {model.in_dim}, got shape {params.shape}")
    workers = int(workers)
    if workers < 1:
        raise InputError("workers must be a positive integer")
    starts = range(0, params.shape[0], _CHUNK_ROWS)
    jobs = [(params[s:s + _CHUNK_ROWS], s) for s in starts]
    if workers == 1 or len(jobs) <= 1:
        results = [_eval_chunk(model, rows, s) for rows, s in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _eval_chunk(model, *job), jobs))
    if not results:
        return np.empty((0, model.out_dim))
    failures = [f for _, fs in results for f in fs]
    if failures:
        raise ModelEvaluationError(failures)
    return np.vstack([q for q, _ in results])


def sample_uniform(domain: ParameterDomain, count: int, rng: RngStream) -> np.ndarray:
    """I.i.d. uniform draws from a bounded box, shape (count, n)."""
    if not domain.is_bounded:
        raise InputError("uniform sampling needs a bounded domain")
    count = int(count)
    if count < 0:
        raise InputError("count must be nonnegative")
    u = rng.generator.random((count, domain.dim))
    return domain.lower + u * (domain.upper - domain.lower)


def as_points(x, dim: int):
    """Coerce ``x`` into an (N, dim) array; also report whether it was a single point.

    A 1-D input is one point when ``dim > 1`` and N scalar points when ``dim == 1``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if dim != 1:
            raise InputError(f"scalar input for a {dim}-dimensional density")
        return x.reshape(1, 1), True
    if x.ndim == 1:
        if dim == 1:
            return x.reshape(-1, 1), False
        if x.shape[0] != dim:
            raise InputError(f"expected a point of dimension {dim}, got length {x.shape[0]}")
        return x.reshape(1, dim), True
    if x.ndim == 2 and x.shape[1] == dim:
        return x, False
    raise InputError(f"expected points of dimension {dim}, got shape {x.shape}")


def check_rows(rows: Sequence, dim: int, what: str = "rows"):
    a = np.asarray(rows, dtype=float)
    if a.ndim == 1 and dim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[1] != dim:
        raise InputError(f"{what} must have shape (M, {dim}), got {a.shape}")
    return a
