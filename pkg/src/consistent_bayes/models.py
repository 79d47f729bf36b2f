"""Benchmark forward maps and, where available, their exact push-forwards."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .core import ForwardModel, ParameterDomain, RngStream
from .density import ChiSquared, MultivariateNormal, Product, UniformInterval
from .errors import DomainError, FactorizationError, InputError
from .special import chi2_quantile

__all__ = [
    "NONLINEAR_DOMAIN",
    "nonlinear_system",
    "piecewise_smooth",
    "QuadraticFormSpec",
    "quadratic_chi2",
    "monomial",
    "quantile_matched_uniform_observed",
    "block_quantile_levels",
    "MODEL_NAMES",
    "get_model",
]

NONLINEAR_DOMAIN = ParameterDomain.box(
    [0.79, 1.0 - 4.5 * math.sqrt(0.1)],
    [0.99, 1.0 + 4.5 * math.sqrt(0.1)],
)


def _nonlinear_rhs(lam1, lam2):
    # Eliminating x1^2 from  lam1*x1^2 + x2^2 = 1,  x1^2 - lam2*x2^2 = 1.
    return (1.0 - lam1) / (1.0 + lam1 * lam2)


def nonlinear_system() -> ForwardModel:
    """QoI x2 of the 2x2 system lam1*x1^2 + x2^2 = 1, x1^2 - lam2*x2^2 = 1.

    The positive root is returned.
    """

    def fn(lam):
        b = _nonlinear_rhs(lam[0], lam[1])
        if b < 0:
            raise DomainError(f"no real solution at lambda={lam.tolist()}")
        return np.array([math.sqrt(b)])

    def batch_fn(lam):
        b = _nonlinear_rhs(lam[:, 0], lam[:, 1])
        if np.any(b < 0):
            raise DomainError("no real solution for some rows")
        return np.sqrt(b).reshape(-1, 1)

    return ForwardModel("nonlinear-system", 2, 1, fn, batch_fn, NONLINEAR_DOMAIN)


def _piecewise_batch(x):
    d = x.shape[1]
    ss = np.sum(x * x, axis=1)
    q1 = np.exp(-ss) - x[:, 0] ** 3 - x[:, 1] ** 3
    q2 = 1.0 + q1 + ss / (4.0 * d)
    upper = 3.0 * x[:, 0] + 2.0 * x[:, 1] >= 0
    right = -x[:, 0] + 0.3 * x[:, 1] < 0
    disc = (x[:, 0] + 1.0) ** 2 + (x[:, 1] + 1.0) ** 2 < 0.95**2
    if d != 2:
        disc = np.zeros_like(disc)
    return np.select(
        [upper & right, upper & ~right, ~upper & disc],
        [q1 - 2.0, 2.0 * q2, 2.0 * q1 + 4.0],
        default=q1,
    )


def piecewise_branch(x) -> np.ndarray:
    """Index 0..3 of the branch that fires for each row (diagnostic helper)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    upper = 3.0 * x[:, 0] + 2.0 * x[:, 1] >= 0
    right = -x[:, 0] + 0.3 * x[:, 1] < 0
    disc = ((x[:, 0] + 1.0) ** 2 + (x[:, 1] + 1.0) ** 2 < 0.95**2) & (x.shape[1] == 2)
    return np.select([upper & right, upper & ~right, ~upper & disc], [0, 1, 2], default=3)


def piecewise_smooth(d: int = 2) -> ForwardModel:
    """Discontinuous four-branch response surface on [-1, 1]^d.

    The disc-shaped branch around (-1, -1) exists only for ``d == 2``.
    """
    d = int(d)
    if d < 2:
        raise InputError("piecewise_smooth needs d >= 2")

    def fn(x):
        return _piecewise_batch(x.reshape(1, -1))

    def batch_fn(x):
        return _piecewise_batch(x).reshape(-1, 1)

    domain = ParameterDomain.box(-np.ones(d), np.ones(d))
    name = "piecewise-2d" if d == 2 else f"piecewise-{d}d"
    return ForwardModel(name, d, 1, fn, batch_fn, domain)


@dataclass(frozen=True)
class QuadraticFormSpec:
    """Covariance blocks and means for Q_i(lam) = (lam_i - mu_i)^T C_i^{-1} (lam_i - mu_i).

    ``blocks`` holds one SPD matrix per QoI; block ``i`` acts on parameters
    ``i*d/m .. (i+1)*d/m - 1``. With a single block this is the scalar
    quadratic form over all parameters.
    """

    blocks: Sequence[np.ndarray]
    means: Optional[Sequence[np.ndarray]] = None
    seed: Optional[int] = None
    _chol: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        blocks = tuple(np.array(c, dtype=float) for c in self.blocks)
        if not blocks:
            raise InputError("need at least one covariance block")
        size = blocks[0].shape[0]
        chols = []
        for c in blocks:
            if c.ndim != 2 or c.shape != (size, size):
                raise InputError("covariance blocks must be square and of equal size")
            if not np.allclose(c, c.T, rtol=1e-10, atol=1e-12):
                raise FactorizationError("covariance block is not symmetric")
            try:
                chols.append(np.linalg.cholesky(c))
            except np.linalg.LinAlgError as exc:
                raise FactorizationError("covariance block is not positive definite") from exc
        means = self.means
        if means is None:
            means = tuple(np.zeros(size) for _ in blocks)
        else:
            means = tuple(np.array(mu, dtype=float).reshape(size) for mu in means)
            if len(means) != len(blocks):
                raise InputError("one mean per block is required")
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "_chol", tuple(chols))

    @classmethod
    def random(cls, dim: int, qoi_count: int = 1, seed: int = 0):
        """C_i = A_i^T A_i with standard-normal A_i drawn from ``seed``."""
        dim, qoi_count = int(dim), int(qoi_count)
        if dim < 1 or qoi_count < 1 or dim % qoi_count:
            raise InputError(f"dim={dim} must be a positive multiple of qoi_count={qoi_count}")
        size = dim // qoi_count
        gen = RngStream(seed).generator
        blocks = []
        for _ in range(qoi_count):
            a = gen.standard_normal((size, size))
            blocks.append(a.T @ a)
        return cls(blocks, seed=seed)

    @classmethod
    def identity(cls, dim: int, qoi_count: int = 1):
        dim, qoi_count = int(dim), int(qoi_count)
        if dim < 1 or qoi_count < 1 or dim % qoi_count:
            raise InputError(f"dim={dim} must be a positive multiple of qoi_count={qoi_count}")
        return cls([np.eye(dim // qoi_count) for _ in range(qoi_count)])

    @property
    def qoi_count(self) -> int:
        return len(self.blocks)

    @property
    def block_dim(self) -> int:
        return self.blocks[0].shape[0]

    @property
    def dim(self) -> int:
        return self.qoi_count * self.block_dim

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate(self.means)

    @property
    def covariance(self) -> np.ndarray:
        from scipy.linalg import block_diag

        return block_diag(*self.blocks)

    def prior(self) -> MultivariateNormal:
        """N(mu, C), the prior under which the push-forward is exactly chi-squared."""
        return MultivariateNormal(self.mean, self.covariance)

    def evaluate(self, lam: np.ndarray) -> np.ndarray:
        """Quadratic forms for an (M, d) array via triangular solves."""
        k = self.block_dim
        out = np.empty((lam.shape[0], self.qoi_count))
        for i, (chol, mu) in enumerate(zip(self._chol, self.means)):
            z = solve_triangular(chol, (lam[:, i * k:(i + 1) * k] - mu).T, lower=True)
            out[:, i] = np.sum(z * z, axis=0)
        return out

    def evaluate_cho_solve(self, lam: np.ndarray) -> np.ndarray:
        """Same forms through a full Cholesky solve, one row at a time."""
        k = self.block_dim
        lam = np.atleast_2d(lam)
        out = np.empty((lam.shape[0], self.qoi_count))
        for i, (chol, mu) in enumerate(zip(self._chol, self.means)):
            r = lam[:, i * k:(i + 1) * k] - mu
            for row in range(r.shape[0]):
                out[row, i] = r[row] @ cho_solve((chol, True), r[row])
        return out


def quadratic_chi2(spec: QuadraticFormSpec):
    """Quadratic-form model and its exact push-forward under the N(mu, C) prior.

    Returns
    -------
    model : ForwardModel
    exact_pushforward : ChiSquared or Product of ChiSquared
        Valid only when the prior is ``spec.prior()``.
    """
    m = spec.qoi_count

    def fn(lam):
        return spec.evaluate(lam.reshape(1, -1))[0]

    name = "chi2-quadratic" if m == 1 else "chi2-block"
    model = ForwardModel(name, spec.dim, m, fn, spec.evaluate)
    k = spec.block_dim
    exact = ChiSquared(k) if m == 1 else Product([ChiSquared(k) for _ in range(m)])
    return model, exact


def monomial(p: int) -> ForwardModel:
    """q = lam**p on [-1, 1] for odd positive ``p``."""
    if int(p) != p or p < 1 or p % 2 == 0:
        raise InputError(f"monomial power must be an odd positive integer, got {p}")
    p = int(p)

    def fn(lam):
        return lam**p

    def batch_fn(lam):
        return lam**p

    return ForwardModel(f"monomial-p{p}", 1, 1, fn, batch_fn, ParameterDomain.box([-1.0], [1.0]))


def block_quantile_levels(qoi_count: int, variant: str = "mass-preserving"):
    """Lower and upper CDF levels for each QoI of the observed box.

    ``mass-preserving`` gives every QoI the mass (1/5)**(1/m), so the box
    has push-forward mass 1/5 for any m. ``paper`` uses the literal levels
    1/2 -+ (1/5)**(1/m), which only make sense for m <= 2.
    """
    m = int(qoi_count)
    if m < 1:
        raise InputError("qoi_count must be positive")
    if m == 1:
        return 0.4, 0.6
    width = 0.2 ** (1.0 / m)
    if variant == "mass-preserving":
        return 0.5 - width / 2.0, 0.5 + width / 2.0
    if variant == "paper":
        lo, hi = 0.5 - width, 0.5 + width
        if lo <= 0 or hi >= 1:
            raise InputError(f"literal block quantile levels ({lo:.4f}, {hi:.4f}) fall outside (0, 1) for m={m}")
        return lo, hi
    raise InputError(f"unknown block-quantile variant {variant!r}")


def quantile_matched_uniform_observed(dim: int, qoi_count: int = 1, variant: str = "mass-preserving"):
    """Uniform observed density on chi-squared quantile intervals.

    Each QoI has ``dim / qoi_count`` degrees of freedom; the interval ends are
    the chi-squared quantiles at :func:`block_quantile_levels`.
    """
    dim, m = int(dim), int(qoi_count)
    if dim < 1 or m < 1 or dim % m:
        raise InputError(f"dim={dim} must be a positive multiple of qoi_count={m}")
    k = dim // m
    lo, hi = block_quantile_levels(m, variant)
    a, b = chi2_quantile(k, lo), chi2_quantile(k, hi)
    if m == 1:
        return UniformInterval(a, b)
    return Product([UniformInterval(a, b) for _ in range(m)])


MODEL_NAMES = ("nonlinear-system", "piecewise-2d", "chi2-quadratic", "chi2-block",
               "monomial-p1", "monomial-p3", "monomial-p5")


def get_model(name: str, dim: int = 2, qoi_count: int = 2, matrix_seed: Optional[int] = None):
    """Look a model up by its registry name.

    The chi-squared entries need ``dim`` (and ``qoi_count`` for the block
    variant); ``matrix_seed=None`` selects identity covariance blocks.
    Returns ``(model, exact_pushforward_or_None, spec_or_None)``.
    """
    if name == "nonlinear-system":
        return nonlinear_system(), None, None
    if name == "piecewise-2d":
        return piecewise_smooth(2), None, None
    if name in ("chi2-quadratic", "chi2-block"):
        m = 1 if name == "chi2-quadratic" else qoi_count
        if matrix_seed is None:
            spec = QuadraticFormSpec.identity(dim, m)
        else:
            spec = QuadraticFormSpec.random(dim, m, matrix_seed)
        model, exact = quadratic_chi2(spec)
        return model, exact, spec
    if name.startswith("monomial-p"):
        try:
            p = int(name[len("monomial-p"):])
        except ValueError:
            raise InputError(f"unknown model {name!r}") from None
        return monomial(p), None, None
    raise InputError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
