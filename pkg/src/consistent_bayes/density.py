"""Probability densities used as priors, observed densities and push-forwards.

Every density exposes ``dim``, ``pdf(x)`` and, when it can be sampled,
``sample(count, rng)``. ``pdf`` takes one point or an (N, k) array; for a
1-D density a flat array is read as N scalar points. One point gives a
float back, many points give an array.
"""
from __future__ import annotations

import math
from typing import Sequence, Union

import numpy as np
from scipy import optimize, signal, special
from scipy.linalg import solve_triangular

from .core import RngStream, as_points
from .errors import DegenerateDataError, FactorizationError, InputError, UnsupportedError
from .special import chi2_cdf, chi2_logpdf, chi2_quantile

__all__ = [
    "Density",
    "Uniform",
    "UniformInterval",
    "Normal",
    "TruncatedNormal",
    "Beta",
    "MultivariateStandardNormal",
    "MultivariateNormal",
    "ChiSquared",
    "GaussianKDE",
    "Product",
    "fit_gkde",
    "bandwidth_factor",
]

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# Standard-normal quantile at 1 - 1e-10, used to truncate unbounded supports.
_Z_TAIL = float(special.ndtri(1.0 - 1e-10))


class Density:
    """Base class. Subclasses implement ``_pdf`` on an (N, k) array."""

    dim: int = 1
    sampleable: bool = True

    def pdf(self, x):
        pts, single = as_points(x, self.dim)
        out = np.asarray(self._pdf(pts), dtype=float)
        return float(out[0]) if single else out

    __call__ = pdf

    def sample(self, count: int, rng: RngStream) -> np.ndarray:
        count = int(count)
        if count < 0:
            raise InputError("count must be nonnegative")
        if not self.sampleable:
            raise UnsupportedError(f"{type(self).__name__} cannot be sampled")
        return np.asarray(self._sample(count, rng.generator), dtype=float).reshape(count, self.dim)

    def support_interval(self):
        """(lo, hi) covering the support of a 1-D density up to 1e-10 tail mass."""
        raise UnsupportedError(f"{type(self).__name__} has no interval support")

    def _pdf(self, pts):
        raise NotImplementedError

    def _sample(self, count, gen):
        raise UnsupportedError(f"{type(self).__name__} cannot be sampled")


def _vec(v, dim=None, name="value"):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    if a.ndim != 1:
        raise InputError(f"{name} must be a vector")
    if dim is not None:
        if a.shape[0] == 1 and dim > 1:
            a = np.repeat(a, dim)
        elif a.shape[0] != dim:
            raise InputError(f"{name} has length {a.shape[0]}, expected {dim}")
    a.setflags(write=False)
    return a


class Uniform(Density):
    """Uniform density on the closed box [lower, upper]."""

    def __init__(self, lower, upper):
        self.lower = _vec(lower, name="lower")
        self.upper = _vec(upper, self.lower.shape[0], name="upper")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise InputError("uniform bounds must be finite")
        if np.any(self.lower >= self.upper):
            raise InputError("uniform needs lower < upper in every dimension")
        self.dim = self.lower.shape[0]
        self.volume = float(np.prod(self.upper - self.lower))

    def _pdf(self, pts):
        inside = np.all((pts >= self.lower) & (pts <= self.upper), axis=1)
        return np.where(inside, 1.0 / self.volume, 0.0)

    def _sample(self, count, gen):
        return self.lower + gen.random((count, self.dim)) * (self.upper - self.lower)

    def support_interval(self):
        if self.dim != 1:
            return super().support_interval()
        return float(self.lower[0]), float(self.upper[0])

    def __repr__(self):
        return f"Uniform(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class UniformInterval(Uniform):
    """Uniform density on [a, b]."""

    def __init__(self, a, b):
        super().__init__([a], [b])
        self.a = float(a)
        self.b = float(b)

    def __repr__(self):
        return f"UniformInterval({self.a!r}, {self.b!r})"


class Normal(Density):
    """Independent normals with the given means and standard deviations."""

    def __init__(self, mean, std):
        self.mean = _vec(mean, name="mean")
        self.std = _vec(std, self.mean.shape[0], name="std")
        if np.any(self.std <= 0):
            raise InputError("standard deviations must be positive")
        self.dim = self.mean.shape[0]

    def _pdf(self, pts):
        z = (pts - self.mean) / self.std
        return np.exp(-0.5 * np.sum(z * z, axis=1)) / np.prod(self.std * _SQRT_2PI)

    def _sample(self, count, gen):
        return self.mean + self.std * gen.standard_normal((count, self.dim))

    def support_interval(self):
        if self.dim != 1:
            return super().support_interval()
        m, s = float(self.mean[0]), float(self.std[0])
        return m - _Z_TAIL * s, m + _Z_TAIL * s

    def __repr__(self):
        return f"Normal(mean={self.mean.tolist()}, std={self.std.tolist()})"


class TruncatedNormal(Density):
    """Normal density restricted to [lower, upper].

    With ``renormalize=False`` (the default) the density is the plain normal
    inside the interval and zero outside, so it integrates to less than one.
    Sampling always draws from the renormalized version.
    """

    def __init__(self, mean, std, lower, upper, renormalize=False):
        self.mean = float(mean)
        self.std = float(std)
        self.lower = float(lower)
        self.upper = float(upper)
        self.renormalize = bool(renormalize)
        if self.std <= 0:
            raise InputError("std must be positive")
        if not self.lower < self.upper:
            raise InputError("truncation interval needs lower < upper")
        self._cdf_lo = float(special.ndtr((self.lower - self.mean) / self.std))
        self._cdf_hi = float(special.ndtr((self.upper - self.mean) / self.std))
        self.mass = self._cdf_hi - self._cdf_lo
        if self.mass <= 0:
            raise InputError("truncation interval carries no normal mass")
        self.dim = 1

    def _pdf(self, pts):
        x = pts[:, 0]
        z = (x - self.mean) / self.std
        val = np.exp(-0.5 * z * z) / (self.std * _SQRT_2PI)
        if self.renormalize:
            val = val / self.mass
        return np.where((x >= self.lower) & (x <= self.upper), val, 0.0)

    def _sample(self, count, gen):
        u = self._cdf_lo + gen.random(count) * self.mass
        x = self.mean + self.std * special.ndtri(u)
        return np.clip(x, self.lower, self.upper)

    def support_interval(self):
        lo = max(self.lower, self.mean - _Z_TAIL * self.std)
        hi = min(self.upper, self.mean + _Z_TAIL * self.std)
        return lo, hi

    def __repr__(self):
        return (f"TruncatedNormal(mean={self.mean!r}, std={self.std!r}, lower={self.lower!r}, "
                f"upper={self.upper!r}, renormalize={self.renormalize!r})")


class Beta(Density):
    """Independent Beta(alpha, beta) variables, each scaled to [lower, upper]."""

    def __init__(self, alpha, beta, lower, upper):
        self.lower = _vec(lower, name="lower")
        dim = self.lower.shape[0]
        self.upper = _vec(upper, dim, name="upper")
        self.alpha = _vec(alpha, dim, name="alpha")
        self.beta = _vec(beta, dim, name="beta")
        if np.any(self.alpha <= 0) or np.any(self.beta <= 0):
            raise InputError("Beta shape parameters must be positive")
        if np.any(self.lower >= self.upper):
            raise InputError("Beta box needs lower < upper")
        self.dim = dim
        self._width = self.upper - self.lower
        self._log_norm = special.betaln(self.alpha, self.beta) + np.log(self._width)

    def _pdf(self, pts):
        t = (pts - self.lower) / self._width
        inside = np.all((t >= 0) & (t <= 1), axis=1)
        tc = np.clip(t, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = special.xlogy(self.alpha - 1, tc) + special.xlog1py(self.beta - 1, -tc) - self._log_norm
            val = np.exp(np.sum(logp, axis=1))
        return np.where(inside, val, 0.0)

    def _sample(self, count, gen):
        t = gen.beta(self.alpha, self.beta, size=(count, self.dim))
        return self.lower + t * self._width

    def support_interval(self):
        if self.dim != 1:
            return super().support_interval()
        return float(self.lower[0]), float(self.upper[0])

    def __repr__(self):
        return (f"Beta(alpha={self.alpha.tolist()}, beta={self.beta.tolist()}, "
                f"lower={self.lower.tolist()}, upper={self.upper.tolist()})")


class MultivariateStandardNormal(Normal):
    def __init__(self, dim):
        dim = int(dim)
        if dim < 1:
            raise InputError("dim must be positive")
        super().__init__(np.zeros(dim), np.ones(dim))

    def __repr__(self):
        return f"MultivariateStandardNormal({self.dim})"


class MultivariateNormal(Density):
    """Normal with full covariance, handled through its Cholesky factor."""

    def __init__(self, mean, cov):
        self.mean = _vec(mean, name="mean")
        self.dim = self.mean.shape[0]
        cov = np.array(cov, dtype=float)
        if cov.shape != (self.dim, self.dim):
            raise InputError(f"covariance must be {self.dim}x{self.dim}")
        if not np.allclose(cov, cov.T, rtol=1e-12, atol=0):
            raise FactorizationError("covariance is not symmetric")
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("covariance is not positive definite") from exc
        self.cov = cov
        self._log_norm = 0.5 * self.dim * math.log(2 * math.pi) + float(np.sum(np.log(np.diag(self.chol))))

    def _pdf(self, pts):
        z = solve_triangular(self.chol, (pts - self.mean).T, lower=True)
        return np.exp(-0.5 * np.sum(z * z, axis=0) - self._log_norm)

    def _sample(self, count, gen):
        return self.mean + gen.standard_normal((count, self.dim)) @ self.chol.T


class ChiSquared(Density):
    """Chi-squared density with ``d`` degrees of freedom on [0, inf)."""

    def __init__(self, d):
        if int(d) != d or d < 1:
            raise InputError("degrees of freedom must be a positive integer")
        self.d = int(d)
        self.dim = 1

    def _pdf(self, pts):
        return np.exp(chi2_logpdf(self.d, pts[:, 0]))

    def _sample(self, count, gen):
        return gen.chisquare(self.d, size=count)

    def cdf(self, q):
        return chi2_cdf(self.d, np.maximum(np.asarray(q, dtype=float), 0.0))

    def quantile(self, p):
        return chi2_quantile(self.d, p)

    def support_interval(self):
        return 0.0, chi2_quantile(self.d, 1.0 - 1e-10)

    def __repr__(self):
        return f"ChiSquared({self.d})"


class Product(Density):
    """Independent combination of 1-D densities."""

    def __init__(self, factors: Sequence[Density]):
        self.factors = tuple(factors)
        if not self.factors:
            raise InputError("Product needs at least one factor")
        if any(f.dim != 1 for f in self.factors):
            raise InputError("Product factors must be one-dimensional")
        self.dim = len(self.factors)
        self.sampleable = all(f.sampleable for f in self.factors)

    def _pdf(self, pts):
        out = np.ones(pts.shape[0])
        for j, f in enumerate(self.factors):
            out *= f._pdf(pts[:, j:j + 1])
        return out

    def _sample(self, count, gen):
        rng = _GeneratorStream(gen)
        return np.column_stack([f.sample(count, rng)[:, 0] for f in self.factors])

    def __repr__(self):
        return f"Product({list(self.factors)!r})"


class _GeneratorStream(RngStream):
    """Wraps an existing Generator so nested sampling shares one stream."""

    def __init__(self, gen):
        self.seed = None
        self.generator = gen


# ---------------------------------------------------------------------------
# kernel density estimation
# ---------------------------------------------------------------------------

def bandwidth_factor(rule: str, count: int, dim: int) -> float:
    """Multiplier f(M, k) applied to the per-dimension sample std."""
    rule = rule.lower()
    if rule == "silverman":
        return (4.0 / (dim + 2.0)) ** (1.0 / (dim + 4.0)) * count ** (-1.0 / (dim + 4.0))
    if rule == "scott":
        return count ** (-1.0 / (dim + 4.0))
    raise InputError(f"unknown bandwidth rule {rule!r}")


# Above this many kernel evaluations a 1-D KDE switches to the binned path.
_BINNED_THRESHOLD = 4_000_000
_BIN_RESOLUTION = 256  # grid points per bandwidth
_MAX_GRID = 2**21
_KERNEL_REACH = 10.0  # bandwidths; exp(-50) is far below double resolution of the peak
_CHUNK_ELEMENTS = 2_000_000


class GaussianKDE(Density):
    """Product-Gaussian kernel density estimate with a diagonal bandwidth.

    Parameters
    ----------
    points : (M, k) array
        Kernel centres.
    bandwidth : (k,) array
        Kernel standard deviation per dimension.
    rule : str
        Name of the rule that produced ``bandwidth`` (kept for provenance).
    method : {"auto", "direct", "binned"}
        ``direct`` sums every kernel exactly. ``binned`` (1-D only) spreads
        the centres onto a fine grid by linear binning, convolves with the
        kernel by FFT and interpolates; relative error is around 1e-6.
        ``auto`` uses binning only for large 1-D evaluations.
    """

    def __init__(self, points, bandwidth, rule="explicit", method="auto"):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InputError("KDE points must be an (M, k) array with M >= 1")
        self.dim = pts.shape[1]
        bw = _vec(bandwidth, self.dim, name="bandwidth")
        if not np.all(np.isfinite(bw)) or np.any(bw <= 0):
            raise InputError("KDE bandwidths must be strictly positive")
        if method not in ("auto", "direct", "binned"):
            raise InputError(f"unknown KDE evaluation method {method!r}")
        pts.setflags(write=False)
        self.points = pts
        self.bandwidth = bw
        self.rule = rule
        self.method = method
        self._norm = 1.0 / (pts.shape[0] * float(np.prod(bw)) * _SQRT_2PI ** self.dim)
        self._grid = None

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def _pdf(self, pts):
        n_eval = pts.shape[0]
        use_binned = self.dim == 1 and (
            self.method == "binned"
            or (self.method == "auto" and n_eval * self.count > _BINNED_THRESHOLD and self.count > 1000)
        )
        if use_binned:
            out = self._binned(pts[:, 0])
            if out is not None:
                return out
        return self._direct(pts)

    def _direct(self, pts):
        scaled_pts = self.points / self.bandwidth
        x = pts / self.bandwidth
        out = np.empty(x.shape[0])
        rows = max(1, _CHUNK_ELEMENTS // self.count)
        buf = np.empty((min(rows, x.shape[0]), self.count))
        for s in range(0, x.shape[0], rows):
            xc = x[s:s + rows]
            b = buf[:xc.shape[0]]
            np.subtract(xc[:, :1], scaled_pts[:, 0], out=b)
            np.multiply(b, b, out=b)
            for j in range(1, self.dim):
                diff = xc[:, j:j + 1] - scaled_pts[:, j]
                b += diff * diff
            b *= -0.5
            np.exp(b, out=b)
            out[s:s + rows] = b.sum(axis=1)
        return out * self._norm

    def _build_grid(self):
        h = float(self.bandwidth[0])
        p = self.points[:, 0]
        reach = _KERNEL_REACH * h
        lo, hi = float(p.min()) - reach, float(p.max()) + reach
        step = h / _BIN_RESOLUTION
        n = int(math.ceil((hi - lo) / step)) + 1
        if n > _MAX_GRID:
            return None
        grid = lo + step * np.arange(n)
        t = (p - lo) / step
        i = np.floor(t).astype(np.int64)
        w = t - i
        counts = np.bincount(i, weights=1.0 - w, minlength=n + 1)
        counts += np.bincount(i + 1, weights=w, minlength=n + 1)
        counts = counts[:n]
        half = int(math.ceil(reach / step))
        offsets = step * np.arange(-half, half + 1)
        kernel = np.exp(-0.5 * (offsets / h) ** 2)
        dens = signal.fftconvolve(counts, kernel, mode="same") * self._norm
        return grid, dens, float(dens.max())

    def _binned(self, x):
        if self._grid is None:
            self._grid = self._build_grid() or False
        if self._grid is False:
            return None
        grid, dens, peak = self._grid
        out = np.interp(x, grid, dens, left=0.0, right=0.0)
        # FFT round-off swamps the far tails, evaluate those exactly.
        exact = (out < 1e-8 * peak) | (x <= grid[0]) | (x >= grid[-1])
        if np.any(exact):
            out[exact] = self._direct(x[exact].reshape(-1, 1))
        return out

    def _sample(self, count, gen):
        idx = gen.integers(0, self.count, size=count)
        return self.points[idx] + self.bandwidth * gen.standard_normal((count, self.dim))

    def support_interval(self):
        if self.dim != 1:
            return super().support_interval()
        h = float(self.bandwidth[0])
        return float(self.points.min()) - _Z_TAIL * h, float(self.points.max()) + _Z_TAIL * h

    def __repr__(self):
        return f"GaussianKDE(M={self.count}, bandwidth={self.bandwidth.tolist()}, rule={self.rule!r})"


def _lcv_factor(pts, spread, method):
    """Common multiplier of the per-dimension stds maximising the leave-one-out likelihood."""
    m, k = pts.shape

    def neg_loglik(log_c):
        bw = spread * math.exp(log_c)
        kde = GaussianKDE(pts, bw, method=method)
        self_term = 1.0 / (float(np.prod(bw)) * _SQRT_2PI ** k)
        loo = (kde.pdf(pts) * m - self_term) / (m - 1)
        return -float(np.sum(np.log(np.maximum(loo, 1e-300))))

    res = optimize.minimize_scalar(neg_loglik, bounds=(math.log(1e-3), math.log(2.0)),
                                   method="bounded", options={"xatol": 1e-3})
    return math.exp(res.x)


def fit_gkde(points, bandwidth_rule: Union[str, Sequence[float]] = "silverman", method="auto") -> GaussianKDE:
    """Fit a diagonal-bandwidth Gaussian KDE.

    Rule-based bandwidths are ``h_j = s_j * f(M, k)`` with ``s_j`` the sample
    standard deviation of dimension ``j``. ``"silverman"`` and ``"scott"`` are
    the normal-reference rules of :func:`bandwidth_factor`; ``"lcv"`` picks
    the factor by leave-one-out likelihood cross-validation, which copes with
    multimodal or gapped samples where the normal reference oversmooths.
    An explicit vector is used as given.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.ndim != 2:
        raise InputError("points must be an (M, k) array")
    m, k = pts.shape
    if m < 2:
        raise InputError(f"need at least 2 points to fit a KDE, got {m}")
    if not np.all(np.isfinite(pts)):
        raise InputError("KDE points must be finite")
    if isinstance(bandwidth_rule, str):
        spread = pts.std(axis=0, ddof=1)
        if np.any(spread <= 0):
            dims = np.flatnonzero(spread <= 0).tolist()
            raise DegenerateDataError(f"zero spread in dimension(s) {dims}; cannot choose a bandwidth")
        rule = bandwidth_rule.lower()
        if rule == "lcv":
            bw = spread * _lcv_factor(pts, spread, method)
        else:
            bw = spread * bandwidth_factor(rule, m, k)
    else:
        bw = _vec(bandwidth_rule, k, name="bandwidth")
        rule = "explicit"
    return GaussianKDE(pts, bw, rule=rule, method=method)
