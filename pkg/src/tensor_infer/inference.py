"""Plug-in uncertainty quantification for a HOOI fit.

Every procedure shares one :class:`InferenceContext`: the residual tensor
``Zhat = T~ - That`` and, per mode, the right singular vectors ``V_k`` and
singular values ``lam_k`` of ``M_k(T~) (P_{k+1} kron P_{k+2})`` where
``P_j = U_j U_j^T``.  Rows of ``V_k`` are indexed by the mode-``k``
matricization columns, so residual rows and ``V_k`` rows line up directly.

Entry indices passed to the public functions are 1-based triples.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DimensionError
from .hooi import TuckerFit
from .linalg import chi2_quantile, chi2_sf, gaussian_quantile, truncated_svd
from .tensor import (
    as_tensor3,
    column_index,
    cyclic_axes,
    matricize,
    multi_mode_product,
    to_zero_based,
)

EIG_FLOOR = 1e-14


@dataclass(frozen=True)
class Ellipsoid:
    """``{center + shape^{1/2} z : ||z||^2 <= radius2}``."""

    center: np.ndarray
    shape: np.ndarray
    radius2: float
    level: float

    def __post_init__(self):
        center = np.atleast_1d(np.asarray(self.center, dtype=float))
        shape = np.atleast_2d(np.asarray(self.shape, dtype=float))
        if shape.shape != (center.size, center.size):
            raise DimensionError(f"shape {shape.shape} does not match center of size {center.size}")
        if not np.allclose(shape, shape.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(shape).max())):
            raise DimensionError("ellipsoid shape matrix is not symmetric")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "shape", 0.5 * (shape + shape.T))

    @property
    def dim(self):
        return self.center.size

    def mahalanobis2(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != self.center.shape:
            raise DimensionError(f"point of size {x.size} vs region of dimension {self.dim}")
        d = x - self.center
        return float(d @ sym_solve(self.shape, d))

    def contains(self, x):
        return self.mahalanobis2(x) <= self.radius2

    def to_dict(self):
        return {
            "center": self.center.tolist(),
            "shape": self.shape.tolist(),
            "radius2": self.radius2,
            "level": self.level,
        }


@dataclass(frozen=True)
class IntervalCI:
    estimate: float
    lo: float
    hi: float
    level: float
    std_err: float

    def contains(self, x):
        return self.lo <= x <= self.hi

    def to_dict(self):
        return {"estimate": self.estimate, "lo": self.lo, "hi": self.hi,
                "level": self.level, "std_err": self.std_err}


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    alpha: float = None

    __test__ = False  # not a pytest class

    @property
    def reject(self):
        return None if self.alpha is None else self.p_value < self.alpha

    def to_dict(self):
        return {"statistic": self.statistic, "df": self.df, "p_value": self.p_value,
                "alpha": self.alpha, "reject": self.reject}


def sym_solve(a, b):
    """Solve ``a x = b`` for symmetric PSD ``a`` via its eigendecomposition.

    Eigenvalues below ``EIG_FLOOR * lambda_max`` raise instead of being
    regularised.
    """
    w, v = np.linalg.eigh(a)
    top = w[-1] if w.size else 0.0
    if top <= 0.0 or w[0] <= EIG_FLOOR * top:
        raise DegeneracyError("covariance matrix is singular", code="singular_covariance")
    return v @ ((v.T @ b) / (w if np.ndim(b) == 1 else w[:, None]))


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")


@dataclass(frozen=True)
class InferenceContext:
    fit: TuckerFit
    ttilde: np.ndarray
    zhat: np.ndarray
    vhat: tuple
    lamhat: tuple
    zmat: tuple

    @property
    def dims(self):
        return self.ttilde.shape

    @property
    def ranks(self):
        return self.fit.ranks

    def estimate(self, index):
        return float(self.fit.denoised[to_zero_based(index, self.dims)])


def build_context(ttilde, fit):
    """Residuals and per-mode right singular pairs for the plug-in covariances.

    ``M_k(T~)(P_{k+1} kron P_{k+2})`` equals
    ``M_k(T~ x_{k+1} U^T x_{k+2} U^T) (U_{k+1} kron U_{k+2})^T`` and the
    Kronecker factor has orthonormal columns, so its right singular vectors
    are ``(U_{k+1} kron U_{k+2}) R`` with ``R`` from the small unfolding.
    """
    ttilde = as_tensor3(ttilde)
    if ttilde.shape != fit.denoised.shape:
        raise DimensionError("fit does not belong to this tensor")
    U = fit.U
    vhat, lamhat = [], []
    for k in (1, 2, 3):
        a, b, c = cyclic_axes(k)
        mats = [None, None, None]
        mats[b], mats[c] = U[b], U[c]
        small = matricize(multi_mode_product(ttilde, mats, transpose=True), k)
        r = fit.ranks[a]
        if r > min(small.shape):
            raise DegeneracyError(f"mode {k}: rank {r} exceeds projected unfolding rank",
                                  code="rank_collapse")
        svd = truncated_svd(small, r)
        if svd.s[-1] <= EIG_FLOOR * max(svd.s[0], np.finfo(float).tiny):
            raise DegeneracyError(f"mode {k}: projected singular values collapse",
                                  code="rank_collapse")
        vhat.append(np.kron(U[b], U[c]) @ svd.V)
        lamhat.append(svd.s)
    zhat = ttilde - fit.denoised
    zmat = tuple(matricize(zhat, k) for k in (1, 2, 3))
    return InferenceContext(fit, ttilde, zhat, tuple(vhat), tuple(lamhat), zmat)


def _check_mode_row(ctx, mode, row):
    if mode not in (1, 2, 3):
        raise DimensionError(f"mode must be 1, 2 or 3, got {mode!r}")
    p = ctx.dims[mode - 1]
    if not 1 <= int(row) <= p:
        raise DimensionError(f"row {row} out of range 1..{p} for mode {mode}")
    return int(row) - 1


def loading_covariance(ctx, mode, row):
    """Plug-in covariance of row ``row`` of the mode-``mode`` factor estimate.

    ``Lam^{-1} V^T diag(Zhat_k[row]**2) V Lam^{-1}``.
    """
    m = _check_mode_row(ctx, mode, row)
    z2 = ctx.zmat[mode - 1][m] ** 2
    if not np.any(z2):
        raise DegeneracyError(f"mode {mode} row {row}: all residuals are zero",
                              code="singular_covariance")
    v = ctx.vhat[mode - 1] / ctx.lamhat[mode - 1]
    g = v.T @ (z2[:, None] * v)
    return 0.5 * (g + g.T)


def loading_region(ctx, mode, row, alpha):
    _check_alpha(alpha)
    gamma = loading_covariance(ctx, mode, row)
    center = ctx.fit.U[mode - 1][int(row) - 1]
    return Ellipsoid(center, gamma, chi2_quantile(gamma.shape[0], 1.0 - alpha), 1.0 - alpha)


def region_contains(e, x):
    return e.contains(x)


def _projection_columns(ctx, index0, mode):
    """Column ``V_k V_k^T e_c`` for the matricization column ``c`` of the entry."""
    v = ctx.vhat[mode - 1]
    c = column_index(index0, ctx.dims, mode)
    return v @ v[c]


def _entry_terms(ctx, index0):
    """Per-mode ``(row, V V^T e_col)`` pairs for a 0-based entry."""
    return [(index0[k - 1], _projection_columns(ctx, index0, k)) for k in (1, 2, 3)]


def entry_variance(ctx, i, j, k):
    idx = to_zero_based((i, j, k), ctx.dims)
    total = 0.0
    for mode, (row, w) in enumerate(_entry_terms(ctx, idx), start=1):
        total += float(np.dot(ctx.zmat[mode - 1][row] ** 2, w ** 2))
    return total


def entry_ci(ctx, i, j, k, alpha):
    _check_alpha(alpha)
    s2 = entry_variance(ctx, i, j, k)
    if s2 <= 0.0:
        raise DegeneracyError(f"entry {(i, j, k)}: zero plug-in variance", code="zero_variance")
    se = float(np.sqrt(s2))
    z = gaussian_quantile(1.0 - alpha / 2.0)
    est = ctx.estimate((i, j, k))
    return IntervalCI(est, est - z * se, est + z * se, 1.0 - alpha, se)


def _validate_triples(ctx, triples):
    triples = [tuple(int(x) for x in t) for t in triples]
    if not triples:
        raise DimensionError("index set must be non-empty")
    if len(set(triples)) != len(triples):
        raise DimensionError("index set contains duplicate triples")
    return triples, [to_zero_based(t, ctx.dims) for t in triples]


def joint_covariance(ctx, triples):
    """Covariance of the estimated entries at ``triples`` (1-based, caller order).

    Entry pairs sharing the mode-``k`` index pick up the term
    ``w_k(t)^T diag(Zhat_k[i_k]**2) w_k(t')`` with ``w_k(t) = V_k V_k^T e_col(t)``.
    """
    _, idx = _validate_triples(ctx, triples)
    terms = [_entry_terms(ctx, t) for t in idx]
    n = len(idx)
    s = np.zeros((n, n))
    for mode in (1, 2, 3):
        zk = ctx.zmat[mode - 1]
        for a in range(n):
            row_a, w_a = terms[a][mode - 1]
            weighted = zk[row_a] ** 2 * w_a
            for b in range(a, n):
                row_b, w_b = terms[b][mode - 1]
                if row_a == row_b:
                    val = float(np.dot(weighted, w_b))
                    s[a, b] += val
                    if b != a:
                        s[b, a] += val
    return s


def joint_region(ctx, triples, alpha):
    _check_alpha(alpha)
    triples, idx = _validate_triples(ctx, triples)
    s = joint_covariance(ctx, triples)
    w = np.linalg.eigvalsh(s)
    if w[-1] <= 0.0 or w[0] <= EIG_FLOOR * w[-1]:
        raise DegeneracyError("joint covariance is singular", code="singular_covariance")
    center = np.array([ctx.fit.denoised[t] for t in idx])
    return Ellipsoid(center, s, chi2_quantile(len(triples), 1.0 - alpha), 1.0 - alpha)


def pair_difference_variance(ctx, t1, t2, printed=False):
    """Plug-in variance of ``That[t1] - That[t2]``.

    By default the overlap covariance is subtracted twice (the variance of a
    difference).  ``printed=True`` subtracts it once instead.
    """
    t1, t2 = tuple(t1), tuple(t2)
    if t1 == t2:
        raise DimensionError("pair entries must be distinct")
    s = joint_covariance(ctx, [t1, t2])
    factor = 1.0 if printed else 2.0
    v = s[0, 0] + s[1, 1] - factor * s[0, 1]
    if v <= 0.0:
        raise DegeneracyError("pair difference variance is not positive", code="zero_variance")
    return float(v)


def pair_difference_ci(ctx, t1, t2, alpha, printed=False):
    _check_alpha(alpha)
    se = float(np.sqrt(pair_difference_variance(ctx, t1, t2, printed=printed)))
    z = gaussian_quantile(1.0 - alpha / 2.0)
    est = ctx.estimate(t1) - ctx.estimate(t2)
    return IntervalCI(est, est - z * se, est + z * se, 1.0 - alpha, se)


def equality_test(ctx, t1, t2, alpha=None, printed=False):
    """Wald test of ``T[t1] == T[t2]`` against chi-square with one degree of freedom."""
    if alpha is not None:
        _check_alpha(alpha)
    v = pair_difference_variance(ctx, t1, t2, printed=printed)
    d = ctx.estimate(t1) - ctx.estimate(t2)
    stat = d * d / v
    return TestResult(stat, 1, chi2_sf(1, stat), alpha)


def membership_test(ctx, mode, i, i2, alpha=None):
    """Two-sample test that rows ``i`` and ``i2`` of the mode-``mode`` factor coincide."""
    if alpha is not None:
        _check_alpha(alpha)
    if int(i) == int(i2):
        raise DimensionError("membership test needs two distinct rows")
    a = _check_mode_row(ctx, mode, i)
    b = _check_mode_row(ctx, mode, i2)
    pooled = loading_covariance(ctx, mode, i) + loading_covariance(ctx, mode, i2)
    u = ctx.fit.U[mode - 1]
    d = u[a] - u[b]
    stat = float(d @ sym_solve(pooled, d))
    df = u.shape[1]
    return TestResult(stat, df, chi2_sf(df, stat), alpha)
