"""Matrix primitives: truncated SVD, matrix sign, subspace distance, quantiles."""
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DegeneracyError, DimensionError


@dataclass(frozen=True)
class TruncatedSVD:
    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.s.shape[0]


def truncated_svd(m, r):
    """Leading ``r`` singular triplets of ``m``, singular values descending."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionError("truncated_svd expects a matrix")
    r = int(r)
    if not 1 <= r <= min(m.shape):
        raise DimensionError(f"rank {r} out of range for a {m.shape} matrix")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    return TruncatedSVD(u[:, :r], s[:r], vt[:r].T)


def _degenerate_cutoff(s, shape):
    return np.finfo(float).eps * max(shape) * (s[0] if s.size else 0.0)


def matrix_sign(m):
    """Orthogonal polar factor ``U V^T`` of ``m``."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionError("matrix_sign expects a matrix")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[-1] <= _degenerate_cutoff(s, m.shape):
        raise DegeneracyError("matrix sign undefined: zero singular value", code="degenerate_sign")
    return u @ vt


def sin_theta(u1, u2):
    """Spectral sin-Theta distance between the column spans of ``u1`` and ``u2``.

    Computed as ``||(I - u1 u1^T) u2||_2``; the ``sqrt(1 - cos^2)`` form loses
    half the digits near zero.
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape != u2.shape or u1.ndim != 2:
        raise DimensionError(f"shape mismatch: {u1.shape} vs {u2.shape}")
    resid = u2 - u1 @ (u1.T @ u2)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def align(uhat, u):
    """Rotation ``W = sgn(u^T uhat)`` minimising ``||uhat - u W||_F`` over orthogonal ``W``."""
    uhat = np.asarray(uhat, dtype=float)
    u = np.asarray(u, dtype=float)
    if uhat.shape != u.shape:
        raise DimensionError(f"shape mismatch: {uhat.shape} vs {u.shape}")
    return matrix_sign(u.T @ uhat)


def _check_prob(prob):
    if not 0.0 < prob < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {prob!r}")


def chi2_quantile(df, prob):
    if int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    _check_prob(prob)
    return float(special.chdtri(df, 1.0 - prob))


def chi2_sf(df, x):
    """Upper tail ``P(chi2_df > x)``."""
    if int(df) != df or df < 1:
        raise ValueError(f"degrees of freedom must be a positive integer, got {df!r}")
    return float(special.chdtrc(df, max(float(x), 0.0)))


def gaussian_quantile(prob):
    _check_prob(prob)
    return float(special.ndtri(prob))
