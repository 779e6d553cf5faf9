"""Dense order-3 tensor algebra.

Tensors are plain ``numpy`` arrays of shape ``(p1, p2, p3)`` in C order, so
the mode-3 index runs fastest and ``vectorize`` is a view of the storage.

Matricization uses the cyclic column convention: the mode-``k`` unfolding
has rows indexed by ``i_k`` and columns by ``(i_{k+1}, i_{k+2})`` with
``i_{k+2}`` fastest, modes read mod 3.  In 1-based terms the column of
``T[i1, i2, i3]`` is ``(i2-1)*p3 + i3`` for mode 1, ``(i3-1)*p1 + i1`` for
mode 2 and ``(i1-1)*p2 + i2`` for mode 3.  With this convention

    matricize(T x1 A1 x2 A2 x3 A3, k) == A_k @ matricize(T, k) @ kron(A_{k+1}, A_{k+2}).T

Modes are 1-based (1, 2, 3) throughout the public API.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DimensionError

ORTHO_TOL = 1e-10
INCOHERENCE_ORTHO_TOL = 1e-8


def as_tensor3(t):
    t = np.asarray(t, dtype=float)
    if t.ndim != 3:
        raise DimensionError(f"expected an order-3 tensor, got ndim={t.ndim}")
    if min(t.shape) < 1:
        raise DimensionError(f"tensor dimensions must be positive, got {t.shape}")
    return t


def _axis(mode):
    if mode not in (1, 2, 3):
        raise DimensionError(f"mode must be 1, 2 or 3, got {mode!r}")
    return mode - 1


def cyclic_axes(mode):
    """Axes ``(k, k+1, k+2)`` (0-based, mod 3) for a 1-based mode."""
    a = _axis(mode)
    return a, (a + 1) % 3, (a + 2) % 3


def to_zero_based(index, dims):
    """Translate a 1-based ``(i, j, k)`` triple into a 0-based one, range checked."""
    if len(index) != 3:
        raise DimensionError(f"expected an index triple, got {index!r}")
    out = []
    for i, p in zip(index, dims):
        i = int(i)
        if not 1 <= i <= p:
            raise DimensionError(f"index {tuple(index)} out of range for dims {tuple(dims)}")
        out.append(i - 1)
    return tuple(out)


def column_index(index0, dims, mode):
    """0-based column of entry ``index0`` (0-based triple) in ``matricize(., mode)``."""
    _, b, c = cyclic_axes(mode)
    return index0[b] * dims[c] + index0[c]


def matricize(t, mode):
    t = as_tensor3(t)
    axes = cyclic_axes(mode)
    return t.transpose(axes).reshape(t.shape[axes[0]], -1)


def dematricize(m, mode, dims):
    m = np.asarray(m, dtype=float)
    dims = tuple(int(p) for p in dims)
    axes = cyclic_axes(mode)
    rows = dims[axes[0]]
    cols = dims[axes[1]] * dims[axes[2]]
    if m.shape != (rows, cols):
        raise DimensionError(f"matrix of shape {m.shape} cannot fold to dims {dims} along mode {mode}")
    folded = m.reshape(rows, dims[axes[1]], dims[axes[2]])
    return folded.transpose(np.argsort(axes))


def mode_product(t, a, mode):
    """``t x_mode a``: contract mode ``mode`` of ``t`` against the columns of ``a``."""
    t = as_tensor3(t)
    a = np.asarray(a, dtype=float)
    ax = _axis(mode)
    if a.ndim != 2 or a.shape[1] != t.shape[ax]:
        raise DimensionError(
            f"cannot multiply mode {mode} (size {t.shape[ax]}) by a matrix of shape {a.shape}"
        )
    return np.moveaxis(np.tensordot(a, t, axes=(1, ax)), 0, ax)


def multi_mode_product(t, mats, transpose=False):
    """Apply ``mats[k]`` along mode ``k+1`` for every non-``None`` entry.

    With ``transpose=True`` the transposes are applied, which is the
    projection onto factor coordinates (``t x1 U1^T x2 U2^T x3 U3^T``).
    """
    for k, a in enumerate(mats):
        if a is None:
            continue
        t = mode_product(t, a.T if transpose else a, k + 1)
    return t


def vectorize(t):
    return as_tensor3(t).reshape(-1)


@dataclass(frozen=True)
class TuckerFactors:
    """Core tensor and three factor matrices with orthonormal columns."""

    core: np.ndarray
    factors: tuple

    def __post_init__(self):
        core = as_tensor3(self.core)
        factors = tuple(np.asarray(u, dtype=float) for u in self.factors)
        if len(factors) != 3:
            raise DimensionError("a Tucker decomposition needs exactly three factors")
        for k, u in enumerate(factors):
            if u.ndim != 2 or u.shape[1] != core.shape[k]:
                raise DimensionError(
                    f"factor {k + 1} has shape {u.shape}, core mode size is {core.shape[k]}"
                )
            if u.shape[1] > u.shape[0]:
                raise DimensionError(f"factor {k + 1} has more columns than rows")
        object.__setattr__(self, "core", core)
        object.__setattr__(self, "factors", factors)

    @property
    def ranks(self):
        return self.core.shape

    @property
    def dims(self):
        return tuple(u.shape[0] for u in self.factors)

    def check_orthonormal(self, tol=ORTHO_TOL):
        for k, u in enumerate(self.factors):
            err = np.max(np.abs(u.T @ u - np.eye(u.shape[1])))
            if err > tol:
                raise DimensionError(f"factor {k + 1} is not orthonormal (max-abs error {err:.2e})")


def tucker_compose(f):
    """``core x1 U1 x2 U2 x3 U3``."""
    f.check_orthonormal()
    return multi_mode_product(f.core, f.factors)


def incoherence(u):
    """``sqrt(p/r) * max_i ||u[i, :]||`` for ``u`` with orthonormal columns."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2:
        raise DimensionError("incoherence expects a matrix")
    p, r = u.shape
    err = np.max(np.abs(u.T @ u - np.eye(r)))
    if err > INCOHERENCE_ORTHO_TOL:
        raise DimensionError(f"columns are not orthonormal (max-abs error {err:.2e})")
    return float(np.sqrt(p / r) * np.max(np.linalg.norm(u, axis=1)))


def tensor_incoherence(f):
    return max(incoherence(u) for u in f.factors)


def spectral_summary(t, ranks):
    """Return ``(lambda_min, lambda_max, kappa)`` over the three matricizations.

    ``lambda_min`` is the smallest of the ``r_k``-th singular values and
    ``kappa`` the largest per-mode ratio ``sigma_1 / sigma_{r_k}``.
    """
    t = as_tensor3(t)
    lam_min, lam_max, kappa = np.inf, 0.0, 0.0
    for k in (1, 2, 3):
        m = matricize(t, k)
        r = int(ranks[k - 1])
        if not 1 <= r <= min(m.shape):
            raise DimensionError(f"rank {r} out of range for mode {k} of a {t.shape} tensor")
        s = np.linalg.svd(m, compute_uv=False)
        if s[r - 1] <= 0.0:
            raise DegeneracyError(f"mode {k} has rank below {r}", code="rank_deficient")
        lam_min = min(lam_min, s[r - 1])
        lam_max = max(lam_max, s[0])
        kappa = max(kappa, s[0] / s[r - 1])
    return float(lam_min), float(lam_max), float(kappa)
