"""Higher-order orthogonal iteration with diagonal-deletion initialization."""
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSpectrumWarning, DimensionError
from .linalg import sin_theta
from .tensor import TuckerFactors, as_tensor3, matricize, multi_mode_product


@dataclass(frozen=True)
class HooiConfig:
    ranks: tuple
    max_iters: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        if len(ranks) != 3 or min(ranks) < 1:
            raise DimensionError(f"ranks must be three positive integers, got {self.ranks!r}")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be at least 1")
        if self.tol < 0:
            raise ValueError("tol must be nonnegative")
        object.__setattr__(self, "ranks", ranks)

    def check_dims(self, dims):
        for k, (r, p) in enumerate(zip(self.ranks, dims)):
            if r > p:
                raise DimensionError(f"rank r_{k + 1}={r} exceeds dimension p_{k + 1}={p}")


@dataclass(frozen=True)
class TuckerFit:
    """Output of :func:`hooi`.

    ``factors.core`` holds the projected core ``T~ x1 U1^T x2 U2^T x3 U3^T``
    and ``denoised`` the full-size estimate ``T~ x_k U_k U_k^T``.
    ``singular_values[k]`` are the leading singular values of the last
    projected mode-``k`` unfolding computed by the iteration and
    ``objective`` the Frobenius norm of the core after each sweep.
    """

    factors: TuckerFactors
    denoised: np.ndarray
    iterations_run: int
    converged: bool
    singular_values: tuple
    objective: tuple = field(default=())

    @property
    def U(self):
        return self.factors.factors

    @property
    def ranks(self):
        return self.factors.ranks


def hollow(g):
    """Copy of ``g`` with its diagonal set to zero."""
    g = np.array(g, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise DimensionError(f"hollow expects a square matrix, got shape {g.shape}")
    np.fill_diagonal(g, 0.0)
    return g


def hollowed_gram(t, mode):
    m = matricize(t, mode)
    return hollow(m @ m.T)


def _top_eigvecs(g, r):
    w, v = np.linalg.eigh(g)
    if np.all(w == 0.0):
        warnings.warn("hollowed Gram matrix is zero; returning an arbitrary basis",
                      DegenerateSpectrumWarning, stacklevel=3)
    return v[:, ::-1][:, :r]


def diagonal_deletion_init(ttilde, ranks):
    """Initial mode-2 and mode-3 factors from the hollowed Gram matrices.

    Returns the eigenvectors of ``hollow(M_k M_k^T)`` belonging to the
    ``r_k`` algebraically largest eigenvalues, for ``k = 2, 3``.
    """
    ttilde = as_tensor3(ttilde)
    HooiConfig(ranks).check_dims(ttilde.shape)
    return tuple(_top_eigvecs(hollowed_gram(ttilde, k), ranks[k - 1]) for k in (2, 3))


def scree(ttilde, mode):
    """All eigenvalues of the hollowed mode-``mode`` Gram matrix, descending."""
    w = np.linalg.eigvalsh(hollowed_gram(ttilde, mode))
    return w[::-1].copy()


def _leading_left(m, r):
    # full_matrices completes the basis when r exceeds the column count
    u, s, _ = np.linalg.svd(m, full_matrices=r > min(m.shape))
    cutoff = np.finfo(float).eps * max(m.shape) * (s[0] if s.size else 0.0)
    if r > s.size or s[r - 1] <= cutoff:
        warnings.warn(
            f"rank {r} exceeds the numerical rank of a {m.shape} unfolding; "
            "completing the basis arbitrarily",
            DegenerateSpectrumWarning,
            stacklevel=3,
        )
    s_r = np.zeros(r)
    s_r[: min(r, s.size)] = s[:r]
    return u[:, :r], s_r


def hooi(ttilde, cfg, init=None):
    """Run HOOI on ``ttilde`` and assemble a :class:`TuckerFit`.

    ``init`` optionally supplies ``(U2, U3)``; by default the
    diagonal-deletion initializer is used.  Iteration stops once the largest
    sin-Theta change of any factor between consecutive sweeps is at most
    ``cfg.tol``, or after ``cfg.max_iters`` sweeps.
    """
    ttilde = as_tensor3(ttilde)
    cfg.check_dims(ttilde.shape)
    ranks = cfg.ranks
    if init is None:
        init = diagonal_deletion_init(ttilde, ranks)
    U = [None, np.asarray(init[0], dtype=float), np.asarray(init[1], dtype=float)]
    for k in (1, 2):
        if U[k].shape != (ttilde.shape[k], ranks[k]):
            raise DimensionError(f"initial factor {k + 1} has shape {U[k].shape}")

    objective = []
    svals = [None, None, None]
    converged = False
    it = 0
    for it in range(1, int(cfg.max_iters) + 1):
        prev = list(U)
        for k in range(3):
            others = [None if j == k else U[j] for j in range(3)]
            y = multi_mode_product(ttilde, others, transpose=True)
            U[k], svals[k] = _leading_left(matricize(y, k + 1), ranks[k])
        core = multi_mode_product(ttilde, U, transpose=True)
        objective.append(float(np.linalg.norm(core)))
        delta = max(sin_theta(prev[k], U[k]) for k in range(3) if prev[k] is not None)
        if delta <= cfg.tol:
            converged = True
            break

    core = multi_mode_product(ttilde, U, transpose=True)
    denoised = multi_mode_product(core, U)
    return TuckerFit(
        factors=TuckerFactors(core, tuple(U)),
        denoised=denoised,
        iterations_run=it,
        converged=converged,
        singular_values=tuple(svals),
        objective=tuple(objective),
    )
