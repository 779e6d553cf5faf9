"""Slow reference implementations written straight from index formulas.

Nothing here calls into the reshape/transpose machinery of the package, so
agreement with it is a genuine cross-check.
"""
import math

import numpy as np


def unfold_col(idx, dims, mode):
    """1-based column of the 1-based entry ``idx`` in the mode-``mode`` unfolding."""
    i, j, k = idx
    p1, p2, p3 = dims
    if mode == 1:
        return (j - 1) * p3 + k
    if mode == 2:
        return (k - 1) * p1 + i
    return (i - 1) * p2 + j


def unfold(t, mode):
    p1, p2, p3 = t.shape
    rows = t.shape[mode - 1]
    m = np.zeros((rows, t.size // rows))
    for i in range(1, p1 + 1):
        for j in range(1, p2 + 1):
            for k in range(1, p3 + 1):
                row = (i, j, k)[mode - 1]
                m[row - 1, unfold_col((i, j, k), t.shape, mode) - 1] = t[i - 1, j - 1, k - 1]
    return m


def mode1_product(t, a):
    p1, p2, p3 = t.shape
    out = np.zeros((a.shape[0], p2, p3))
    for j in range(a.shape[0]):
        for i2 in range(p2):
            for i3 in range(p3):
                out[j, i2, i3] = sum(a[j, i1] * t[i1, i2, i3] for i1 in range(p1))
    return out


def mode_product(t, a, mode):
    """Triple-sum mode product for any mode."""
    if mode == 1:
        return mode1_product(t, a)
    if mode == 2:
        return mode1_product(t.transpose(1, 0, 2), a).transpose(1, 0, 2)
    return mode1_product(t.transpose(2, 1, 0), a).transpose(2, 1, 0)


def compose(core, us):
    """``sum_{abc} core[a,b,c] U1[i,a] U2[j,b] U3[k,c]`` entry by entry."""
    u1, u2, u3 = us
    out = np.zeros((u1.shape[0], u2.shape[0], u3.shape[0]))
    for i, j, k in np.ndindex(*out.shape):
        s = 0.0
        for a, b, c in np.ndindex(*core.shape):
            s += core[a, b, c] * u1[i, a] * u2[j, b] * u3[k, c]
        out[i, j, k] = s
    return out


def projected_unfolding(ttilde, us, mode):
    """``M_k(T~) (P_{k+1} kron P_{k+2})`` built with an explicit Kronecker product."""
    b, c = mode % 3, (mode + 1) % 3
    pb = us[b] @ us[b].T
    pc = us[c] @ us[c].T
    return unfold(ttilde, mode) @ np.kron(pb, pc)


def loading_cov(zhat, vhat, lamhat, mode, m):
    """Gamma[s,t] = sum_a Zhat^2 (row m, column a) V[a,s] V[a,t] / (lam_s lam_t)."""
    dims = zhat.shape
    r = vhat.shape[1]
    g = np.zeros((r, r))
    for idx in np.ndindex(*dims):
        one = tuple(x + 1 for x in idx)
        if one[mode - 1] != m:
            continue
        a = unfold_col(one, dims, mode) - 1
        z2 = zhat[idx] ** 2
        for s in range(r):
            for t in range(r):
                g[s, t] += z2 * vhat[a, s] * vhat[a, t] / (lamhat[s] * lamhat[t])
    return g


def _proj_entry(v, a, c):
    return sum(v[a, s] * v[c, s] for s in range(v.shape[1]))


def overlap_term(zhat, vhat, mode, t1, t2):
    """``e_{col t1}^T V V^T Sigma^{(row)} V V^T e_{col t2}`` with loops over columns."""
    dims = zhat.shape
    row = t1[mode - 1]
    if row != t2[mode - 1]:
        return 0.0
    c1 = unfold_col(t1, dims, mode) - 1
    c2 = unfold_col(t2, dims, mode) - 1
    total = 0.0
    for idx in np.ndindex(*dims):
        one = tuple(x + 1 for x in idx)
        if one[mode - 1] != row:
            continue
        a = unfold_col(one, dims, mode) - 1
        total += _proj_entry(vhat, c1, a) * zhat[idx] ** 2 * _proj_entry(vhat, a, c2)
    return total


def entry_var(zhat, vhats, t):
    """Three-term sum ``sum_a Z_k[row, a]^2 (V V^T)[a, col]^2``."""
    dims = zhat.shape
    total = 0.0
    for mode in (1, 2, 3):
        v = vhats[mode - 1]
        col = unfold_col(t, dims, mode) - 1
        for idx in np.ndindex(*dims):
            one = tuple(x + 1 for x in idx)
            if one[mode - 1] != t[mode - 1]:
                continue
            a = unfold_col(one, dims, mode) - 1
            total += zhat[idx] ** 2 * _proj_entry(v, a, col) ** 2
    return total


def joint_cov(zhat, vhats, triples):
    n = len(triples)
    s = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            s[x, y] = sum(overlap_term(zhat, vhats[m - 1], m, triples[x], triples[y])
                          for m in (1, 2, 3))
    return s


# --- special functions -----------------------------------------------------

def lower_gamma_reg(a, x):
    """Regularised lower incomplete gamma ``P(a, x)`` by its power series."""
    if x <= 0:
        return 0.0
    term = 1.0 / a
    total = term
    n = 0
    while abs(term) > 1e-17 * abs(total):
        n += 1
        term *= x / (a + n)
        total += term
        if n > 100000:
            break
    return math.exp(a * math.log(x) - x - math.lgamma(a)) * total


def chi2_cdf(df, x):
    return lower_gamma_reg(df / 2.0, x / 2.0)


def erf_series(x):
    total, term, n = 0.0, x, 0
    while abs(term) > 1e-18:
        total += term / (2 * n + 1)
        n += 1
        term *= -x * x / n
    return 2.0 / math.sqrt(math.pi) * total


def normal_cdf(z):
    return 0.5 * (1.0 + erf_series(z / math.sqrt(2.0)))


def bisect(f, target, lo, hi, tol=1e-13):
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def chi2_quantile(df, prob):
    return bisect(lambda x: chi2_cdf(df, x), prob, 0.0, 200.0)


def normal_quantile(prob):
    return bisect(normal_cdf, prob, -10.0, 10.0)


def random_orthonormal(rng, p, r):
    q, _ = np.linalg.qr(rng.standard_normal((p, r)))
    return q


def random_tucker(rng, dims, ranks):
    us = tuple(random_orthonormal(rng, p, r) for p, r in zip(dims, ranks))
    return rng.standard_normal(ranks), us


def well_conditioned_tucker(rng, p, r, kappa_max=3.0, mu_max=3.0):
    """Tucker tensor with orthonormal factors, condition number and incoherence bounded.

    The core is ``diag(s) x`` random rotations per mode, so every unfolding
    has singular values ``s``.
    """
    s = np.linspace(kappa_max, 1.0, r) if r > 1 else np.ones(1)
    core = np.zeros((r, r, r))
    for a in range(r):
        core[a, a, a] = s[a]
    for k in range(3):
        q = random_orthonormal(rng, r, r)
        core = np.moveaxis(np.tensordot(q, core, axes=(1, k)), 0, k)
    for _ in range(1000):
        us = tuple(random_orthonormal(rng, p, r) for _ in range(3))
        mu = max(np.sqrt(p / r) * np.max(np.linalg.norm(u, axis=1)) for u in us)
        if mu <= mu_max:
            break
    else:
        raise RuntimeError("incoherence bound not reached")
    t = np.einsum("abc,ia,jb,kc->ijk", core, *us)
    return t, core, us
