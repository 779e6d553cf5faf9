"""Mixed-membership tensor generators and Monte-Carlo coverage/power experiments.

Randomness comes from counter-based Philox streams keyed by
``numpy.random.SeedSequence`` spawn keys, so every quantity is a pure
function of the config seed and its role:

* the signal (core and memberships) depends on ``(seed, p)``,
* the noise standard deviations on ``(seed, p, sigma)``,
* the noise of replicate ``b`` on ``(seed, b)`` only.

Replicates can therefore run in any order and on any number of workers
and still aggregate to the same report.
"""
import csv
import io
import json
import logging
import math
import os
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DegeneracyError, DimensionError
from .hooi import HooiConfig, hooi
from .inference import (
    build_context,
    entry_ci,
    joint_region,
    loading_region,
    membership_test,
    pair_difference_ci,
)
from .linalg import align
from .tensor import TuckerFactors, matricize, multi_mode_product

log = logging.getLogger(__name__)

EXPERIMENTS = ("loading_coverage", "entry_coverage", "pair_coverage",
               "membership_power", "joint_coverage")
NOISES = ("gaussian_hetero", "bernoulli")
BERNOULLI_CORE_VALUES = (0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 0.9)
MEMBERSHIP_BASE_ROW = (0.2, 0.6, 0.2)

_SIGNAL, _SD, _NOISE = 1, 2, 3
_MAX_REDRAWS = 20
_CHUNK = 20


def _float_key(x):
    return struct.unpack("<Q", struct.pack("<d", float(x)))[0]


def make_rng(seed, *key):
    """Philox generator for ``seed`` and a tuple of non-negative integer keys."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def dirichlet_ones(rng, n, r):
    """``n`` rows of Dirichlet(1, ..., 1) as normalised exponentials."""
    e = rng.standard_exponential((n, r))
    return e / e.sum(axis=1, keepdims=True)


def bernoulli_core(r, rho):
    """``r x r x r`` core recycling the fixed value list in lexicographic order, times ``rho``."""
    vals = np.resize(np.array(BERNOULLI_CORE_VALUES), r ** 3)
    return rho * vals.reshape(r, r, r)


@dataclass(frozen=True)
class Signal:
    tensor: np.ndarray
    truth: TuckerFactors
    memberships: tuple
    core: np.ndarray
    scale: float


def gen_signal(p, r, seed, pure_nodes=False, row_overrides=None, core=None, rescale=True):
    """Draw ``T = S x1 Pi1 x2 Pi2 x3 Pi3`` with Dirichlet(1) memberships.

    ``S`` is standard Gaussian unless ``core`` is given.  With
    ``pure_nodes`` the last ``r`` rows of every ``Pi_k`` become the identity.
    ``row_overrides`` maps 1-based row numbers of ``Pi_1`` to replacement
    rows.  With ``rescale`` the tensor is divided by its smallest nonzero
    unfolding singular value so that it equals one.  A draw whose unfoldings
    lose rank is redrawn from the next attempt key.
    """
    p, r = int(p), int(r)
    if not 1 <= r <= p:
        raise DimensionError(f"need 1 <= r <= p, got r={r}, p={p}")
    for attempt in range(_MAX_REDRAWS):
        rngs = [make_rng(seed, _SIGNAL, p, r, attempt, part) for part in range(4)]
        s = rngs[0].standard_normal((r, r, r)) if core is None else np.asarray(core, dtype=float)
        pis = [dirichlet_ones(g, p, r) for g in rngs[1:]]
        if pure_nodes:
            for pi in pis:
                pi[p - r:] = np.eye(r)
        for row, values in (row_overrides or {}).items():
            values = np.asarray(values, dtype=float)
            if values.shape != (r,):
                raise DimensionError(f"override row must have length {r}")
            pis[0][int(row) - 1] = values
        # T = G x1 Q1 x2 Q2 x3 Q3 with Pi_k = Q_k R_k and G = S x1 R1 x2 R2 x3 R3, so
        # the unfolding spectra of T are those of the small core G
        qs, rs = zip(*(np.linalg.qr(pi) for pi in pis))
        g = multi_mode_product(s, rs)
        svds = [np.linalg.svd(matricize(g, k)) for k in (1, 2, 3)]
        lam_min = min(sv[1][r - 1] for sv in svds)
        lam_max = max(sv[1][0] for sv in svds)
        if lam_max > 0.0 and lam_min > 1e-12 * lam_max:
            break
        log.warning("degenerate signal draw (attempt %d); redrawing", attempt)
    else:
        raise DegeneracyError("could not draw a full-rank signal", code="degenerate_signal")
    scale = 1.0 / lam_min if rescale else 1.0
    t = multi_mode_product(s, pis) * scale
    ws = [sv[0] for sv in svds]
    us = tuple(q @ w for q, w in zip(qs, ws))
    truth = TuckerFactors(multi_mode_product(g, ws, transpose=True) * scale, us)
    return Signal(t, truth, tuple(pis), s * scale, scale)


def noise_sds(dims, sigma, seed):
    """Per-entry standard deviations ``U(0, sigma)``; fixed for a given config."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    rng = make_rng(seed, _SD, *dims, _float_key(sigma))
    return sigma * rng.random(tuple(dims))


def gen_noise_gaussian(dims, sigma, seed, replicate=0):
    """Heteroskedastic Gaussian noise and its standard deviations.

    The standard deviations depend only on ``(seed, dims, sigma)``; the
    noise draw additionally on ``replicate``.
    """
    sds = noise_sds(dims, sigma, seed)
    z = make_rng(seed, _NOISE, replicate).standard_normal(tuple(dims))
    return z * sds, sds


def gen_bernoulli_observation(t, seed, replicate=0):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("Bernoulli means must lie in [0, 1]")
    u = make_rng(seed, _NOISE, replicate).random(t.shape)
    return (u < t).astype(float)


def _as_list(x):
    if x is None:
        return None
    return [x] if np.isscalar(x) else list(x)


def _triple(x, name):
    t = tuple(int(v) for v in x)
    if len(t) != 3 or min(t) < 1:
        raise ValueError(f"{name} must be a 1-based index triple, got {x!r}")
    return t


@dataclass
class SimConfig:
    """One Monte-Carlo experiment.

    ``p``, ``gamma`` and ``rho`` may each be a single value or a list; the
    report has one cell per combination (and per ``epsilons`` entry for
    ``membership_power``).  Gaussian noise uses ``lambda/sigma = p**gamma``
    with ``lambda = 1``; Bernoulli noise uses ``rho`` as the core scale.
    """

    p: object = 100
    r: int = 4
    gamma: object = None
    rho: object = None
    replicates: int = 500
    alpha: float = 0.05
    seed: int = 0
    experiment: str = "entry_coverage"
    noise: str = "gaussian_hetero"
    epsilons: list = field(default_factory=lambda: [0.0, 0.05, 0.1])
    entry: tuple = (1, 1, 1)
    pair: tuple = ((1, 1, 1), (1, 2, 2))
    joint: tuple = ((1, 1, 1), (1, 1, 2))
    loading: tuple = (1, 1)
    membership: tuple = (1, 1, 2)
    pair_variance: str = "difference"
    pure_nodes: object = None
    max_iters: int = 50
    tol: float = 1e-8

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.noise not in NOISES:
            raise ValueError(f"noise must be one of {NOISES}, got {self.noise!r}")
        if not isinstance(self.replicates, int) or self.replicates < 1:
            raise ValueError("replicates must be a positive integer")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.r < 1 or any(int(p) < self.r for p in self.ps):
            raise ValueError("need 1 <= r <= p")
        if self.noise == "gaussian_hetero":
            if not self.gamma_list or any(g <= 0 for g in self.gamma_list):
                raise ValueError("gaussian_hetero noise needs gamma > 0")
        else:
            if not self.rho_list or any(not 0 < x <= 1 for x in self.rho_list):
                raise ValueError("bernoulli noise needs rho in (0, 1]")
        if self.pair_variance not in ("difference", "printed"):
            raise ValueError("pair_variance must be 'difference' or 'printed'")
        self.entry = _triple(self.entry, "entry")
        self.pair = tuple(_triple(t, "pair") for t in self.pair)
        if len(self.pair) != 2 or self.pair[0] == self.pair[1]:
            raise ValueError("pair must hold two distinct triples")
        self.joint = tuple(_triple(t, "joint") for t in self.joint)
        if not self.joint or len(set(self.joint)) != len(self.joint):
            raise ValueError("joint must be a non-empty list of distinct triples")
        self.loading = tuple(int(x) for x in self.loading)
        self.membership = tuple(int(x) for x in self.membership)
        if len(self.loading) != 2 or len(self.membership) != 3:
            raise ValueError("loading is (mode, row); membership is (mode, row, row)")
        if self.experiment == "membership_power":
            if self.r != len(MEMBERSHIP_BASE_ROW):
                raise ValueError("membership_power uses r = 3 membership rows")
            if not self.epsilons or any(not 0 <= e <= 0.4 for e in self.epsilons):
                raise ValueError("epsilons must be a non-empty list in [0, 0.4]")
        for p in self.ps:
            for t in (self.entry, *self.pair, *self.joint):
                if max(t) > p:
                    raise ValueError(f"index {t} out of range for p={p}")

    @property
    def ps(self):
        return [int(p) for p in _as_list(self.p)]

    @property
    def gamma_list(self):
        return [float(g) for g in (_as_list(self.gamma) or [])]

    @property
    def rho_list(self):
        return [float(x) for x in (_as_list(self.rho) or [])]

    def cells(self):
        levels = self.gamma_list if self.noise == "gaussian_hetero" else self.rho_list
        eps = self.epsilons if self.experiment == "membership_power" else [None]
        return [(p, lv, e) for p in self.ps for lv in levels for e in eps]


@dataclass
class CellResult:
    p: int
    level: float
    epsilon: float
    mean: float
    std: float
    replicates: int
    degenerate_count: int
    outcomes: list = field(default_factory=list, repr=False)
    points: list = field(default_factory=list, repr=False)


@dataclass
class SimReport:
    config: SimConfig
    cells: list
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "schema": 1,
            "config": self.config.to_dict(),
            "level_name": "gamma" if self.config.noise == "gaussian_hetero" else "rho",
            "cells": [
                {"p": c.p, "gamma_or_rho": c.level, "epsilon": c.epsilon, "mean": c.mean,
                 "std": c.std, "replicates": c.replicates,
                 "degenerate_count": c.degenerate_count}
                for c in self.cells
            ],
            "wall_time": self.wall_time,
        }

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        with_eps = self.config.experiment == "membership_power"
        header = ["p", "gamma_or_rho"] + (["epsilon"] if with_eps else [])
        w.writerow(header + ["mean", "std", "replicates", "degenerate_count"])
        for c in self.cells:
            row = [c.p, repr(c.level)] + ([repr(c.epsilon)] if with_eps else [])
            w.writerow(row + [repr(c.mean), repr(c.std), c.replicates, c.degenerate_count])
        return buf.getvalue()

    def points_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = len(self.config.joint)
        w.writerow(["p", "gamma_or_rho", "replicate"] + [f"x{i + 1}" for i in range(dim)])
        for c in self.cells:
            for rep, pt in c.points:
                w.writerow([c.p, repr(c.level), rep] + [repr(x) for x in pt])
        return buf.getvalue()

    def write(self, out_dir, stem="report"):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"{stem}.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        with open(os.path.join(out_dir, f"{stem}.csv"), "w", newline="") as fh:
            fh.write(self.to_csv())
        if self.config.experiment == "joint_coverage":
            with open(os.path.join(out_dir, f"{stem}_points.csv"), "w", newline="") as fh:
                fh.write(self.points_csv())


def binomial_std(mean, n):
    return math.sqrt(mean * (1.0 - mean) / n) if n > 0 else float("nan")


def _cfg_key(cfg):
    return json.dumps(cfg.to_dict(), sort_keys=True)


@lru_cache(maxsize=8)
def _cell_setup(cfg_json, p, level, eps):
    cfg = SimConfig.from_dict(json.loads(cfg_json))
    pure = cfg.pure_nodes if cfg.pure_nodes is not None else cfg.experiment == "membership_power"
    overrides = None
    if cfg.experiment == "membership_power":
        a, b, c = MEMBERSHIP_BASE_ROW
        _, i1, i2 = cfg.membership
        overrides = {i1: (a, b, c), i2: (a, b - eps / 2.0, c + eps / 2.0)}
    if cfg.noise == "gaussian_hetero":
        sig = gen_signal(p, cfg.r, cfg.seed, pure_nodes=pure, row_overrides=overrides)
        sds = noise_sds(sig.tensor.shape, p ** (-level), cfg.seed)
    else:
        sig = gen_signal(p, cfg.r, cfg.seed, pure_nodes=pure, row_overrides=overrides,
                         core=bernoulli_core(cfg.r, level), rescale=False)
        sds = None
    return cfg, sig, sds


def _observe(cfg, sig, sds, rep):
    if sds is not None:
        z = make_rng(cfg.seed, _NOISE, rep).standard_normal(sig.tensor.shape)
        return sig.tensor + z * sds
    return gen_bernoulli_observation(sig.tensor, cfg.seed, rep)


def _inv_sqrt(s):
    w, v = np.linalg.eigh(s)
    return (v / np.sqrt(w)) @ v.T


def _evaluate(cfg, sig, ctx):
    """Return ``(outcome, point)`` for one fitted replicate."""
    t = sig.tensor
    a = cfg.alpha
    if cfg.experiment == "entry_coverage":
        ci = entry_ci(ctx, *cfg.entry, a)
        return ci.contains(t[tuple(i - 1 for i in cfg.entry)]), None
    if cfg.experiment == "pair_coverage":
        t1, t2 = cfg.pair
        ci = pair_difference_ci(ctx, t1, t2, a, printed=cfg.pair_variance == "printed")
        truth = t[tuple(i - 1 for i in t1)] - t[tuple(i - 1 for i in t2)]
        return ci.contains(truth), None
    if cfg.experiment == "loading_coverage":
        mode, row = cfg.loading
        region = loading_region(ctx, mode, row, a)
        u = sig.truth.factors[mode - 1]
        w = align(ctx.fit.U[mode - 1], u)
        return region.contains((u @ w)[row - 1]), None
    if cfg.experiment == "joint_coverage":
        region = joint_region(ctx, cfg.joint, a)
        truth = np.array([t[tuple(i - 1 for i in tr)] for tr in cfg.joint])
        point = _inv_sqrt(region.shape) @ (region.center - truth)
        return region.contains(truth), point.tolist()
    mode, i1, i2 = cfg.membership
    return membership_test(ctx, mode, i1, i2, a).reject, None


def _run_chunk(cfg_json, cell, reps):
    p, level, eps = cell
    with threadpool_limits(limits=1):
        cfg, sig, sds = _cell_setup(cfg_json, p, level, eps)
        hcfg = HooiConfig((cfg.r,) * 3, max_iters=cfg.max_iters, tol=cfg.tol)
        out = []
        for rep in reps:
            ttilde = _observe(cfg, sig, sds, rep)
            try:
                ctx = build_context(ttilde, hooi(ttilde, hcfg))
                outcome, point = _evaluate(cfg, sig, ctx)
            except DegeneracyError as exc:
                log.info("replicate %d degenerate: %s", rep, exc)
                out.append((rep, None, None))
                continue
            out.append((rep, bool(outcome), point))
    return out


def resolve_threads(threads=None):
    if threads is None:
        threads = int(os.environ.get("TENSOR_INFER_THREADS", "1"))
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


def run_experiment(cfg, threads=None):
    """Run every cell of ``cfg`` and aggregate coverage or rejection rates."""
    cfg.validate()
    threads = resolve_threads(threads)
    key = _cfg_key(cfg)
    start = time.perf_counter()
    jobs = []
    for cell in cfg.cells():
        for lo in range(0, cfg.replicates, _CHUNK):
            jobs.append((cell, list(range(lo, min(lo + _CHUNK, cfg.replicates)))))
    if threads == 1:
        results = [_run_chunk(key, cell, reps) for cell, reps in jobs]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, key, cell, reps) for cell, reps in jobs]
            results = [f.result() for f in futures]

    by_cell = {}
    for (cell, _), res in zip(jobs, results):
        by_cell.setdefault(cell, []).extend(res)
    cells = []
    for cell in cfg.cells():
        res = sorted(by_cell[cell], key=lambda x: x[0])
        ok = [o for _, o, _ in res if o is not None]
        degenerate = len(res) - len(ok)
        n = len(ok)
        mean = sum(ok) / n if n else float("nan")
        points = [(rep, pt) for rep, o, pt in res if pt is not None]
        cells.append(CellResult(cell[0], cell[1], cell[2], mean, binomial_std(mean, n), n,
                                degenerate, outcomes=[o for _, o, _ in res], points=points))
        log.info("cell p=%s level=%s eps=%s: mean=%.4f (n=%d, degenerate=%d)",
                 cell[0], cell[1], cell[2], mean, n, degenerate)
    return SimReport(cfg, cells, time.perf_counter() - start)
