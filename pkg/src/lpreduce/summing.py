"""Lower bounds for the k-vector p-summing norm of finite-rank operators.

``pi_p^(k)(u) = sup (sum_i ||u x_i||^p)^(1/p)`` over systems ``x_1..x_k`` of
weak-l_p norm at most one.  The ratio of the two sides is scale invariant, so
the optimizer maximizes the ratio and rescales the best system at the end.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .measure import (
    DomainNorm,
    EuclideanBall,
    InvalidInput,
    SupOnPoints,
    VectorSystem,
    WeightedSpace,
    _check_p,
    _lp_count,
    lp_norms,
    sphere_ascent_all,
    weak_lp,
)

DEFAULT_RESTARTS = 32
DEFAULT_STEPS = 2000
SPREAD_FLAG = 0.05
SMOOTHING_LEVELS = (2.0, 8.0, 32.0, 128.0, 512.0, 2048.0)
CUTTING_ROUNDS = 12
CERTIFY_STARTS = 64


def thread_cap() -> int:
    try:
        return max(1, int(os.environ.get("LPREDUCE_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class FiniteRankOperator:
    """``x -> matrix @ x`` from a normed domain into L_p(target)."""

    matrix: np.ndarray
    domain: DomainNorm
    target: WeightedSpace
    p: float

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.ndim == 1:
            m = m[:, None]
        if m.shape != (self.target.size, self.domain.dimension):
            raise InvalidInput(
                f"matrix shape {m.shape} does not match target size "
                f"{self.target.size} and domain dimension {self.domain.dimension}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "p", _check_p(self.p))

    @property
    def dimension(self) -> int:
        return self.domain.dimension

    def image_norms(self, X) -> np.ndarray:
        """Target norms ``||u x_i||`` for the rows of ``X``."""
        return lp_norms(self.matrix @ np.atleast_2d(X).T, self.target, self.p)

    def scaled(self, c: float) -> "FiniteRankOperator":
        return FiniteRankOperator(c * self.matrix, self.domain, self.target, self.p)


def hilbert_operator(A) -> FiniteRankOperator:
    """The operator ``l_2^d -> l_2^m`` given by the ``m x d`` matrix ``A``.

    l_2^m is represented isometrically as L_2 of the uniform measure on m atoms.
    """
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    m, d = A.shape
    return FiniteRankOperator(math.sqrt(m) * A, EuclideanBall(d), WeightedSpace.uniform(m), 2.0)


def identity_operator(n: int) -> FiniteRankOperator:
    """The identity of l_2^n."""
    return hilbert_operator(np.eye(n))


@dataclass(frozen=True, eq=False)
class SummingEstimate:
    value: float
    k: int
    witnesses: VectorSystem
    restarts_used: int
    constraint_residual: float
    spread: float = 0.0
    exact_constraint: bool = True

    @property
    def flagged(self) -> bool:
        return self.spread > SPREAD_FLAG


# -- objective pieces -------------------------------------------------------------

def _strong_sum(u: FiniteRankOperator, X: np.ndarray, p: float):
    """``S = sum_i ||u x_i||_t^p`` and ``dS/dX`` (t is the target exponent)."""
    V = u.matrix @ X.T
    t = u.p
    w = u.target.weights
    norms = lp_norms(V, u.target, t)
    S = float(np.sum(norms ** p))
    grad_V = np.zeros_like(V)
    live = norms > 0
    if np.any(live):
        Vl = V[:, live]
        nl = norms[live]
        if math.isinf(t):
            j = np.argmax(np.abs(Vl), axis=0)
            cols = np.arange(Vl.shape[1])
            g = np.zeros_like(Vl)
            g[j, cols] = np.sign(Vl[j, cols]) * nl ** (p - 1)
        else:
            g = w[:, None] * (np.abs(Vl) / nl) ** (t - 1) * np.sign(Vl) * nl ** (p - 1)
        grad_V[:, live] = g
    return S, p * (grad_V.T @ u.matrix)


def _dual_powers(X: np.ndarray, D: np.ndarray, p: float):
    Z = X @ D.T  # k x J
    A = np.abs(Z)
    P = (A ** p).sum(axis=0)
    return Z, A, P


def _log_ratio(u, X, D, p, r):
    """Smoothed objective ``log S / p - log W_r`` and its gradient, where
    ``W_r^p = (sum_j P_j^r)^(1/r) >= max_j P_j`` over the dual set ``D``."""
    S, dS = _strong_sum(u, X, p)
    Z, A, P = _dual_powers(X, D, p)
    if S <= 0 or P.max() <= 0:
        return -math.inf, np.zeros_like(X)
    logP = np.log(np.where(P > 0, P, 1e-300))
    rl = r * logP
    top = rl.max()
    lse = top + math.log(np.exp(rl - top).sum())
    val = math.log(S) / p - lse / (r * p)
    pi = np.exp(r * logP - lse)
    coef = np.where(P > 0, pi / np.where(P > 0, P, 1.0), 0.0)
    dW = ((A ** (p - 1)) * np.sign(Z) * coef[None, :]) @ D
    grad = dS / (p * S) - dW
    return val, grad


def _ascent(u, X, D, p, steps, levels=SMOOTHING_LEVELS):
    """Maximize the smoothed ratio by L-BFGS, sharpening the smoothing level by level."""
    shape = X.shape
    x = (X / np.linalg.norm(X)).ravel()
    per_level = max(1, steps // len(levels))
    for r in levels:
        def neg(z):
            Z = z.reshape(shape)
            nz = np.linalg.norm(Z)
            val, g = _log_ratio(u, Z / nz, D, p, r)
            if not math.isfinite(val):
                return 1e300, np.zeros_like(z)
            g = g - np.sum(g * Z / nz) * Z / nz
            return -val, -(g / nz).ravel()

        res = minimize(neg, x, jac=True, method="L-BFGS-B",
                       options={"maxiter": per_level, "gtol": 1e-12, "ftol": 1e-15})
        if np.all(np.isfinite(res.x)) and res.fun <= neg(x)[0]:
            x = res.x / np.linalg.norm(res.x)
    return x.reshape(shape)


def _power_method(u, X, steps):
    """Generalized power iteration for Euclidean domains at p = 2.

    ``X <- argmax <grad S(X), Y>`` over ``||Y||_op <= 1``, i.e. the polar factor
    of the gradient; monotone because ``S`` is convex.
    """
    X = X / np.linalg.svd(X, compute_uv=False)[0]
    S, _ = _strong_sum(u, X, 2.0)
    for _ in range(steps):
        _, G = _strong_sum(u, X, 2.0)
        if not np.any(G):
            break
        Uu, _, Vt = np.linalg.svd(G, full_matrices=False)
        Xn = Uu @ Vt
        Sn, _ = _strong_sum(u, Xn, 2.0)
        if Sn <= S * (1 + 1e-15):
            if Sn >= S:
                X = Xn
            break
        X, S = Xn, Sn
    return X


# -- evaluation -------------------------------------------------------------------

def _evaluate(u, X, p, seed, extra_starts=None):
    """Exact ratio of ``X`` up to weak-norm accuracy; returns (value, weak, functional)."""
    norms = u.image_norms(X)
    S = float(np.sum(norms ** p))
    wk = weak_lp(X, u.domain, p, seed=seed, extra_starts=extra_starts)
    if wk.value <= 0:
        return 0.0, wk
    return S ** (1.0 / p) / wk.value, wk


def _certify(u, X, p, seed, D0, extra=None):
    """Weak norm of ``X`` with ascent started from the best dense-grid directions."""
    if isinstance(u.domain, SupOnPoints) or p == 2:
        return weak_lp(X, u.domain, p, seed=seed)
    top = np.argsort(-_lp_count(X @ D0.T, p, axis=0), kind="stable")[:CERTIFY_STARTS]
    starts = D0[top] if extra is None else np.vstack([np.atleast_2d(extra), D0[top]])
    return weak_lp(X, u.domain, p, seed=seed, restarts=CERTIFY_STARTS, extra_starts=starts)


def _initial_dual_set(u, p, rng):
    dom = u.domain
    if isinstance(dom, SupOnPoints):
        return dom.embedding
    d = dom.dimension
    D = rng.standard_normal((min(2000, max(32, 200 * d * d)), d))
    D = np.vstack([np.eye(d), D / np.linalg.norm(D, axis=1, keepdims=True)])
    return D


def _pad(prev: np.ndarray, k: int, rng, split: bool):
    kp, d = prev.shape
    if kp >= k:
        return prev[:k].copy()
    if not split:
        return np.vstack([prev, np.zeros((k - kp, d))])
    X = prev.copy()
    # duplicate the largest rows, then perturb so the copies can separate
    while X.shape[0] < k:
        order = np.argsort(-np.linalg.norm(X, axis=1), kind="stable")
        take = order[: min(k - X.shape[0], X.shape[0])]
        X = np.vstack([X, X[take]])
    noise = rng.standard_normal(X.shape) * 1e-3 * np.linalg.norm(X) / math.sqrt(X.size)
    return X + noise


def _optimize_start(u, X0, p, steps, D0, seed):
    rng = np.random.default_rng(seed)
    if isinstance(u.domain, EuclideanBall) and p == 2:
        X = _power_method(u, X0, steps)
        val, wk = _evaluate(u, X, p, seed)
        return val, X, wk
    D = D0
    X = _ascent(u, X0, D, p, steps)
    best = (-math.inf, X0, None)
    rounds = CUTTING_ROUNDS if isinstance(u.domain, EuclideanBall) else 1
    for r in range(rounds):
        if r:
            X = _ascent(u, X, D, p, steps // 4, levels=SMOOTHING_LEVELS[-3:])
        dual_vals = _lp_count(X @ D.T, p, axis=0)
        top = np.argsort(-dual_vals, kind="stable")[:8]
        val, wk = _evaluate(u, X, p, int(rng.integers(2**63)), extra_starts=D[top])
        if wk.exact:
            best = (val, X, wk)
            break
        if r and val <= best[0] * (1 + 1e-6):
            best = max(best, (val, X, wk), key=lambda b: b[0])
            break
        if val > best[0]:
            best = (val, X, wk)
        cuts = _new_cuts(X, p, D[top], float(dual_vals.max()), rng)
        if not len(cuts):
            break
        D = np.vstack([D, cuts])
    return best


def _new_cuts(X, p, starts, current, rng, count=8):
    """Local maximizers of ``||X a||_p`` on the sphere that beat the dual set."""
    d = X.shape[1]
    cand = np.vstack([starts, rng.standard_normal((4 * count, d))])
    vals, A = sphere_ascent_all(X, p, cand)
    cuts = []
    for j in np.argsort(-vals, kind="stable"):
        a = A[:, j]
        if vals[j] <= current * (1 + 1e-7) or len(cuts) >= count:
            break
        if all(abs(a @ c) < 1 - 1e-6 for c in cuts):
            cuts.append(a)
    return np.array(cuts)


def pi_pk_lower(u: FiniteRankOperator, k: int, p: float, restarts: int = DEFAULT_RESTARTS,
                seed: int = 0, steps: int = DEFAULT_STEPS, warm_start=None) -> SummingEstimate:
    """Multi-start maximization of the k-vector p-summing ratio.

    The result is attained by the returned witnesses, hence a lower bound on
    ``pi_p^(k)(u)`` whenever the weak norm is evaluated exactly (sup-on-points
    domains, Euclidean domains at p = 2 or inf).  ``warm_start`` rows (fewer
    than ``k``) are padded with zero vectors, so the value never falls below
    the value of the warm start.
    """
    if k < 1:
        raise InvalidInput("k must be positive")
    p = _check_p(p)
    if math.isinf(p):
        raise InvalidInput("the summing exponent must be finite")
    d = u.dimension
    root = np.random.SeedSequence(seed)
    rng = np.random.default_rng(root.spawn(1)[0])
    D0 = _initial_dual_set(u, p, rng)

    starts = []
    if warm_start is not None:
        prev = np.atleast_2d(np.asarray(warm_start, dtype=np.float64))
        starts.append(("zero_pad", _pad(prev, k, rng, split=False)))
        if prev.shape[0] < k:
            starts.append(("split", _pad(prev, k, rng, split=True)))
    for _ in range(restarts):
        starts.append(("random", rng.standard_normal((k, d))))
    seeds = [int(s.generate_state(1)[0]) for s in root.spawn(len(starts) + 1)[1:]]

    def run(job):
        (kind, X0), s = job
        if kind == "zero_pad":
            val, wk = _evaluate(u, X0, p, s)
            return val, X0, wk
        return _optimize_start(u, X0, p, steps, D0, s)

    jobs = list(zip(starts, seeds))
    with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
        results = list(pool.map(run, jobs))

    random_vals = [r[0] for (kind, _), r in zip(starts, results) if kind == "random"]
    best_val, best_X, best_wk = max(results, key=lambda r: r[0])
    W = best_wk.value
    witnesses = best_X / W if W > 0 else best_X
    check = _certify(u, witnesses, p, seeds[-1], D0, best_wk.functional)
    if check.value > 1.0:
        witnesses = witnesses / check.value
        check = _certify(u, witnesses, p, seeds[-1], D0, check.functional)
    value = float(np.sum(u.image_norms(witnesses) ** p) ** (1.0 / p))
    spread = 0.0
    if random_vals and best_val > 0:
        spread = float((best_val - np.median(random_vals)) / best_val)
    return SummingEstimate(
        value=value, k=k, witnesses=VectorSystem(witnesses), restarts_used=len(results),
        constraint_residual=abs(check.value - 1.0), spread=spread,
        exact_constraint=check.exact)


def hilbert_pi2_exact(u: FiniteRankOperator) -> float:
    """Hilbert-Schmidt norm of ``u`` as a map into L_2(target).

    Equals pi_2(u) for a Euclidean domain when the target exponent is 2.
    """
    if not isinstance(u.domain, EuclideanBall):
        raise InvalidInput("hilbert_pi2_exact needs a Euclidean domain")
    M = np.sqrt(u.target.weights)[:, None] * u.matrix
    return float(np.sqrt(np.sum(np.linalg.svd(M, compute_uv=False) ** 2)))


# -- brute force oracle -----------------------------------------------------------

def _sphere_grid(d: int, resolution: int) -> np.ndarray:
    """Half-sphere grid (antipodal points identified) in dimension d <= 3."""
    if d == 1:
        return np.ones((1, 1))
    if d == 2:
        t = np.pi * np.arange(resolution) / resolution
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    pts = [np.array([0.0, 0.0, 1.0])]
    for i in range(1, resolution + 1):
        th = 0.5 * np.pi * i / resolution
        ring = max(1, int(round(2 * resolution * np.sin(th))))
        for j in range(ring):
            ph = (np.pi if i == resolution else 2 * np.pi) * j / ring
            pts.append(np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)]))
    return np.array(pts)


def _dual_grid(u: FiniteRankOperator) -> np.ndarray:
    if isinstance(u.domain, SupOnPoints):
        return u.domain.embedding
    d = u.dimension
    return _sphere_grid(d, {1: 1, 2: 3600, 3: 160}[d])


def pi_pk_bruteforce(u: FiniteRankOperator, k: int, p: float, resolution: int = 24,
                     refine: int = 2000, seed: int = 0) -> float:
    """Grid search for pi_p^(k) on tiny instances (domain dimension and k <= 3).

    Every vector is a grid direction times a radius from a grid in (0, 1]; the
    weak norm is a maximum over a fixed fine grid of dual directions (exact
    point evaluations for sup-on-points domains).  The best grid point is then
    improved by random local perturbations.
    """
    d = u.dimension
    if d > 3 or k > 3:
        raise InvalidInput("brute force is limited to dimension <= 3 and k <= 3")
    p = _check_p(p)
    rng = np.random.default_rng(seed)
    dirs = _sphere_grid(d, resolution)
    radii = np.linspace(0.0, 1.0, max(2, resolution // 2) + 1)[1:]
    dual = _dual_grid(u)
    T = np.abs(dirs @ dual.T) ** p  # G x J
    strong = u.image_norms(dirs) ** p

    def ratio(X):
        S = float(np.sum(u.image_norms(X) ** p))
        W = float(np.max((np.abs(X @ dual.T) ** p).sum(axis=0)))
        return (S / W) ** (1.0 / p) if W > 0 else 0.0

    # first vector has radius 1 by scale invariance
    rad = np.array([np.array((1.0,) + r) for r in itertools.product(radii, repeat=k - 1)])
    rad_p = rad ** p  # R x k
    best, best_X = -1.0, None
    for combo in itertools.combinations_with_replacement(range(len(dirs)), k):
        idx = list(combo)
        for first in range(k):
            # rotate which vector carries radius 1
            order = idx[first:] + idx[:first]
            S = rad_p @ strong[order]
            W = (rad_p @ T[order]).max(axis=1)
            vals = S / W
            j = int(np.argmax(vals))
            if vals[j] > best:
                best = float(vals[j])
                best_X = dirs[order] * rad[j][:, None] ** 1.0
    best = best ** (1.0 / p)
    scale = 0.1
    for _ in range(refine):
        cand = best_X + scale * rng.standard_normal(best_X.shape)
        val = ratio(cand)
        if val > best:
            best, best_X = val, cand
        else:
            scale = max(scale * 0.995, 1e-4)
    return best


# -- curves -----------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    k: int
    value: float
    restarts: int
    spread: float


def saturation_curve(u: FiniteRankOperator, ks, p: float, seed: int = 0,
                     restarts: int = DEFAULT_RESTARTS, steps: int = DEFAULT_STEPS) -> list[CurvePoint]:
    """``pi_p^(k)`` lower bounds for increasing ``ks``, each warm-started from the
    previous witnesses."""
    ks = [int(k) for k in ks]
    if any(b <= a for a, b in zip(ks, ks[1:])) or not ks or ks[0] < 1:
        raise InvalidInput("ks must be a strictly increasing sequence of positive integers")
    out = []
    warm = None
    for i, k in enumerate(ks):
        est = pi_pk_lower(u, k, p, restarts=restarts, seed=seed + 7919 * i, steps=steps,
                          warm_start=warm)
        warm = est.witnesses.vectors
        out.append(CurvePoint(k, est.value, est.restarts_used, est.spread))
    return out
