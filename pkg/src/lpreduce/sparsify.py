"""Atom splitting, random sign halving, and the iterated reduction of L_p spaces.

One reduction stage takes a subspace of L_p(mu) on N atoms and

1. moves it to the blended Lewis density ``alpha = (beta + 1) / 2``,
2. splits every atom heavier than 4/N into equal pieces of mass in [2/N, 4/N],
3. draws random sign partitions until one half carries at most ``theta_max``
   of the p-th power norm of every element of the subspace, and
4. keeps that half, renormalized to a probability space.

Coefficient vectors are shared across stages, so the same ``c`` describes a
function before and after any number of stages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lewis import DEFAULT_MAX_ITER, lewis_density, blend_density
from .measure import InvalidInput, Subspace, WeightedSpace, change_density, lp_norms

PART_FRACTION = 9 / 16
SIGN_RETRY_CAP = 1000
DEFAULT_PROBES = 256
REFINE_TOP = 8
REFINE_STEPS = 60
STEP_FLOOR = 1e-9


class HalvingError(RuntimeError):
    """No acceptable partition was found within the retry budget."""

    def __init__(self, message, best_theta=math.inf, trace=None):
        super().__init__(message)
        self.best_theta = best_theta
        self.trace = trace


@dataclass(frozen=True, eq=False)
class SplitResult:
    space: WeightedSpace
    sigma: list
    embed: np.ndarray

    @property
    def size(self) -> int:
        return self.space.size


def split_atoms(sub: Subspace) -> tuple[SplitResult, Subspace]:
    """Replace each atom of mass m > 4/N by ceil(m N / 4) equal pieces.

    The returned subspace copies function values onto the pieces, which
    preserves every L_r norm.
    """
    w = sub.space.weights
    N = w.size
    counts = np.ones(N, dtype=np.int64)
    heavy = w > 4.0 / N
    counts[heavy] = np.ceil(w[heavy] * N / 4.0).astype(np.int64)
    embed = np.repeat(np.arange(N), counts)
    masses = np.repeat(w / counts, counts)
    # exact group sums: absorb rounding into the last piece of each group
    ends = np.cumsum(counts) - 1
    for j in np.flatnonzero(counts > 1):
        masses[ends[j]] = w[j] - masses[ends[j] - counts[j] + 1:ends[j]].sum()
    starts = ends - counts + 1
    sigma = [np.arange(s, e + 1) for s, e in zip(starts, ends)]
    space = WeightedSpace(masses)
    return SplitResult(space, sigma, embed), Subspace(space, sub.basis[embed])


@dataclass(frozen=True, eq=False)
class PartitionPair:
    part1: np.ndarray
    part2: np.ndarray
    retries: int = 0
    ratios: tuple = ()

    @property
    def size(self) -> int:
        return int(self.part1.size + self.part2.size)


def _balanced(M: int, k1: int) -> bool:
    cap = PART_FRACTION * M
    return 0 < k1 < M and k1 <= cap and M - k1 <= cap


def sign_partition(space: WeightedSpace, seed: int = 0,
                   rng: np.random.Generator | None = None) -> PartitionPair:
    """Split the atoms by independent fair signs, redrawing until both parts
    have at most 9M/16 atoms."""
    M = space.size
    if rng is None:
        rng = np.random.default_rng(seed)
    for attempt in range(SIGN_RETRY_CAP):
        plus = rng.random(M) < 0.5
        if _balanced(M, int(plus.sum())):
            return PartitionPair(np.flatnonzero(plus), np.flatnonzero(~plus), attempt)
    raise HalvingError(f"no balanced sign pattern on {M} atoms in {SIGN_RETRY_CAP} draws")


# -- ratio maximization ---------------------------------------------------------

def _ratio_and_grad(B, w, s, p, c):
    """``r(c) = sum s_i w_i |y_i|^p / sum w_i |y_i|^p`` with ``y = B c`` and its gradient."""
    y = B @ c
    a = np.abs(y)
    m = a.max()
    if m == 0:
        return -math.inf, np.zeros_like(c)
    a = a / m
    t = w * a ** p
    den = t.sum()
    num = s @ t
    r = num / den
    dt = w * a ** (p - 1) * np.sign(y)
    g = p * (B.T @ ((s - r) * dt)) / (den * m)
    return r, g


def _ratios_and_grads(B, w, s, p, C):
    """Column-wise ``_ratio_and_grad`` for a block of directions ``C``."""
    Y = B @ C
    A = np.abs(Y)
    m = A.max(axis=0)
    zero = m == 0
    m[zero] = 1.0
    A /= m
    T = w[:, None] * A ** p
    den = T.sum(axis=0)
    den[zero] = 1.0
    r = (s @ T) / den
    dT = w[:, None] * A ** (p - 1) * np.sign(Y)
    G = p * (B.T @ ((s[:, None] - r) * dT)) / (den * m)
    r[zero] = -math.inf
    return r, G


def _ascend(B, w, s, p, C, steps):
    """Monotone projected ascent on the sphere for every column of ``C`` at once.

    Each column keeps its own step: doubled after an accepted move, halved
    after a rejected one.  ``steps`` bounds the accepted moves per column.
    """
    C = C / np.linalg.norm(C, axis=0)
    r, G = _ratios_and_grads(B, w, s, p, C)
    k = C.shape[1]
    step = np.ones(k)
    moves = np.zeros(k, dtype=int)
    live = np.isfinite(r)
    while live.any():
        G = G - (G * C).sum(axis=0) * C
        gn = np.linalg.norm(G, axis=0)
        live &= (gn >= 1e-14) & (step > STEP_FLOOR) & (moves < steps)
        if not live.any():
            break
        idx = np.flatnonzero(live)
        cand = C[:, idx] + step[idx] * G[:, idx] / gn[idx]
        cand /= np.linalg.norm(cand, axis=0)
        rc, Gc = _ratios_and_grads(B, w, s, p, cand)
        up = rc > r[idx]
        acc = idx[up]
        gain = rc[up] - r[acc]
        C[:, acc], r[acc], G[:, acc] = cand[:, up], rc[up], Gc[:, up]
        moves[acc] += 1
        step[acc] = np.minimum(2 * step[acc], 1.0)
        step[idx[~up]] /= 2
        live[acc[gain < 1e-15]] = False
    return r, C


def max_weighted_ratio(sub: Subspace, s: np.ndarray, p: float, probes: int,
                       rng: np.random.Generator) -> tuple[float, np.ndarray]:
    """Lower bound on ``sup_c sum_i s_i nu_i |y_i|^p / ||y||_p^p`` over ``y = B c``.

    ``probes`` random directions are scored; the best few are refined by
    projected gradient ascent on the unit sphere.  For a one-dimensional
    subspace the ratio is evaluated exactly.
    """
    B = sub.basis
    w = sub.space.weights
    s = np.asarray(s, dtype=np.float64)
    if sub.dim == 1:
        r, _ = _ratio_and_grad(B, w, s, p, np.ones(1))
        return float(r), np.ones(1)
    C = rng.standard_normal((sub.dim, probes))
    C /= np.linalg.norm(C, axis=0)
    Y = np.abs(B @ C)
    Y /= Y.max(axis=0)
    T = w[:, None] * Y ** p
    ratios = (s @ T) / T.sum(axis=0)
    order = np.argsort(-ratios, kind="stable")[:REFINE_TOP]
    r, Cr = _ascend(B, w, s, p, C[:, order], REFINE_STEPS)
    j = int(np.argmax(r))
    return float(r[j]), Cr[:, j]


def part_ratios(sub: Subspace, pair: PartitionPair, p: float,
                probes: int = DEFAULT_PROBES, seed: int = 0) -> tuple[float, float]:
    """``sup_y ||1_{M_j} y||_p^p / ||y||_p^p`` for each part, as lower bounds."""
    if pair.size != sub.size:
        raise InvalidInput("partition does not cover the space")
    rng = np.random.default_rng(seed)
    out = []
    for part in (pair.part1, pair.part2):
        ind = np.zeros(sub.size)
        ind[part] = 1.0
        out.append(max_weighted_ratio(sub, ind, p, probes, rng)[0])
    return out[0], out[1]


def partition_distortion(sub: Subspace, pair: PartitionPair, p: float,
                         probes: int = DEFAULT_PROBES, seed: int = 0) -> float:
    """``max_j sup_y ||1_{M_j} y||_p^p / ||y||_p^p`` as a certified lower bound."""
    return max(part_ratios(sub, pair, p, probes, seed))


def restrict(sub: Subspace, part: np.ndarray) -> Subspace:
    """Restriction to ``part`` with the restricted measure renormalized."""
    w = sub.space.weights[part]
    return Subspace(WeightedSpace(w / w.sum()), sub.basis[part])


@dataclass(frozen=True, eq=False)
class HalvingResult:
    pair: PartitionPair
    theta: float
    retries: int
    subspace: Subspace
    kept_mass: float


def halve(sub: Subspace, p: float, theta_max: float, retry_budget: int = 50,
          probes: int = DEFAULT_PROBES, seed: int = 0) -> HalvingResult:
    """Draw sign partitions until the measured distortion is at most ``theta_max``.

    Keeps ``part1`` of the accepted partition.  ``retries`` counts rejected
    partitions before acceptance.
    """
    if not (0.5 < theta_max < 1):
        raise InvalidInput("theta_max must lie in (1/2, 1)")
    rng = np.random.default_rng(seed)
    best = math.inf
    for attempt in range(retry_budget):
        pair = sign_partition(sub.space, rng=rng)
        if pair.part1.size < sub.dim or pair.part2.size < sub.dim:
            continue
        ratios = part_ratios(sub, pair, p, probes, seed=int(rng.integers(2**63)))
        theta = max(ratios)
        best = min(best, theta)
        if theta <= theta_max:
            try:
                kept = restrict(sub, pair.part1)
            except InvalidInput:
                continue
            pair = PartitionPair(pair.part1, pair.part2, pair.retries, ratios)
            mass = float(sub.space.weights[pair.part1].sum())
            return HalvingResult(pair, theta, attempt, kept, mass)
    raise HalvingError(
        f"no partition with theta <= {theta_max:.4f} in {retry_budget} tries "
        f"(best {best:.4f}); the space is too small for this dimension",
        best_theta=best)


# -- iterated reduction ---------------------------------------------------------

@dataclass
class StageRecord:
    size_before: int
    size_split: int
    size_after: int
    beta_residual: float
    theta_max: float
    partition_ratio: float
    kept_mass: float
    retries: int
    distortion: float


@dataclass
class ReductionTrace:
    stages: list = field(default_factory=list)
    cumulative_distortion: float = 1.0
    scale: float = 1.0
    final_basis: Subspace | None = None
    failure: str | None = None

    @property
    def final_space(self) -> WeightedSpace:
        return self.final_basis.space

    def normalized_ratios(self, original: Subspace, p: float, coeffs) -> np.ndarray:
        """``||y_final||_p / (scale * ||y||_p)`` for coefficient columns ``coeffs``.

        Lies in ``[1 / cumulative_distortion, 1]`` up to the accuracy of the
        per-stage distortion estimates.
        """
        before = lp_norms(original.functions(coeffs), original.space, p)
        after = lp_norms(self.final_basis.functions(coeffs), self.final_space, p)
        return after / (self.scale * before)

    def to_dict(self) -> dict:
        return {
            "stages": [vars(s) for s in self.stages],
            "cumulative_distortion": self.cumulative_distortion,
            "scale": self.scale,
            "final_size": self.final_basis.size if self.final_basis is not None else None,
            "final_space": self.final_space.weights.tolist() if self.final_basis else None,
            "final_basis": self.final_basis.basis.tolist() if self.final_basis else None,
            "failure": self.failure,
        }


def stage_factor(theta: float, p: float) -> float:
    """Distortion of one halving: the kept part carries between 1 - theta and
    theta of every p-th power norm."""
    return (theta / (1.0 - theta)) ** (1.0 / p)


def predicted_sizes(size: int, target_m: int) -> list[int]:
    sizes = []
    while size > target_m:
        sizes.append(size)
        size = size // 2
    return sizes


def telescoping_schedule(size: int, n: int, p: float, target_m: int,
                         epsilon: float) -> Callable[[int, int], float]:
    """``theta_max(n, size) = 1/2 + c sqrt(n / size)`` with ``c`` fitted so the
    product of per-stage factors over the expected stage sizes equals 1 + eps."""
    sizes = predicted_sizes(size, target_m) or [size]
    r = np.sqrt(n / np.asarray(sizes, dtype=float))
    goal = math.log1p(epsilon)

    def total(c):
        th = 0.5 + c * r
        if np.any(th >= 1):
            return math.inf
        return float(np.sum(np.log(th / (1 - th)))) / p

    lo, hi = 0.0, 0.5 / r.max()
    for _ in range(200):
        mid = (lo + hi) / 2
        if total(mid) > goal:
            hi = mid
        else:
            lo = mid
    c = lo

    def schedule(n_: int, size_: int) -> float:
        return min(0.5 + c * math.sqrt(n_ / size_), 0.999)

    schedule.c = c
    return schedule


def reduce(sub: Subspace, p: float, target_m: int, theta_max_schedule=None,
           seed: int = 0, epsilon: float = 0.5, retry_budget: int = 50,
           probes: int = DEFAULT_PROBES, lewis_tol: float = 1e-8,
           raise_on_failure: bool = True) -> ReductionTrace:
    """Shrink the measure space under ``sub`` to at most ``target_m`` atoms.

    Each stage runs Lewis density -> blend -> change of density -> atom
    splitting -> halving.  ``theta_max_schedule(n, size)`` gives the accepted
    distortion per stage; by default it is :func:`telescoping_schedule` for
    ``epsilon``.  On halving failure a :class:`HalvingError` carrying the
    partial trace is raised, unless ``raise_on_failure`` is false.
    """
    p = float(p)
    if not (1 < p < math.inf) or p == 2:
        raise InvalidInput("reduction needs 1 < p < 2 or 2 < p < inf")
    if target_m < sub.dim:
        raise InvalidInput("target_m must be at least the subspace dimension")
    if theta_max_schedule is None:
        theta_max_schedule = telescoping_schedule(sub.size, sub.dim, p, target_m, epsilon)

    trace = ReductionTrace(final_basis=sub)
    rng = np.random.default_rng(seed)
    current = sub
    while current.size > target_m:
        size_before = current.size
        lew = lewis_density(current, p, tol=lewis_tol, max_iter=DEFAULT_MAX_ITER)
        moved = change_density(current, blend_density(lew.beta), p)
        _, split = split_atoms(moved)
        theta_max = theta_max_schedule(current.dim, size_before)
        try:
            res = halve(split, p, theta_max, retry_budget=retry_budget, probes=probes,
                        seed=int(rng.integers(2**63)))
        except HalvingError as exc:
            trace.failure = str(exc)
            if raise_on_failure:
                raise HalvingError(str(exc), exc.best_theta, trace) from None
            return trace
        factor = stage_factor(res.theta, p)
        trace.stages.append(StageRecord(
            size_before=size_before, size_split=split.size, size_after=res.subspace.size,
            beta_residual=lew.residual, theta_max=theta_max, partition_ratio=res.theta,
            kept_mass=res.kept_mass, retries=res.retries, distortion=factor))
        trace.cumulative_distortion *= factor
        trace.scale *= (res.theta / res.kept_mass) ** (1.0 / p)
        current = res.subspace
        trace.final_basis = current
    return trace


def measured_distortion(original: Subspace, trace: ReductionTrace, p: float,
                        samples: int = 1000, seed: int = 0) -> float:
    """``max r / min r`` of the norm ratio ``r = ||y_final|| / ||y||`` over random
    directions; scale free, so it ignores the renormalizations."""
    rng = np.random.default_rng(seed)
    coeffs = rng.standard_normal((original.dim, samples))
    r = trace.normalized_ratios(original, p, coeffs)
    return float(r.max() / r.min())
