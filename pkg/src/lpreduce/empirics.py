"""Monte Carlo and covering-number validators for the process and entropy bounds."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .measure import EuclideanBall, InvalidInput, Subspace, WeightedSpace, _check_p, lp_norms
from .sparsify import DEFAULT_PROBES, max_weighted_ratio
from .summing import FiniteRankOperator

DEFAULT_TRIALS = 200
DEFAULT_SAMPLES = 4096
MAX_ENUMERATION = 16
METRICS = ("sup", "delta")


# -- process suprema --------------------------------------------------------------

def _process_sup(sub: Subspace, s: np.ndarray, p: float, probes: int, rng) -> float:
    """``sup_{||y||_p <= 1} |sum_i s_i nu_i |y_i|^p|``."""
    hi = max_weighted_ratio(sub, s, p, probes, rng)[0]
    lo = max_weighted_ratio(sub, -s, p, probes, rng)[0]
    return max(hi, lo, 0.0)


def rademacher_sup(sub: Subspace, p: float, trials: int = DEFAULT_TRIALS,
                   probes: int = DEFAULT_PROBES, seed: int = 0,
                   gaussian: bool = False) -> tuple[float, float]:
    """Mean and standard error of ``sup |sum_i eps_i nu_i |y_i|^p|`` over the unit ball.

    Signs are Rademacher by default and standard Gaussian with ``gaussian=True``.
    Each supremum is a probe-plus-ascent lower bound.
    """
    p = _check_p(p)
    if math.isinf(p):
        raise InvalidInput("the process is defined for finite p")
    if trials < 1:
        raise InvalidInput("trials must be positive")
    rng = np.random.default_rng(seed)
    vals = np.empty(trials)
    for t in range(trials):
        if gaussian:
            s = rng.standard_normal(sub.size)
        else:
            s = rng.choice(np.array([-1.0, 1.0]), size=sub.size)
        vals[t] = _process_sup(sub, s, p, probes, rng)
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return float(vals.mean()), se


def rademacher_enumerate(sub: Subspace, p: float, probes: int = DEFAULT_PROBES,
                         seed: int = 0) -> float:
    """Exact average over all ``2^M`` sign patterns of the same supremum."""
    M = sub.size
    if M > MAX_ENUMERATION:
        raise InvalidInput(f"enumeration is limited to {MAX_ENUMERATION} atoms")
    rng = np.random.default_rng(seed)
    total = 0.0
    # s and -s share a supremum, so half the patterns suffice
    for signs in itertools.product((-1.0, 1.0), repeat=M - 1):
        s = np.array((1.0,) + signs)
        total += _process_sup(sub, s, p, probes, rng)
    return total / 2 ** (M - 1)


def gaussian_ell(u: FiniteRankOperator, trials: int = 10_000, seed: int = 0) -> float:
    """Monte Carlo ``l(u) = (E ||sum_i g_i u e_i||^2)^(1/2)`` on a Euclidean domain."""
    if not isinstance(u.domain, EuclideanBall):
        raise InvalidInput("l(u) needs a Euclidean domain")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((trials, u.dimension))
    norms = u.image_norms(G)
    return float(math.sqrt(np.mean(norms ** 2)))


def delta_distance(y, z, space: WeightedSpace, p: float) -> float:
    """``(sum_i [nu_i (|y_i|^p - |z_i|^p)]^2)^(1/2)``."""
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if y.shape != (space.size,) or z.shape != (space.size,):
        raise InvalidInput("functions must have one value per atom")
    d = space.weights * (np.abs(y) ** p - np.abs(z) ** p)
    return float(np.linalg.norm(d))


# -- covering numbers -------------------------------------------------------------

@dataclass(frozen=True)
class CoveringCurve:
    radii: tuple
    counts: tuple

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=np.float64)
        c = np.asarray(self.counts)
        if r.ndim != 1 or r.shape != c.shape or r.size == 0:
            raise InvalidInput("radii and counts must be equal-length nonempty sequences")
        if np.any(np.diff(r) >= 0):
            raise InvalidInput("radii must be strictly decreasing")
        if np.any(np.diff(c) < 0):
            raise InvalidInput("counts must be nondecreasing as radii decrease")
        if np.any(c < 1):
            raise InvalidInput("counts must be positive")
        object.__setattr__(self, "radii", tuple(float(x) for x in r))
        # greedy counts are integers; real values are allowed for synthetic curves
        object.__setattr__(self, "counts", tuple(c.tolist()))


def _metric_coords(points, metric: str, space: WeightedSpace | None, p: float | None):
    """Coordinates in which the metric is a plain sup or Euclidean distance."""
    P = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if P.shape[0] == 0:
        raise InvalidInput("need at least one point")
    if metric == "sup":
        return P, math.inf
    if metric == "delta":
        if space is None or p is None:
            raise InvalidInput("the delta metric needs a space and p")
        return space.weights * np.abs(P) ** p, 2.0
    raise InvalidInput(f"unknown metric {metric!r}; expected one of {METRICS}")


def _dist(P: np.ndarray, x: np.ndarray, order: float) -> np.ndarray:
    diff = np.abs(P - x)
    if math.isinf(order):
        return diff.max(axis=1)
    return np.sqrt((diff ** 2).sum(axis=1))


def _farthest_point_radii(P: np.ndarray, order: float, stop: float,
                          max_centers: int | None = None) -> np.ndarray:
    """Covering radius after 1, 2, ... greedy farthest-point centers.

    Stops once the radius is ``<= stop`` or ``max_centers`` are placed.
    """
    d = _dist(P, P[0], order)
    radii = [float(d.max())]
    limit = P.shape[0] if max_centers is None else max_centers
    while radii[-1] > stop and len(radii) < limit:
        j = int(np.argmax(d))
        d = np.minimum(d, _dist(P, P[j], order))
        radii.append(float(d.max()))
    return np.array(radii)


def covering_estimate(points, metric: str, t: float, space: WeightedSpace | None = None,
                      p: float | None = None) -> int:
    """Greedy farthest-point count of closed radius-``t`` balls covering ``points``.

    Centers are sample points, starting from the first one; the count lies
    between the covering number at ``t`` and the packing number at ``t / 2``.
    """
    if t < 0:
        raise InvalidInput("t must be nonnegative")
    P, order = _metric_coords(points, metric, space, p)
    return len(_farthest_point_radii(P, order, t))


def covering_curve(points, metric: str, radii, space: WeightedSpace | None = None,
                   p: float | None = None) -> CoveringCurve:
    """Greedy counts at every radius, from a single farthest-point ordering."""
    radii = np.asarray(radii, dtype=np.float64)
    P, order = _metric_coords(points, metric, space, p)
    cover = _farthest_point_radii(P, order, float(radii.min()))
    # count(t) = number of centers needed before the covering radius is <= t
    counts = [int(np.argmax(cover <= t)) + 1 for t in radii]
    return CoveringCurve(tuple(radii), tuple(counts))


def unit_sphere_sample(sub: Subspace, p: float, samples: int = DEFAULT_SAMPLES,
                       seed: int = 0) -> np.ndarray:
    """Functions of unit L_p norm in ``sub`` along Gaussian coefficient directions (rows)."""
    rng = np.random.default_rng(seed)
    F = sub.basis @ rng.standard_normal((sub.dim, samples))
    F /= lp_norms(F, sub.space, p)
    return F.T


def entropy_curve(sub: Subspace, p: float, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                  levels: int = 12, fill: float = 0.25, metric: str = "sup") -> CoveringCurve:
    """Covering curve of a unit-sphere sample of ``sub``.

    Radii form a geometric grid from half the covering radius of one center
    down to the radius at which the greedy count reaches ``fill * samples``.
    """
    P, order = _metric_coords(unit_sphere_sample(sub, p, samples, seed), metric,
                              sub.space, p)
    cover = _farthest_point_radii(P, order, 0.0, max(2, int(fill * samples)))
    if not 0 < cover[-1] < 0.5 * cover[0]:
        raise InvalidInput("sample too small or too degenerate for a covering curve")
    radii = np.geomspace(0.5 * cover[0], cover[-1], levels)
    counts = [int(np.argmax(cover <= t)) + 1 for t in radii]
    return CoveringCurve(tuple(radii), tuple(counts))


def dudley_bound(curve: CoveringCurve) -> float:
    """Trapezoid value of ``int sqrt(log E(t)) dt`` over the curve's radii, constant 1."""
    r = np.array(curve.radii[::-1])
    f = np.sqrt(np.log(np.array(curve.counts[::-1], dtype=np.float64)))
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(r)))


def fit_scaling(curve: CoveringCurve) -> float:
    """Least-squares slope of ``log log E(t)`` against ``log(1/t)``."""
    r = np.array(curve.radii)
    c = np.array(curve.counts, dtype=np.float64)
    keep = (c > 1) & (r > 0)
    if keep.sum() < 4:
        raise InvalidInput("need at least 4 curve points with count > 1")
    x = np.log(1.0 / r[keep])
    y = np.log(np.log(c[keep]))
    return float(np.polyfit(x, y, 1)[0])
