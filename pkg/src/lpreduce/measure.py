"""Finite weighted measure spaces, subspaces of functions on them, and exact norms.

Everything here works on a finite set of atoms ``0..N-1`` carrying strictly
positive probability weights.  Functions are plain float arrays with one entry
per atom; a subspace is a ``size x dim`` basis array whose columns are the
basis functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

WEIGHT_SUM_TOL = 1e-12
DENSITY_TOL = 1e-10
RANK_TOL = 1e-10

# weak-norm ascent knobs for Euclidean domains with p != 2
WEAK_RESTARTS = 16
WEAK_STEPS = 500
WEAK_MOVE_TOL = 1e-10
NEWTON_ITERS = 30
POLISH_TOP = 8


class InvalidInput(ValueError):
    """Raised when an input violates a documented precondition."""


def _check_p(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1:
        raise InvalidInput(f"p must lie in [1, inf], got {p}")
    return p


@dataclass(frozen=True, eq=False)
class WeightedSpace:
    """A finite probability space with strictly positive atom masses."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        if w.size == 0:
            raise InvalidInput("a weighted space needs at least one atom")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidInput("atom weights must be finite and strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidInput(f"atom weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @classmethod
    def uniform(cls, size: int) -> "WeightedSpace":
        if size < 1:
            raise InvalidInput("size must be positive")
        return cls(np.full(size, 1.0 / size))

    @classmethod
    def from_masses(cls, masses) -> "WeightedSpace":
        """Build a probability space from positive masses by renormalizing them."""
        m = np.asarray(masses, dtype=np.float64).reshape(-1)
        if m.size == 0 or np.any(m <= 0) or not np.all(np.isfinite(m)):
            raise InvalidInput("masses must be finite and strictly positive")
        return cls(m / m.sum())


@dataclass(frozen=True, eq=False)
class Subspace:
    """The span of the columns of ``basis``, viewed as functions on ``space``."""

    space: WeightedSpace
    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=np.float64)
        if b.ndim == 1:
            b = b[:, None]
        if b.ndim != 2 or b.shape[0] != self.space.size:
            raise InvalidInput(
                f"basis must have shape ({self.space.size}, dim), got {b.shape}"
            )
        if b.shape[1] < 1 or b.shape[1] > b.shape[0]:
            raise InvalidInput("need 1 <= dim <= size")
        if not np.all(np.isfinite(b)):
            raise InvalidInput("basis entries must be finite")
        s = np.linalg.svd(b, compute_uv=False)
        if s[-1] <= RANK_TOL * s[0]:
            raise InvalidInput("basis is not of full column rank")
        b.setflags(write=False)
        object.__setattr__(self, "basis", b)

    @property
    def dim(self) -> int:
        return int(self.basis.shape[1])

    @property
    def size(self) -> int:
        return self.space.size

    def functions(self, coeffs) -> np.ndarray:
        """Evaluate coefficient vectors (``dim`` or ``dim x k``) as functions."""
        return self.basis @ np.asarray(coeffs, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Density:
    """A strictly positive function of unit integral against ``space``."""

    values: np.ndarray
    space: WeightedSpace

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        if v.size != self.space.size:
            raise InvalidInput("density needs one value per atom")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise InvalidInput("density values must be strictly positive")
        total = float(v @ self.space.weights)
        if abs(total - 1.0) > DENSITY_TOL:
            raise InvalidInput(f"density integrates to {total!r}, expected 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def normalized(cls, values, space: WeightedSpace) -> "Density":
        v = np.asarray(values, dtype=np.float64).reshape(-1)
        if v.size != space.size or np.any(v <= 0):
            raise InvalidInput("density values must be strictly positive, one per atom")
        return cls(v / float(v @ space.weights), space)


@dataclass(frozen=True)
class EuclideanBall:
    """The domain norm of l_2^d."""

    dimension: int

    def __post_init__(self):
        if self.dimension < 1:
            raise InvalidInput("dimension must be positive")


@dataclass(frozen=True, eq=False)
class SupOnPoints:
    """A d-dimensional domain normed by ``max_w |(embedding @ x)(w)|``.

    The extreme functionals of the dual ball are point evaluations on the
    carrier, which makes every weak-l_p computation on this domain exact.
    """

    carrier: WeightedSpace
    embedding: np.ndarray

    def __post_init__(self):
        sub = Subspace(self.carrier, self.embedding)
        object.__setattr__(self, "embedding", sub.basis)

    @property
    def dimension(self) -> int:
        return int(self.embedding.shape[1])


DomainNorm = Union[EuclideanBall, SupOnPoints]


@dataclass(frozen=True, eq=False)
class VectorSystem:
    """``k`` vectors of a d-dimensional domain, stored as the rows of ``vectors``."""

    vectors: np.ndarray
    k: int = field(init=False)

    def __post_init__(self):
        v = np.array(self.vectors, dtype=np.float64)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[0] == 0:
            raise InvalidInput("a vector system needs at least one vector")
        v.setflags(write=False)
        object.__setattr__(self, "vectors", v)
        object.__setattr__(self, "k", int(v.shape[0]))

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])


def lp_norm(f, space: WeightedSpace, p: float) -> float:
    """L_p(space) norm of the function ``f``; ``p`` may be ``inf``."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if f.size != space.size:
        raise InvalidInput(f"function has {f.size} values for {space.size} atoms")
    p = _check_p(p)
    a = np.abs(f)
    if math.isinf(p):
        return float(a.max())
    m = a.max()
    if m == 0:
        return 0.0
    # scaled to avoid overflow for large p
    return float(m * (space.weights @ (a / m) ** p) ** (1.0 / p))


def lp_norms(F, space: WeightedSpace, p: float) -> np.ndarray:
    """Column-wise :func:`lp_norm` of a ``size x k`` array."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    if F.shape[0] != space.size:
        raise InvalidInput("function values do not match the atoms")
    p = _check_p(p)
    a = np.abs(F)
    m = a.max(axis=0)
    if math.isinf(p):
        return m
    safe = np.where(m > 0, m, 1.0)
    return np.where(m > 0, safe * (space.weights @ (a / safe) ** p) ** (1.0 / p), 0.0)


def change_density(sub: Subspace, phi: Density, p: float) -> Subspace:
    """Move ``sub`` isometrically to L_p(phi d(space)) via f -> f / phi^(1/p)."""
    if phi.space is not sub.space and not np.array_equal(phi.space.weights, sub.space.weights):
        raise InvalidInput("density is defined on a different space")
    p = _check_p(p)
    masses = phi.values * sub.space.weights
    new_space = WeightedSpace(masses / masses.sum())
    if math.isinf(p):
        return Subspace(new_space, sub.basis)
    return Subspace(new_space, sub.basis / phi.values[:, None] ** (1.0 / p))


def _as_rows(sys) -> np.ndarray:
    if isinstance(sys, VectorSystem):
        return sys.vectors
    return VectorSystem(sys).vectors


def _lp_count(V: np.ndarray, p: float, axis=-1) -> np.ndarray:
    """Counting-measure l_p norm along ``axis``."""
    a = np.abs(V)
    if math.isinf(p):
        return a.max(axis=axis)
    m = a.max(axis=axis, keepdims=True)
    safe = np.where(m > 0, m, 1.0)
    out = safe * ((a / safe) ** p).sum(axis=axis, keepdims=True) ** (1.0 / p)
    return np.squeeze(np.where(m > 0, out, 0.0), axis=axis)


@dataclass(frozen=True)
class WeakNorm:
    """Value of a weak-l_p norm together with the functional attaining it."""

    value: float
    functional: np.ndarray
    exact: bool


def sphere_ascent(X: np.ndarray, p: float, starts: np.ndarray, steps: int = WEAK_STEPS,
                  move_tol: float = WEAK_MOVE_TOL) -> tuple[float, np.ndarray]:
    """Maximize ``||X a||_p`` over unit vectors ``a`` from each row of ``starts``.

    Each step moves to the normalized gradient of the convex objective, which
    can only increase it; iteration stops once the iterate moves less than
    ``move_tol``.  Returns the best value and its maximizer.
    """
    vals, A = sphere_ascent_all(X, p, starts, steps, move_tol)
    j = int(np.argmax(vals))
    return float(vals[j]), A[:, j].copy()


def sphere_ascent_all(X, p, starts, steps=WEAK_STEPS, move_tol=WEAK_MOVE_TOL):
    """Vectorized :func:`sphere_ascent`; returns final values and iterates (columns)."""
    A = np.array(starts, dtype=np.float64).T  # d x s, one start per column
    A /= np.linalg.norm(A, axis=0)
    vals = _lp_count(X @ A, p, axis=0)
    active = np.ones(A.shape[1], dtype=bool)
    for _ in range(steps):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Y = X @ A[:, idx]
        if math.isinf(p):
            j = np.argmax(np.abs(Y), axis=0)
            cols = np.arange(idx.size)
            G = X[j].T * np.sign(Y[j, cols])
        else:
            m = np.abs(Y).max(axis=0)
            m = np.where(m > 0, m, 1.0)
            G = X.T @ (np.sign(Y) * (np.abs(Y) / m) ** (p - 1))
        gn = np.linalg.norm(G, axis=0)
        ok = gn > 0
        G[:, ok] /= gn[ok]
        new_vals = _lp_count(X @ G, p, axis=0)
        improve = ok & (new_vals >= vals[idx])
        moved = np.linalg.norm(G - A[:, idx], axis=0)
        upd = idx[improve]
        A[:, upd] = G[:, improve]
        vals[upd] = new_vals[improve]
        active[idx[~improve | (moved < move_tol)]] = False
    return vals, A


def newton_polish(X: np.ndarray, p: float, a: np.ndarray, iters: int = NEWTON_ITERS):
    """Riemannian Newton steps for ``max ||X a||_p`` on the unit sphere.

    Steps are accepted only when they increase the objective, so the result
    is never worse than ``a``.  Returns (value, a).
    """
    a = a / np.linalg.norm(a)
    val = float(_lp_count(X @ a, p))
    d = a.size
    if d == 1 or math.isinf(p):
        return val, a
    for _ in range(iters):
        t = X @ a
        m = np.abs(t).max()
        if m == 0:
            break
        r = np.abs(t) / m
        g = X.T @ (np.sign(t) * r ** (p - 1))
        with np.errstate(divide="ignore"):
            curv = np.where(r > 0, r ** (p - 2), 0.0)
        H = (p - 1) / m * (X.T * curv) @ X
        q, _ = np.linalg.qr(np.column_stack([a, np.eye(d)]))
        T = q[:, 1:d]
        Hr = T.T @ H @ T - (a @ g) * np.eye(d - 1)
        gr = T.T @ g
        try:
            h = -np.linalg.solve(Hr, gr)
        except np.linalg.LinAlgError:
            break
        cand = a + T @ h
        cand /= np.linalg.norm(cand)
        new = float(_lp_count(X @ cand, p))
        if not new > val:
            break
        a, val = cand, new
    return val, a


def weak_lp(sys, dom: DomainNorm, p: float, seed: int = 0, restarts: int = WEAK_RESTARTS,
            extra_starts=None) -> WeakNorm:
    """Weak-l_p norm of a vector system with the attaining dual functional.

    For :class:`SupOnPoints` the functional is the row of the embedding at the
    maximizing carrier point.  For :class:`EuclideanBall` it is a unit vector.
    """
    X = _as_rows(sys)
    p = _check_p(p)
    if X.shape[1] != dom.dimension:
        raise InvalidInput("vector dimension does not match the domain")

    if isinstance(dom, SupOnPoints):
        V = dom.embedding @ X.T  # carrier x k
        per_point = _lp_count(V, p, axis=1)
        j = int(np.argmax(per_point))
        return WeakNorm(float(per_point[j]), dom.embedding[j].copy(), True)

    if isinstance(dom, EuclideanBall):
        if p == 2:
            _, s, vt = np.linalg.svd(X, full_matrices=False)
            return WeakNorm(float(s[0]), vt[0].copy(), True)
        norms = np.linalg.norm(X, axis=1)
        if math.isinf(p):
            i = int(np.argmax(norms))
            a = X[i] / norms[i] if norms[i] > 0 else np.eye(X.shape[1])[0]
            return WeakNorm(float(norms[i]), a, True)
        if norms.max() == 0:
            return WeakNorm(0.0, np.eye(X.shape[1])[0], True)
        rng = np.random.default_rng(seed)
        _, _, vt = np.linalg.svd(X, full_matrices=False)
        starts = [vt[0], X[int(np.argmax(norms))]]
        if extra_starts is not None:
            starts.extend(np.atleast_2d(extra_starts))
        starts.extend(rng.standard_normal((restarts, X.shape[1])))
        starts = np.array([s for s in starts if np.linalg.norm(s) > 0])
        vals, A = sphere_ascent_all(X, p, starts)
        val, a = -math.inf, None
        for j in np.argsort(-vals, kind="stable")[:POLISH_TOP]:
            v, b = newton_polish(X, p, A[:, j])
            if v > val:
                val, a = v, b
        return WeakNorm(val, a, False)

    raise InvalidInput(f"unknown domain norm {dom!r}")


def weak_lp_norm(sys, dom: DomainNorm, p: float, seed: int = 0) -> float:
    """``sup_{||a||_* <= 1} (sum_i |<a, x_i>|^p)^(1/p)`` for the system ``sys``.

    Exact for sup-on-points domains, for Euclidean domains at p = 2 (largest
    singular value) and at p = inf.  Otherwise a multi-start ascent over the
    unit sphere returns a value attained by an explicit unit vector, so it is
    a lower bound on the true norm.
    """
    return weak_lp(sys, dom, p, seed=seed).value


# -- instance files -----------------------------------------------------------

def load_instance(path) -> tuple[Subspace, float | None]:
    """Read ``{"weights": [...], "basis": [[...], ...], "p": number}``.

    Weights are renormalized to sum to one on load.
    """
    data = json.loads(Path(path).read_text())
    return instance_from_dict(data)


def instance_from_dict(data: dict) -> tuple[Subspace, float | None]:
    try:
        basis = np.asarray(data["basis"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidInput(f"bad instance: {exc}") from None
    if basis.ndim == 1:
        basis = basis[:, None]
    weights = data.get("weights")
    if weights is None:
        space = WeightedSpace.uniform(basis.shape[0])
    else:
        space = WeightedSpace.from_masses(weights)
    p = data.get("p")
    return Subspace(space, basis), (None if p is None else _parse_p(p))


def _parse_p(p) -> float:
    if isinstance(p, str) and p.lower() in ("inf", "infinity"):
        return math.inf
    return _check_p(float(p))


def instance_to_dict(sub: Subspace, p: float | None = None) -> dict:
    out = {"weights": sub.space.weights.tolist(), "basis": sub.basis.tolist()}
    if p is not None:
        out["p"] = "inf" if math.isinf(p) else p
    return out
