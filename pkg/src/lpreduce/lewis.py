"""Lewis change of density on a finite measure space.

For an n-dimensional subspace X of L_p(mu) the Lewis density beta makes
``Y = {x / beta^(1/p)}`` admit a basis f_1..f_n, orthonormal in L_2(beta dmu),
with ``sum_i f_i^2 == n`` at every atom.  On atom masses ``w = beta * mu`` this
is the fixed point of the l_p Lewis-weight map, which we iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .measure import (
    Density,
    InvalidInput,
    Subspace,
    WeightedSpace,
    change_density,
    lp_norms,
)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


class LewisConvergenceError(RuntimeError):
    """The fixed-point iteration did not reach the requested residual."""

    def __init__(self, message, best_residual, iterations):
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class LewisResult:
    beta: Density
    lewis_basis: np.ndarray
    residual: float
    iterations: int

    @property
    def masses(self) -> np.ndarray:
        """Atom masses ``beta * mu`` of the reweighted space."""
        return self.beta.values * self.beta.space.weights


def damping_exponent(p: float) -> float:
    # Linearized map has spectrum in [1 - eta*p/2, 1 - eta]; contractive iff eta < 4/p.
    if p < 4:
        return 1.0
    return min(0.5, 3.0 / p)


def _leverage(A: np.ndarray) -> np.ndarray:
    # rows of A R^-1 keep relative accuracy for tiny leverages, unlike the explicit Q
    r = np.linalg.qr(A, mode="r")
    q = solve_triangular(r, A.T, trans="T").T
    return np.einsum("ij,ij->i", q, q)


def lewis_density(sub: Subspace, p: float, tol: float = DEFAULT_TOL,
                  max_iter: int = DEFAULT_MAX_ITER, seed: int = 0) -> LewisResult:
    """Compute the Lewis density of ``sub`` in L_p for 1 < p < inf.

    The iteration runs on normalized weights ``lam`` (summing to n) of the
    rows ``a_w = mu_w^(1/p) b_w``::

        lam <- (a_w^T (A^T diag(lam)^(1-2/p) A)^-1 a_w)^(p/2)

    undamped for p < 4 and geometrically damped above.  It stops once
    ``max_w |sum_i f_i(w)^2 - n| <= tol * n``.  ``seed`` is accepted for
    interface uniformity; the iteration is deterministic.
    """
    p = float(p)
    if not (1 < p < math.inf):
        raise InvalidInput("Lewis densities are computed for 1 < p < inf")
    if tol <= 0:
        raise InvalidInput("tol must be positive")
    mu = sub.space.weights
    n = sub.dim
    A = mu[:, None] ** (1.0 / p) * sub.basis
    scale = np.abs(A).max()
    A = A / scale
    expo = 0.5 - 1.0 / p
    eta = damping_exponent(p)

    lam = np.full(sub.size, n / sub.size)
    best = (math.inf, lam, 0)
    residual = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        lev = _leverage(lam[:, None] ** expo * A)
        # Sum of f_i^2 at atom w equals lev_w / w_w with w = lam / n.
        residual = float(np.max(np.abs(n * lev / lam - n)))
        if residual < best[0]:
            best = (residual, lam, it - 1)
        if residual <= tol * n:
            break
        target = (lev * lam ** (-2.0 * expo)) ** (p / 2.0)
        target *= n / target.sum()
        new = target if eta == 1.0 else lam ** (1.0 - eta) * target ** eta
        lam = new * (n / new.sum())
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise LewisConvergenceError("Lewis iteration left the positive orthant",
                                        best[0], it)
    else:
        raise LewisConvergenceError(
            f"no convergence in {max_iter} iterations (best residual {best[0]:.3e})",
            best[0], max_iter)

    w = lam / n
    beta = Density.normalized(w / mu, sub.space)
    y_basis = sub.basis / beta.values[:, None] ** (1.0 / p)
    q, _ = np.linalg.qr(np.sqrt(w)[:, None] * y_basis)
    f = q / np.sqrt(w)[:, None]
    return LewisResult(beta=beta, lewis_basis=f, residual=residual, iterations=it - 1)


def one_dim_lewis_beta(x, space: WeightedSpace, p: float) -> np.ndarray:
    """Closed form for ``span{x}``: ``beta = |x|^p / ||x||_p^p``."""
    x = np.asarray(x, dtype=np.float64)
    a = np.abs(x) ** p
    return a / float(space.weights @ a)


def hilbert_lewis_beta(sub: Subspace) -> np.ndarray:
    """Closed form at p = 2: ``beta * mu`` are the leverage scores over n."""
    mu = sub.space.weights
    lev = _leverage(np.sqrt(mu)[:, None] * sub.basis)
    return lev / sub.dim / mu


def blend_density(beta: Density) -> Density:
    """``alpha = (beta + 1) / 2``; always strictly above 1/2."""
    return Density((beta.values + 1.0) / 2.0, beta.space)


@dataclass(frozen=True)
class SupBoundReport:
    max_ratio: float
    bound: float
    violated: bool
    samples: int


def sup_bound_constant(n: int, p: float) -> float:
    if p < 2:
        return (2.0 * n) ** (1.0 / p)
    return (2.0 * n) ** 0.5


def verify_sup_bounds(sub_tilde: Subspace, p: float, samples: int = 1000,
                      seed: int = 0) -> SupBoundReport:
    """Largest observed ``||f||_inf / ||f||_p`` over random directions of ``sub_tilde``.

    Besides ``samples`` Gaussian directions, each atom contributes the direction
    maximizing its value relative to the L_2 norm, which is where large ratios
    concentrate.
    """
    rng = np.random.default_rng(seed)
    B = sub_tilde.basis
    coeffs = rng.standard_normal((sub_tilde.dim, samples))
    w = sub_tilde.space.weights
    gram = B.T @ (w[:, None] * B)
    peaked = np.linalg.solve(gram, B.T)
    F = B @ np.hstack([coeffs, peaked])
    ratios = np.abs(F).max(axis=0) / lp_norms(F, sub_tilde.space, p)
    bound = sup_bound_constant(sub_tilde.dim, p)
    max_ratio = float(ratios.max())
    return SupBoundReport(max_ratio, bound, max_ratio > bound * (1 + 1e-9), samples)


def lewis_change(sub: Subspace, p: float, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> tuple[Subspace, LewisResult, Density]:
    """Lewis density, blend, and change of density in one call.

    Returns the subspace ``X / alpha^(1/p)`` over ``alpha * mu``.
    """
    res = lewis_density(sub, p, tol=tol, max_iter=max_iter)
    alpha = blend_density(res.beta)
    return change_density(sub, alpha, p), res, alpha
