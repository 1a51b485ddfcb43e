"""Walsh-tail subspaces of functions on the cube {-1, 1}^n."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .measure import InvalidInput, SupOnPoints, WeightedSpace, _check_p
from .summing import CurvePoint, FiniteRankOperator, saturation_curve

MAX_CUBE_N = 14


@dataclass(frozen=True, eq=False)
class WalshSpace:
    cube_n: int
    space: WeightedSpace
    subsets: tuple
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.subsets)


def _popcount(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.int64)
    count = np.zeros_like(x)
    while np.any(x):
        count += x & 1
        x >>= 1
    return count


def walsh_space(n: int, m: int) -> WalshSpace:
    """Span of the characters ``w_S`` with ``|S| >= n - m`` over the uniform cube.

    Point ``g`` has index ``sum_i bit_i 2^i`` with ``g_i = -1`` when bit i is set,
    so ``w_S(g) = (-1)^popcount(index & mask_S)``.
    """
    n, m = int(n), int(m)
    if not 0 <= m <= n:
        raise InvalidInput("need 0 <= m <= n")
    if n > MAX_CUBE_N:
        raise InvalidInput(f"cube dimension capped at {MAX_CUBE_N}")
    if n < 1:
        raise InvalidInput("cube dimension must be positive")
    subsets = tuple(S for size in range(n - m, n + 1)
                    for S in itertools.combinations(range(n), size))
    points = np.arange(2 ** n)
    masks = np.array([sum(1 << i for i in S) for S in subsets], dtype=np.int64)
    parity = _popcount(points[:, None] & masks[None, :]) & 1
    basis = (1 - 2 * parity).astype(np.float64)
    basis.setflags(write=False)
    return WalshSpace(n, WeightedSpace.uniform(2 ** n), subsets, basis)


def tail_identity_operator(ws: WalshSpace, p: float) -> FiniteRankOperator:
    """The identity of E, from the sup norm on the cube points into L_p(uniform)."""
    p = _check_p(p)
    dom = SupOnPoints(ws.space, ws.basis)
    return FiniteRankOperator(ws.basis, dom, ws.space, p)


def growth_experiment(n: int, m: int, p: float, ks, seed: int = 0,
                      restarts: int = 8, steps: int = 2000) -> list[CurvePoint]:
    ws = walsh_space(n, m)
    return saturation_curve(tail_identity_operator(ws, p), ks, p, seed=seed,
                            restarts=restarts, steps=steps)
