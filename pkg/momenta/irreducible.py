"""Decomposition of symmetric tensors into irreducible (traceless) parts.

An order-l symmetric tensor M is the unique sum

    M = sum_k embed(H_{l-2k}, l),    k = 0 .. l // 2,

where every H_p is a traceless symmetric tensor of rank p and `embed` places copies
of the Kronecker delta next to it. For l = 2 this is the familiar split into the
deviator and one third of the trace times delta.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from momenta.moments import Flavor, MomentSet
from momenta.tensor_core import (
    SymTensor3,
    num_coeffs,
    symmetrize,
)
from momenta.utils import SCHEMA, check_schema

logger = logging.getLogger(__name__)

MAX_DECOMPOSITION_ORDER = 8
TRACELESS_RTOL = 1e-10

PartKey = Tuple[int, int]


class ParityMismatch(ValueError):
    """Raised when a rank and an order differ in parity or the rank is too large."""


def _check_parity(order: int, rank: int) -> None:
    if rank < 0 or rank > order or (order - rank) % 2:
        raise ParityMismatch(
            f"Rank {rank} is not a valid irreducible rank of an order-{order} tensor"
        )


def _trace_residual(t: SymTensor3) -> float:
    if t.order < 2:
        return 0.0
    return t.trace().norm()


def is_traceless(t: SymTensor3, rtol: float = TRACELESS_RTOL) -> bool:
    """A zero tensor counts as traceless."""
    return _trace_residual(t) <= rtol * t.norm()


@lru_cache(maxsize=None)
def _trace_matrix(order: int) -> np.ndarray:
    """The linear map from compact order-p coefficients to the compact coefficients
    of their trace."""
    columns = [
        SymTensor3.basis(order, i).trace().coeffs for i in range(num_coeffs(order))
    ]
    return np.stack(columns, axis=1)


@lru_cache(maxsize=None)
def traceless_basis(rank: int) -> np.ndarray:
    """Orthonormal columns spanning the compact coefficients of traceless rank-p
    tensors. There are 2p + 1 of them."""
    n = num_coeffs(rank)
    if rank < 2:
        result = np.eye(n)
    else:
        _, _, vt = np.linalg.svd(_trace_matrix(rank))
        # The trace map is onto, so the null space is everything past its rank.
        result = vt[num_coeffs(rank - 2) :].T.copy()
    assert result.shape == (n, 2 * rank + 1)
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class IrreducibleTensor:
    """A traceless part of an order-l tensor.

    Attributes:
        source_order: The order l of the tensor the part belongs to.
        rank: The rank p of the part, p <= l and l - p even.
        data: The traceless tensor itself.
    """

    source_order: int
    rank: int
    data: SymTensor3

    def __post_init__(self):
        _check_parity(self.source_order, self.rank)
        if self.data.order != self.rank:
            raise ParityMismatch(
                f"Part of rank {self.rank} holds a tensor of order {self.data.order}"
            )
        if not is_traceless(self.data):
            raise ValueError(
                f"Part {self.key} is not traceless (trace norm {_trace_residual(self.data)})"
            )

    @property
    def key(self) -> PartKey:
        return (self.source_order, self.rank)

    def norm(self) -> float:
        return self.data.norm()

    def coordinates(self) -> np.ndarray:
        """The 2p + 1 coordinates in the basis of `traceless_basis`."""
        return traceless_basis(self.rank).T @ self.data.coeffs

    @staticmethod
    def from_coordinates(source_order: int, rank: int, coords: np.ndarray) -> "IrreducibleTensor":
        return IrreducibleTensor(
            source_order, rank, SymTensor3(rank, traceless_basis(rank) @ np.asarray(coords))
        )

    def __repr__(self) -> str:
        return f"IrreducibleTensor({self.source_order},{self.rank}, {self.data.coeffs.tolist()})"


def embed(h: IrreducibleTensor, target_order: Optional[int] = None) -> SymTensor3:
    """Sum of all distinct placements of H and (l - p) / 2 copies of delta among the
    l indices. For l = 3, p = 1 this is v_i d_jk + v_j d_ik + v_k d_ij."""
    order = h.source_order if target_order is None else target_order
    _check_parity(order, h.rank)
    return _embed_tensor(h.data, order)


def _embed_tensor(t: SymTensor3, order: int) -> SymTensor3:
    k = (order - t.order) // 2
    if k == 0:
        return t
    dense = t.dense()
    for _ in range(k):
        dense = np.multiply.outer(dense, np.eye(3))
    placements = math.factorial(order) // (
        math.factorial(t.order) * 2**k * math.factorial(k)
    )
    return symmetrize(dense, max_rank=order) * placements


@lru_cache(maxsize=None)
def _part_ranks(order: int) -> Tuple[int, ...]:
    return tuple(range(order, -1, -2))


@lru_cache(maxsize=None)
def _decomposition_solver(order: int) -> np.ndarray:
    """Inverse of the square matrix mapping stacked traceless coordinates of all
    parts to the compact coefficients of their sum."""
    blocks = []
    for rank in _part_ranks(order):
        basis = traceless_basis(rank)
        blocks.append(
            np.stack(
                [_embed_tensor(SymTensor3(rank, col), order).coeffs for col in basis.T],
                axis=1,
            )
        )
    matrix = np.concatenate(blocks, axis=1)
    logger.debug("Decomposition matrix for order %s has condition %s", order, np.linalg.cond(matrix))
    result = np.linalg.inv(matrix)
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class Decomposition:
    """The irreducible parts of one order-l tensor, highest rank first."""

    order: int
    parts: Tuple[IrreducibleTensor, ...]

    def __post_init__(self):
        parts = tuple(self.parts)
        ranks = tuple(p.rank for p in parts)
        if ranks != _part_ranks(self.order):
            raise ValueError(f"An order-{self.order} decomposition needs ranks {_part_ranks(self.order)}")
        if any(p.source_order != self.order for p in parts):
            raise ValueError("All parts must come from the same order")
        object.__setattr__(self, "parts", parts)

    def part(self, rank: int) -> IrreducibleTensor:
        _check_parity(self.order, rank)
        return self.parts[(self.order - rank) // 2]

    def reconstruct(self) -> SymTensor3:
        result = SymTensor3.zeros(self.order)
        for p in self.parts:
            result = result + embed(p)
        return result

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "decomposition",
            "order": self.order,
            "parts": {f"({p.source_order},{p.rank})": p.data.coeffs.tolist() for p in self.parts},
        }


def decompose(m: SymTensor3, max_order: int = MAX_DECOMPOSITION_ORDER) -> Decomposition:
    """Split `m` into its irreducible parts."""
    if m.order > max_order:
        raise ValueError(f"Decomposition supports orders up to {max_order}, got {m.order}")
    coords = _decomposition_solver(m.order) @ m.coeffs
    parts = []
    start = 0
    for rank in _part_ranks(m.order):
        size = 2 * rank + 1
        parts.append(IrreducibleTensor.from_coordinates(m.order, rank, coords[start : start + size]))
        start += size
    return Decomposition(m.order, tuple(parts))


def detrace(t: SymTensor3) -> IrreducibleTensor:
    """The top-rank traceless part of `t`."""
    return decompose(t, max_order=max(t.order, MAX_DECOMPOSITION_ORDER)).parts[0]


def decompose_moments(
    moments: MomentSet, flavor: Optional[Flavor] = None
) -> Dict[PartKey, IrreducibleTensor]:
    """All irreducible parts of a moment set keyed by (l, p).

    For spherical moments only the p = l parts are independent, the lower parts of
    order l equal the parts of order l - 2, so only those are kept."""
    flavor = flavor or moments.flavor
    result = {}
    for order in range(moments.lmax + 1):
        for part in decompose(moments[order]).parts:
            if flavor == Flavor.SPHERICAL and part.rank != order:
                continue
            result[part.key] = part
    return result


def decomposition_from_json(obj: dict) -> Decomposition:
    check_schema(obj, "decomposition", ("order", "parts"))
    order = int(obj["order"])
    parts = []
    for rank in _part_ranks(order):
        key = f"({order},{rank})"
        if key not in obj["parts"]:
            raise ValueError(f"Decomposition is missing the part {key}")
        parts.append(IrreducibleTensor(order, rank, SymTensor3(rank, obj["parts"][key])))
    return Decomposition(order, tuple(parts))


def random_irreducible(order: int, rank: int, rng: np.random.Generator) -> IrreducibleTensor:
    """A random traceless part: a random symmetric tensor, detraced."""
    _check_parity(order, rank)
    return IrreducibleTensor(order, rank, detrace(SymTensor3.random(rank, rng)).data)


def dof_count(order: int) -> int:
    return sum(2 * rank + 1 for rank in _part_ranks(order))


def part_keys(lmax: int, flavor: Flavor = Flavor.VOLUMETRIC) -> List[PartKey]:
    """Part keys of a moment set up to lmax, sorted by (l, p) ascending."""
    result = []
    for order in range(lmax + 1):
        for rank in sorted(_part_ranks(order)):
            if flavor == Flavor.SPHERICAL and rank != order:
                continue
            result.append((order, rank))
    return result
