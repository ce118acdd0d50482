"""Compact symmetric tensors over R^3 and tensor-network contractions."""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, int, int]
TensorLike = Union["SymTensor3", np.ndarray]

# Open indices allowed in an intermediate of a network contraction (3^12 entries).
DEFAULT_MAX_RANK = 12


class PairingNotPerfect(ValueError):
    """Raised when a pairing is not a perfect matching of the factor slots."""


class IntermediateRankExceeded(RuntimeError):
    """Raised when a contraction would need an intermediate above the rank cap."""


class UnknownSymbol(ValueError):
    """Raised when a derivative is requested for a symbol that is not a factor."""


def num_coeffs(order: int) -> int:
    return (order + 1) * (order + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(order: int) -> Tuple[MultiIndex, ...]:
    """All exponent triples (a, b, c) with a + b + c = order, descending in a, then
    in b. This is the storage order of compact coefficients."""
    return tuple(
        (a, b, order - a - b)
        for a in range(order, -1, -1)
        for b in range(order - a, -1, -1)
    )


def coeff_index(mi: Sequence[int]) -> int:
    """Position of the multi-index `mi` in the compact storage order."""
    if len(mi) != 3 or any(int(e) < 0 for e in mi):
        raise ValueError(f"Invalid multi-index: {tuple(mi)}")
    order = sum(int(e) for e in mi)
    rest = order - int(mi[0])
    return rest * (rest + 1) // 2 + (rest - int(mi[1]))


@lru_cache(maxsize=None)
def dense_index_map(order: int) -> np.ndarray:
    """Compact coefficient index of every entry of a dense tensor of this order."""
    if order == 0:
        result = np.zeros((), dtype=np.intp)
    else:
        idx = np.indices((3,) * order)
        a = np.sum(idx == 0, axis=0)
        b = np.sum(idx == 1, axis=0)
        rest = order - a
        result = (rest * (rest + 1) // 2 + (rest - b)).astype(np.intp)
    result.setflags(write=False)
    return result


@lru_cache(maxsize=None)
def _representatives(order: int) -> Tuple[np.ndarray, ...]:
    """Dense index tuples (0,..,0,1,..,1,2,..,2) for every compact coefficient, in a
    form usable for fancy indexing."""
    rows = [(0,) * a + (1,) * b + (2,) * c for a, b, c in multi_indices(order)]
    arr = np.array(rows, dtype=np.intp).reshape(len(rows), order)
    return tuple(arr[:, k] for k in range(order))


@lru_cache(maxsize=None)
def multiplicities(order: int) -> np.ndarray:
    """Number of dense entries sharing each compact coefficient."""
    result = np.array(
        [
            math.factorial(order)
            // (math.factorial(a) * math.factorial(b) * math.factorial(c))
            for a, b, c in multi_indices(order)
        ],
        dtype=float,
    )
    result.setflags(write=False)
    return result


@dataclass(frozen=True, eq=False)
class SymTensor3:
    """A totally symmetric tensor over R^3 stored by its independent coefficients.

    Attributes:
        order: The number of indices.
        coeffs: One value per exponent triple, in the order of `multi_indices(order)`.
            The dense entry at (i1, ..., il) is the coefficient of the multiset of
            the indices, no multiplicity weighting is applied.
    """

    order: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.order < 0:
            raise ValueError(f"Tensor order must be non-negative, got {self.order}")
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        if coeffs.shape != (num_coeffs(self.order),):
            raise ValueError(
                f"An order-{self.order} symmetric tensor needs"
                f" {num_coeffs(self.order)} coefficients, got {coeffs.size}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @staticmethod
    def zeros(order: int) -> "SymTensor3":
        return SymTensor3(order, np.zeros(num_coeffs(order)))

    @staticmethod
    def scalar(value: float) -> "SymTensor3":
        return SymTensor3(0, [value])

    @staticmethod
    def delta() -> "SymTensor3":
        """The Kronecker delta as an order-2 tensor."""
        return SymTensor3.from_dense(np.eye(3))

    @staticmethod
    def basis(order: int, index: int) -> "SymTensor3":
        """The tensor with a single unit compact coefficient."""
        coeffs = np.zeros(num_coeffs(order))
        coeffs[index] = 1.0
        return SymTensor3(order, coeffs)

    @staticmethod
    def random(order: int, rng: np.random.Generator) -> "SymTensor3":
        """Coefficients drawn uniformly from [-1, 1]."""
        return SymTensor3(order, rng.uniform(-1.0, 1.0, num_coeffs(order)))

    @staticmethod
    def from_dense(dense: np.ndarray, check: bool = False) -> "SymTensor3":
        """Build a tensor from a dense array that is already symmetric. Use
        `symmetrize` for arbitrary arrays."""
        dense = np.asarray(dense, dtype=float)
        if any(dim != 3 for dim in dense.shape):
            raise ValueError(f"Dense tensor must have all dimensions 3, got {dense.shape}")
        order = dense.ndim
        if order == 0:
            return SymTensor3(0, [float(dense)])
        result = SymTensor3(order, dense[_representatives(order)])
        if check and not np.allclose(result.dense(), dense, rtol=1e-12, atol=1e-12):
            raise ValueError("Dense tensor is not symmetric")
        return result

    def dense(self) -> np.ndarray:
        return np.asarray(self.coeffs[dense_index_map(self.order)])

    @property
    def value(self) -> float:
        if self.order != 0:
            raise ValueError(f"Only order-0 tensors have a scalar value, got order {self.order}")
        return float(self.coeffs[0])

    def __getitem__(self, mi: Sequence[int]) -> float:
        if sum(mi) != self.order:
            raise ValueError(f"Multi-index {tuple(mi)} does not match order {self.order}")
        return float(self.coeffs[coeff_index(mi)])

    def trace(self) -> "SymTensor3":
        """Contraction of the first two indices."""
        if self.order < 2:
            raise ValueError(f"Cannot take the trace of an order-{self.order} tensor")
        return SymTensor3.from_dense(np.trace(self.dense(), axis1=0, axis2=1))

    def norm(self) -> float:
        """The Frobenius norm of the dense tensor."""
        return float(np.sqrt(np.sum(multiplicities(self.order) * self.coeffs**2)))

    def allclose(self, other: "SymTensor3", rtol: float = 1e-10, atol: float = 1e-12) -> bool:
        return self.order == other.order and bool(
            np.allclose(self.coeffs, other.coeffs, rtol=rtol, atol=atol)
        )

    def _check_same_order(self, other: "SymTensor3") -> None:
        if self.order != other.order:
            raise ValueError(f"Order mismatch: {self.order} vs {other.order}")

    def __add__(self, other: "SymTensor3") -> "SymTensor3":
        self._check_same_order(other)
        return SymTensor3(self.order, self.coeffs + other.coeffs)

    def __sub__(self, other: "SymTensor3") -> "SymTensor3":
        self._check_same_order(other)
        return SymTensor3(self.order, self.coeffs - other.coeffs)

    def __mul__(self, factor: float) -> "SymTensor3":
        return SymTensor3(self.order, self.coeffs * float(factor))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor3":
        return SymTensor3(self.order, -self.coeffs)

    def __repr__(self) -> str:
        return f"SymTensor3(order={self.order}, coeffs={self.coeffs.tolist()})"


@dataclass(frozen=True, eq=False)
class Rotation3:
    """An orthogonal 3x3 matrix, a proper rotation (det = +1) or a rotation combined
    with a reflection (det = -1)."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=float)
        if matrix.shape != (3, 3):
            raise ValueError(f"Rotation matrix must be 3x3, got {matrix.shape}")
        if not np.allclose(matrix.T @ matrix, np.eye(3), rtol=0.0, atol=1e-12):
            raise ValueError("Rotation matrix is not orthogonal")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def det(self) -> int:
        return 1 if np.linalg.det(self.matrix) > 0 else -1

    @property
    def inverse(self) -> "Rotation3":
        return Rotation3(self.matrix.T)

    @staticmethod
    def identity() -> "Rotation3":
        return Rotation3(np.eye(3))

    @staticmethod
    def about_axis(axis: Sequence[float], angle: float) -> "Rotation3":
        """A proper rotation by `angle` radians around `axis` (Rodrigues formula)."""
        u = np.asarray(axis, dtype=float)
        u = u / np.linalg.norm(u)
        k = np.array([[0.0, -u[2], u[1]], [u[2], 0.0, -u[0]], [-u[1], u[0], 0.0]])
        return Rotation3(np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k))

    @staticmethod
    def random(rng: np.random.Generator, proper: bool = True) -> "Rotation3":
        """A Haar-distributed random orthogonal matrix with the requested determinant."""
        q, r = np.linalg.qr(rng.standard_normal((3, 3)))
        q = q * np.sign(np.diag(r))
        if (np.linalg.det(q) > 0) != proper:
            q[:, 0] = -q[:, 0]
        return Rotation3(q)


@dataclass(frozen=True)
class Pairing:
    """A perfect matching of the 1-based slot positions of a factor product.

    The slots of the factors are numbered consecutively: the first factor owns
    positions 1..n1, the second n1+1..n1+n2 and so on. Pairs are stored sorted.
    """

    pairs: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        normalized = []
        for pair in self.pairs:
            if len(pair) != 2:
                raise PairingNotPerfect(f"Not a pair: {tuple(pair)}")
            a, b = sorted((int(pair[0]), int(pair[1])))
            if a < 1 or a == b:
                raise PairingNotPerfect(f"Invalid pair: ({pair[0]}, {pair[1]})")
            normalized.append((a, b))
        normalized.sort()
        positions = [p for pair in normalized for p in pair]
        if len(set(positions)) != len(positions):
            raise PairingNotPerfect(f"A position is paired twice in {normalized}")
        object.__setattr__(self, "pairs", tuple(normalized))

    @property
    def size(self) -> int:
        return 2 * len(self.pairs)

    def validate(self, num_positions: int) -> None:
        """Check that the pairing covers exactly the positions 1..num_positions."""
        positions = {p for pair in self.pairs for p in pair}
        if positions != set(range(1, num_positions + 1)):
            raise PairingNotPerfect(
                f"Pairing {self} is not a perfect matching of {num_positions} positions"
            )

    def partner_map(self) -> Dict[int, int]:
        result = {}
        for a, b in self.pairs:
            result[a] = b
            result[b] = a
        return result

    @staticmethod
    def from_labels(labels: Sequence[Sequence[int]]) -> "Pairing":
        """Build a pairing from per-factor label lists, where the two slots of a pair
        carry the same label, e.g. [(1, 1, 2), (2, 3, 3)]."""
        positions: Dict[int, List[int]] = {}
        pos = 0
        for factor_labels in labels:
            for label in factor_labels:
                pos += 1
                positions.setdefault(int(label), []).append(pos)
        pairs = []
        for label, where in positions.items():
            if len(where) != 2:
                raise PairingNotPerfect(
                    f"Label {label} must appear exactly twice, appears {len(where)} times"
                )
            pairs.append((where[0], where[1]))
        return Pairing(tuple(pairs))

    def to_labels(self, ranks: Sequence[int]) -> Tuple[Tuple[int, ...], ...]:
        """Per-factor sorted label tuples, labels numbered by first appearance."""
        self.validate(sum(ranks))
        partner = self.partner_map()
        label_of: Dict[int, int] = {}
        next_label = 1
        for pos in range(1, sum(ranks) + 1):
            if pos not in label_of:
                label_of[pos] = label_of[partner[pos]] = next_label
                next_label += 1
        result = []
        start = 1
        for rank in ranks:
            result.append(tuple(sorted(label_of[p] for p in range(start, start + rank))))
            start += rank
        return tuple(result)

    def __str__(self) -> str:
        return "".join(f"({a},{b})" for a, b in self.pairs)


def _as_dense(t: TensorLike) -> np.ndarray:
    if isinstance(t, SymTensor3):
        return t.dense()
    return np.asarray(t, dtype=float)


def rotate(t: SymTensor3, a: Rotation3) -> SymTensor3:
    """Apply the rotation to every index: T'_{i..} = A_{i j} ... T_{j..}."""
    dense = t.dense()
    for axis in range(t.order):
        dense = np.moveaxis(np.tensordot(a.matrix, dense, axes=([1], [axis])), 0, axis)
    return SymTensor3.from_dense(dense)


def outer(t: TensorLike, u: TensorLike) -> np.ndarray:
    """The tensor product as a dense array of rank n + m."""
    return np.multiply.outer(_as_dense(t), _as_dense(u))


def symmetrize(dense: np.ndarray, max_rank: int = DEFAULT_MAX_RANK) -> SymTensor3:
    """Average over all index permutations, i.e. over all dense entries that share a
    multiset of indices."""
    dense = np.asarray(dense, dtype=float)
    order = dense.ndim
    if order > max_rank:
        raise IntermediateRankExceeded(f"Cannot symmetrize a rank-{order} tensor")
    idx = dense_index_map(order).ravel()
    n = num_coeffs(order)
    sums = np.bincount(idx, weights=dense.ravel(), minlength=n)
    counts = np.bincount(idx, minlength=n)
    return SymTensor3(order, sums / counts)


def _slot_ranges(ranks: Sequence[int]) -> List[range]:
    result = []
    start = 1
    for rank in ranks:
        result.append(range(start, start + rank))
        start += rank
    return result


def _contract_network(
    tensors: Sequence[np.ndarray],
    partner: Dict[int, int],
    ranges: Sequence[range],
    skip: Optional[int],
    max_rank: int,
) -> Tuple[np.ndarray, List[int]]:
    """Absorb the tensors left to right, summing a pair as soon as both of its slots
    are present. The factor `skip` is left out, its partner slots stay open.

    Returns the result and the list of its open slots (in axis order)."""
    acc = np.ones(())
    acc_slots: List[int] = []
    for k, tensor in enumerate(tensors):
        if k == skip:
            continue
        slots = list(ranges[k])
        present = set(acc_slots)
        present.update(slots)
        out_slots = [s for s in acc_slots + slots if partner[s] not in present]
        if len(out_slots) > max_rank:
            raise IntermediateRankExceeded(
                f"Absorbing factor {k + 1} leaves {len(out_slots)} open indices,"
                f" the cap is {max_rank}"
            )
        # einsum needs small integer labels, one per pair.
        labels: Dict[int, int] = {}

        def label(slot: int) -> int:
            return labels.setdefault(min(slot, partner[slot]), len(labels))

        acc = np.einsum(
            acc,
            [label(s) for s in acc_slots],
            tensor,
            [label(s) for s in slots],
            [label(s) for s in out_slots],
        )
        acc_slots = out_slots
    return acc, acc_slots


def contract_full(
    factors: Sequence[TensorLike],
    pairing: Pairing,
    max_rank: int = DEFAULT_MAX_RANK,
) -> float:
    """Evaluate the full contraction of the factor product given by `pairing`."""
    tensors = [_as_dense(f) for f in factors]
    ranks = [t.ndim for t in tensors]
    pairing.validate(sum(ranks))
    result, open_slots = _contract_network(
        tensors, pairing.partner_map(), _slot_ranges(ranks), None, max_rank
    )
    assert not open_slots
    return float(result)


def _default_symbols(factors: Sequence[TensorLike]) -> List[int]:
    """Group factors by object identity, naming each group by its first position."""
    result = []
    for k, f in enumerate(factors):
        first = next(j for j in range(k + 1) if factors[j] is f)
        result.append(first)
    return result


def gradient(
    factors: Sequence[SymTensor3],
    pairing: Pairing,
    wrt: Hashable,
    symbols: Optional[Sequence[Hashable]] = None,
    max_rank: int = DEFAULT_MAX_RANK,
) -> np.ndarray:
    """Derivative of the contraction value with respect to every compact coefficient
    of the symbol `wrt`.

    `symbols` names the factors, factors with equal names are occurrences of the same
    tensor. By default factors are grouped by identity and named by the position of
    their first occurrence."""
    if symbols is None:
        symbols = _default_symbols(factors)
    if len(symbols) != len(factors):
        raise ValueError(f"Got {len(symbols)} symbols for {len(factors)} factors")
    occurrences = [k for k, s in enumerate(symbols) if s == wrt]
    if not occurrences:
        raise UnknownSymbol(f"Symbol {wrt!r} is not among the factors")
    tensors = [_as_dense(f) for f in factors]
    ranks = [t.ndim for t in tensors]
    pairing.validate(sum(ranks))
    partner = pairing.partner_map()
    ranges = _slot_ranges(ranks)

    order = ranks[occurrences[0]]
    index_map = dense_index_map(order).ravel()
    result = np.zeros(num_coeffs(order))
    for k in occurrences:
        if ranks[k] != order:
            raise ValueError(f"Occurrences of {wrt!r} have different orders")
        env, open_slots = _contract_network(
            tensors, partner, ranges, skip=k, max_rank=max_rank + order
        )
        # Reorder the environment to the slot order of the removed factor. Pairs that
        # are traces of the removed factor contribute a delta.
        first = ranges[k].start
        operands: List = [env, [partner[s] - first for s in open_slots]]
        for s in ranges[k]:
            if partner[s] in ranges[k] and s < partner[s]:
                operands += [np.eye(3), [s - first, partner[s] - first]]
        operands.append(list(range(order)))
        full = np.einsum(*operands)
        result += np.bincount(index_map, weights=np.ravel(full), minlength=result.size)
    return result


def d_contract(
    factors: Sequence[SymTensor3],
    pairing: Pairing,
    wrt: Tuple[Hashable, Sequence[int]],
    symbols: Optional[Sequence[Hashable]] = None,
    max_rank: int = DEFAULT_MAX_RANK,
) -> float:
    """Partial derivative of the contraction value with respect to one independent
    compact coefficient, `wrt = (symbol, multi_index)`."""
    symbol, mi = wrt
    grad = gradient(factors, pairing, symbol, symbols=symbols, max_rank=max_rank)
    order = sum(mi)
    if grad.size != num_coeffs(order) or any(e < 0 for e in mi):
        raise UnknownSymbol(f"Multi-index {tuple(mi)} does not belong to symbol {symbol!r}")
    return float(grad[coeff_index(mi)])
