"""Greedy selection of functionally independent invariants.

Invariants are scanned in order. Each one contributes the row of its partial
derivatives with respect to all tensor coordinates, evaluated at one random point, and
is accepted iff that row increases the rank of the Jacobian built so far. A polynomial
dependence among invariants makes the rows dependent everywhere, while independent
invariants have independent rows at almost every point.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import (
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
)

import numpy as np

from momenta.irreducible import detrace, traceless_basis
from momenta.patterns import ContractionPattern, TensorSymbol
from momenta.tensor_core import DEFAULT_MAX_RANK, SymTensor3, UnknownSymbol, num_coeffs

logger = logging.getLogger(__name__)

Assignment = Mapping[TensorSymbol, SymTensor3]


class TargetNotReached(RuntimeError):
    """Raised when the candidates run out before the requested number of invariants
    was accepted."""


class SelectionUnstable(RuntimeError):
    """Raised when the verification point accepts a different number of invariants."""


@dataclass(frozen=True)
class SelectionConfig:
    """Parameters of a selection run.

    Attributes:
        seed: Seed of the random evaluation point.
        tol: A row is accepted iff its residual after orthogonalization exceeds
            tol * max(row norm, norm_floor).
        norm_floor: Lower bound of the row norm in the acceptance threshold, rows
            shorter than `tol * norm_floor` count as zero.
        max_candidates: Stop scanning after this many candidates.
        max_rank: The largest intermediate rank of contractions.
        verify_seed: If set, the scanned candidates are selected again at a point drawn
            with this seed and must give the same number of invariants.
        trace_path: If set, every decision is written there as a JSON line.
    """

    seed: int = 0
    tol: float = 1e-8
    norm_floor: float = 1.0
    max_candidates: int = 100000
    max_rank: int = DEFAULT_MAX_RANK
    verify_seed: Optional[int] = None
    trace_path: Optional[str] = None

    def __post_init__(self):
        if not 0.0 < self.tol < 1e-2:
            raise ValueError(f"Tolerance must be in (0, 0.01), got {self.tol}")
        if self.norm_floor <= 0.0:
            raise ValueError(f"Norm floor must be positive, got {self.norm_floor}")
        if self.max_candidates < 1:
            raise ValueError(f"max_candidates must be positive, got {self.max_candidates}")


def _kind_code(symbol: TensorSymbol) -> int:
    return 0 if symbol.kind == "M" else 1


def assign_random(symbols: Iterable[TensorSymbol], seed: int = 0) -> Dict[TensorSymbol, SymTensor3]:
    """Coefficients drawn uniformly from [-1, 1], independently per symbol so that a
    symbol gets the same tensor whatever the other symbols are. Irreducible symbols
    get the traceless part of a random tensor."""
    result = {}
    for sym in sorted(set(symbols)):
        rng = np.random.default_rng([seed, _kind_code(sym), sym.order, sym.rank])
        tensor = SymTensor3.random(sym.rank, rng)
        if sym.kind == "H":
            tensor = detrace(tensor).data
        result[sym] = tensor
    return result


@dataclass(frozen=True)
class CoordinateLayout:
    """Placement of every symbol's coordinates in a Jacobian row.

    Moment symbols use all compact coefficients. Irreducible symbols use their 2p + 1
    coordinates in `traceless_basis(p)`, since derivatives along traces are not
    defined for them.
    """

    symbols: Tuple[TensorSymbol, ...]
    offsets: Tuple[int, ...]
    sizes: Tuple[int, ...]

    @property
    def dim(self) -> int:
        return sum(self.sizes)

    def block(self, symbol: TensorSymbol) -> slice:
        try:
            k = self.symbols.index(symbol)
        except ValueError:
            raise UnknownSymbol(f"Symbol {symbol} has no coordinates in this layout")
        return slice(self.offsets[k], self.offsets[k] + self.sizes[k])

    def project(self, symbol: TensorSymbol, grad: np.ndarray) -> np.ndarray:
        """Map a gradient over compact coefficients to the symbol's coordinates."""
        if symbol.kind == "H":
            return traceless_basis(symbol.rank).T @ grad
        return grad


def coordinate_layout(symbols: Iterable[TensorSymbol]) -> CoordinateLayout:
    ordered = tuple(sorted(set(symbols)))
    sizes = tuple(
        2 * s.rank + 1 if s.kind == "H" else num_coeffs(s.rank) for s in ordered
    )
    offsets = tuple(int(v) for v in np.cumsum((0,) + sizes[:-1])) if ordered else ()
    return CoordinateLayout(ordered, offsets, sizes)


def jacobian_row(
    pattern: ContractionPattern,
    assignment: Assignment,
    layout: CoordinateLayout,
    max_rank: int = DEFAULT_MAX_RANK,
) -> np.ndarray:
    row = np.zeros(layout.dim)
    for sym in pattern.symbols:
        block = layout.block(sym)
        row[block] = layout.project(sym, pattern.gradient(assignment, sym, max_rank))
    return row


class JacobianBasis:
    """Orthonormal rows spanning the accepted Jacobian rows."""

    def __init__(self, dim: int, tol: float = 1e-8, norm_floor: float = 1.0):
        self.dim_space = dim
        self.tol = tol
        self.norm_floor = norm_floor
        self.rows: List[np.ndarray] = []

    @property
    def dim(self) -> int:
        return len(self.rows)

    def residual(self, row: np.ndarray) -> Tuple[np.ndarray, float]:
        """The part of `row` orthogonal to the basis (modified Gram-Schmidt, applied
        twice) and its norm relative to max(row norm, norm floor)."""
        r = np.array(row, dtype=float)
        for _ in range(2):
            for q in self.rows:
                r -= (q @ r) * q
        scale = max(float(np.linalg.norm(row)), self.norm_floor)
        return r, float(np.linalg.norm(r)) / scale

    def try_add(self, row: np.ndarray) -> Tuple[bool, float]:
        if row.shape != (self.dim_space,):
            raise ValueError(f"Row has shape {row.shape}, expected ({self.dim_space},)")
        r, relative = self.residual(row)
        if relative > self.tol:
            self.rows.append(r / np.linalg.norm(r))
            return True, relative
        return False, relative


@dataclass(frozen=True)
class Decision:
    pattern: ContractionPattern
    accepted: bool
    residual: float

    def to_json(self) -> dict:
        return {
            "pattern": self.pattern.to_json(),
            "residual": self.residual,
            "accepted": self.accepted,
        }


def try_accept(
    pattern: ContractionPattern,
    basis: JacobianBasis,
    assignment: Assignment,
    layout: Optional[CoordinateLayout] = None,
    max_rank: int = DEFAULT_MAX_RANK,
) -> Decision:
    """Offer the pattern's Jacobian row to the basis. Rejection is a normal outcome."""
    if layout is None:
        layout = coordinate_layout(assignment.keys())
    row = jacobian_row(pattern, assignment, layout, max_rank)
    accepted, residual = basis.try_add(row)
    logger.debug("%s %s (residual %.3g)", "Accepted" if accepted else "Rejected", pattern, residual)
    return Decision(pattern, accepted, residual)


@dataclass
class Selection:
    """The outcome of a selection run.

    Attributes:
        accepted: The accepted candidates, in scan order.
        prefilled: The prefill patterns whose rows entered the Jacobian.
        decisions: One decision per scanned candidate.
        rank: The final rank of the Jacobian, prefill rows included.
        seed: The seed of the evaluation point.
    """

    accepted: List[ContractionPattern]
    prefilled: List[ContractionPattern] = field(default_factory=list)
    decisions: List[Decision] = field(default_factory=list)
    rank: int = 0
    seed: int = 0


def _run(
    candidates: Iterable[ContractionPattern],
    target: Optional[int],
    cfg: SelectionConfig,
    prefill: Sequence[ContractionPattern],
    assignment: Assignment,
    layout: CoordinateLayout,
) -> Tuple[Selection, List[ContractionPattern]]:
    basis = JacobianBasis(layout.dim, cfg.tol, cfg.norm_floor)
    prefilled = []
    for pattern in prefill:
        if try_accept(pattern, basis, assignment, layout, cfg.max_rank).accepted:
            prefilled.append(pattern)
        else:
            logger.warning("Prefill pattern %s is dependent on the previous ones", pattern)
    selection = Selection([], prefilled, seed=cfg.seed)
    scanned = []
    if target is None or target > 0:
        for pattern in candidates:
            if len(scanned) >= cfg.max_candidates:
                logger.warning("Stopped after %s candidates", cfg.max_candidates)
                break
            scanned.append(pattern)
            decision = try_accept(pattern, basis, assignment, layout, cfg.max_rank)
            selection.decisions.append(decision)
            if decision.accepted:
                selection.accepted.append(pattern)
                logger.info("Selected invariant %s: %s", len(selection.accepted), pattern)
                if target is not None and len(selection.accepted) >= target:
                    break
    selection.rank = basis.dim
    return selection, scanned


def select(
    candidates: Iterable[ContractionPattern],
    target: Optional[int],
    cfg: SelectionConfig = SelectionConfig(),
    prefill: Sequence[ContractionPattern] = (),
    symbols: Optional[Iterable[TensorSymbol]] = None,
    assignment: Optional[Assignment] = None,
) -> Selection:
    """Scan the candidates in order and accept those that raise the Jacobian rank,
    until `target` invariants are accepted (or the candidates run out if `target` is
    None). The rows of `prefill` enter the Jacobian first.

    The coordinate space is spanned by `symbols`, by default the keys of
    `assignment` or, failing that, all symbols of the prefill and the candidates.
    """
    if symbols is None:
        if assignment is not None:
            symbols = list(assignment.keys())
        else:
            candidates = list(candidates)
            symbols = [s for p in list(prefill) + candidates for s in p.factors]
    symbols = sorted(set(symbols))
    if assignment is None:
        assignment = assign_random(symbols, cfg.seed)
    layout = coordinate_layout(symbols)

    selection, scanned = _run(candidates, target, cfg, prefill, assignment, layout)

    if cfg.trace_path:
        with open(cfg.trace_path, "w") as f:
            for decision in selection.decisions:
                f.write(json.dumps(decision.to_json()) + "\n")

    if target is not None and len(selection.accepted) < target:
        raise TargetNotReached(
            f"Accepted {len(selection.accepted)} of {target} invariants after"
            f" {len(scanned)} candidates; allow more factors or a larger total rank"
        )

    if cfg.verify_seed is not None:
        verify_assignment = assign_random(symbols, cfg.verify_seed)
        check, _ = _run(scanned, target, cfg, prefill, verify_assignment, layout)
        if len(check.accepted) != len(selection.accepted):
            logger.warning(
                "Verification with seed %s accepted %s invariants instead of %s",
                cfg.verify_seed,
                len(check.accepted),
                len(selection.accepted),
            )
            raise SelectionUnstable(
                f"Seed {cfg.seed} accepted {len(selection.accepted)} invariants, seed"
                f" {cfg.verify_seed} accepted {len(check.accepted)}"
            )
    return selection


def jacobian_rank(
    patterns: Iterable[ContractionPattern],
    assignment: Assignment,
    tol: float = 1e-8,
    norm_floor: float = 1.0,
    max_rank: int = DEFAULT_MAX_RANK,
) -> int:
    """Rank of the Jacobian of the patterns at the point `assignment`, with respect to
    the coordinates of all assigned symbols."""
    layout = coordinate_layout(assignment.keys())
    basis = JacobianBasis(layout.dim, tol, norm_floor)
    for pattern in patterns:
        basis.try_add(jacobian_row(pattern, assignment, layout, max_rank))
    return basis.dim
