"""Invariant sets built from irreducible parts of moment tensors.

Every irreducible part contributes its pure invariants. Mixed invariants couple pairs
of parts, which fixes their relative orientation: the specific basis anchors one robust
part to every other part, the minimal flexible set couples all pairs so that it stays
complete when some parts vanish.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from itertools import combinations
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from momenta.independence import (
    SelectionConfig,
    TargetNotReached,
    select,
)
from momenta.irreducible import IrreducibleTensor, PartKey, decompose_moments, dof_count
from momenta.moments import Flavor, FlavorMismatch, MomentSet
from momenta.patterns import ContractionPattern, TensorSymbol, iter_patterns
from momenta.tensor_core import SymTensor3
from momenta.utils import SCHEMA, check_schema

logger = logging.getLogger(__name__)

DEFAULT_ROBUST: PartKey = (2, 2)
VANISHING_THRESHOLD = 1e-10


class NoRobustCandidate(RuntimeError):
    """Raised when every part of rank 2 or more vanishes, so no specific basis exists.
    The minimal flexible set still works for such inputs."""


class Mode(Enum):
    SPECIFIC = "specific"
    MINIMAL = "minimal"
    LANGBEIN = "langbein"

    @staticmethod
    def from_string(s: str) -> "Mode":
        s = s.lower()
        if s in ("specific", "basis"):
            return Mode.SPECIFIC
        elif s in ("minimal", "flexible"):
            return Mode.MINIMAL
        elif s in ("langbein", "moments"):
            return Mode.LANGBEIN
        else:
            raise ValueError(f"Unsupported mode: {s}")

    def __str__(self):
        return str(self.value)


def pure_count(rank: int) -> int:
    """Number of independent invariants of a single traceless tensor of this rank."""
    return 1 if rank <= 1 else 2 * rank - 2


def mixed_count(rank_a: int, rank_b: int) -> int:
    """Number of mixed invariants that fix the relative orientation of two parts."""
    if rank_a == 0 or rank_b == 0:
        return 0
    if rank_a == 1 and rank_b == 1:
        return 1
    if rank_a == 1 or rank_b == 1:
        return 2
    return 3


def irreducible_symbols(lmax: int, flavor: Flavor = Flavor.VOLUMETRIC) -> List[TensorSymbol]:
    """Irreducible parts up to lmax ordered by (l, p). For spherical functions only
    the top part of every order is independent."""
    result = []
    for order in range(lmax + 1):
        for rank in range(order % 2, order + 1, 2):
            if flavor == Flavor.SPHERICAL and rank != order:
                continue
            result.append(TensorSymbol.irreducible(order, rank))
    return result


def moment_symbols(lmax: int) -> List[TensorSymbol]:
    return [TensorSymbol.moment(order) for order in range(lmax + 1)]


@dataclass(frozen=True)
class GenerationSettings:
    """Candidate pool bounds for the selections behind an invariant set.

    Attributes:
        selection: Parameters of every selection run.
        max_exponent: The largest number of factors of a pure candidate.
        max_mixed_factors: The largest number of factors of a mixed candidate.
        max_mixed_rank: The largest total rank of a mixed candidate.
        escalate: Retry a failed mixed selection once with larger bounds.
    """

    selection: SelectionConfig = SelectionConfig()
    max_exponent: int = 10
    max_mixed_factors: int = 6
    max_mixed_rank: int = 24
    escalate: bool = True


def _canonical_pure_symbol(rank: int) -> TensorSymbol:
    return TensorSymbol.irreducible(rank, rank)


@lru_cache(maxsize=None)
def _pure_shapes(rank: int, settings: GenerationSettings) -> Tuple[ContractionPattern, ...]:
    """Pure invariants of a generic rank-p traceless tensor. Shapes only depend on the
    rank, so they are selected once over a stand-in symbol."""
    sym = _canonical_pure_symbol(rank)
    candidates = iter_patterns([sym], settings.max_exponent, max_open=settings.selection.max_rank)
    selection = select(candidates, pure_count(rank), settings.selection, symbols=[sym])
    logger.info("Selected %s pure invariants of rank %s", len(selection.accepted), rank)
    return tuple(selection.accepted)


def _mixed_stand_ins(rank_a: int, rank_b: int) -> Tuple[TensorSymbol, TensorSymbol]:
    a = TensorSymbol.irreducible(rank_a, rank_a)
    if rank_a == rank_b:
        return a, TensorSymbol.irreducible(rank_b + 2, rank_b)
    return a, TensorSymbol.irreducible(rank_b, rank_b)


@lru_cache(maxsize=None)
def _mixed_shapes(
    rank_a: int, rank_b: int, settings: GenerationSettings
) -> Tuple[ContractionPattern, ...]:
    """Mixed invariants of two generic parts of ranks rank_a <= rank_b, selected with
    the pure invariants of both prefilled."""
    target = mixed_count(rank_a, rank_b)
    if target == 0:
        return ()
    a, b = _mixed_stand_ins(rank_a, rank_b)
    prefill = [
        p.replace_symbols({_canonical_pure_symbol(s.rank): s})
        for s in (a, b)
        for p in _pure_shapes(s.rank, settings)
    ]
    max_factors = settings.max_mixed_factors
    max_total_rank = settings.max_mixed_rank
    while True:
        candidates = iter_patterns(
            [a, b],
            max_factors,
            max_total_rank,
            require_all=True,
            max_open=settings.selection.max_rank,
        )
        try:
            selection = select(
                candidates, target, settings.selection, prefill=prefill, symbols=[a, b]
            )
            break
        except TargetNotReached:
            if not settings.escalate or max_factors > settings.max_mixed_factors:
                raise
            max_factors += 2
            max_total_rank += 12
            logger.warning(
                "Not enough mixed invariants for ranks %s and %s, retrying with %s"
                " factors and total rank %s",
                rank_a,
                rank_b,
                max_factors,
                max_total_rank,
            )
    logger.info(
        "Selected %s mixed invariants of ranks %s and %s",
        len(selection.accepted),
        rank_a,
        rank_b,
    )
    return tuple(selection.accepted)


def pure_invariants(
    symbol: TensorSymbol, settings: GenerationSettings = GenerationSettings()
) -> List[ContractionPattern]:
    stand_in = _canonical_pure_symbol(symbol.rank)
    return [p.replace_symbols({stand_in: symbol}) for p in _pure_shapes(symbol.rank, settings)]


def mixed_invariants(
    first: TensorSymbol,
    second: TensorSymbol,
    settings: GenerationSettings = GenerationSettings(),
) -> List[ContractionPattern]:
    """Mixed invariants of two distinct symbols, none if either has rank 0."""
    if first == second:
        raise ValueError(f"Mixed invariants need two distinct symbols, got {first} twice")
    low, high = sorted((first, second))
    a, b = _mixed_stand_ins(low.rank, high.rank)
    return [
        p.replace_symbols({a: low, b: high})
        for p in _mixed_shapes(low.rank, high.rank, settings)
    ]


@dataclass(frozen=True)
class InvariantMember:
    """A member of an invariant set.

    Attributes:
        pattern: The contraction pattern.
        role: "pure" or "mixed".
        anchors: The symbol of a pure member, the two coupled symbols of a mixed one.
    """

    pattern: ContractionPattern
    role: str
    anchors: Tuple[TensorSymbol, ...]

    def to_json(self) -> dict:
        result = self.pattern.to_json()
        result["role"] = self.role
        result["anchors"] = [s.to_json() for s in self.anchors]
        return result

    @staticmethod
    def from_json(obj: dict) -> "InvariantMember":
        return InvariantMember(
            ContractionPattern.from_json(obj),
            str(obj.get("role", "pure")),
            tuple(TensorSymbol.from_json(s) for s in obj.get("anchors", [])),
        )


@dataclass
class InvariantSet:
    """An ordered set of invariants of moment tensors up to `lmax`."""

    mode: Mode
    flavor: Flavor
    lmax: int
    robust: Optional[TensorSymbol] = None
    seed: int = 0
    members: List[InvariantMember] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def patterns(self) -> List[ContractionPattern]:
        return [m.pattern for m in self.members]

    def counts(self) -> "CountRow":
        pure = sum(1 for m in self.members if m.role == "pure")
        return CountRow(pure, len(self.members) - pure)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "kind": "invariant_set",
            "mode": str(self.mode),
            "flavor": str(self.flavor),
            "lmax": self.lmax,
            "robust": None if self.robust is None else [self.robust.order, self.robust.rank],
            "seed": self.seed,
            "members": [m.to_json() for m in self.members],
        }

    @staticmethod
    def from_json(obj: dict) -> "InvariantSet":
        check_schema(obj, "invariant_set", ("mode", "flavor", "lmax", "members"))
        robust = obj.get("robust")
        return InvariantSet(
            Mode.from_string(obj["mode"]),
            Flavor.from_string(obj["flavor"]),
            int(obj["lmax"]),
            None if robust is None else TensorSymbol.irreducible(int(robust[0]), int(robust[1])),
            int(obj.get("seed", 0)),
            [InvariantMember.from_json(m) for m in obj["members"]],
        )


def _pure_members(symbols: Sequence[TensorSymbol], settings: GenerationSettings) -> List[InvariantMember]:
    return [
        InvariantMember(p, "pure", (s,)) for s in symbols for p in pure_invariants(s, settings)
    ]


def _mixed_members(
    a: TensorSymbol, b: TensorSymbol, settings: GenerationSettings
) -> List[InvariantMember]:
    return [InvariantMember(p, "mixed", (a, b)) for p in mixed_invariants(a, b, settings)]


def _is_vanishing(norm: float, total: float, threshold: float) -> bool:
    return norm <= threshold * max(1.0, total)


def choose_robust(
    parts: Mapping[PartKey, IrreducibleTensor], threshold: float = VANISHING_THRESHOLD
) -> PartKey:
    """Pick the part to anchor a specific basis on: the lowest-ranked part of rank 2 or
    more whose norm exceeds the mean norm of all parts, otherwise the largest one."""
    norms = {key: part.norm() for key, part in parts.items()}
    if not norms:
        raise NoRobustCandidate("No irreducible parts were given")
    total = float(np.sqrt(sum(n**2 for n in norms.values())))
    mean = sum(norms.values()) / len(norms)
    eligible = sorted(
        (key for key, n in norms.items() if key[1] >= 2 and not _is_vanishing(n, total, threshold)),
        key=lambda k: TensorSymbol.irreducible(*k).sort_key,
    )
    if not eligible:
        raise NoRobustCandidate(
            "All parts of rank 2 or more vanish; use the minimal flexible set instead"
        )
    for key in eligible:
        if norms[key] > mean:
            logger.info("Robust part %s has norm %s (mean %s)", key, norms[key], mean)
            return key
    best = max(eligible, key=lambda k: norms[k])
    logger.info("No part exceeds the mean norm %s, using the largest one %s", mean, best)
    return best


def specific_flexible_basis(
    lmax: int,
    flavor: Flavor = Flavor.VOLUMETRIC,
    robust: Optional[PartKey] = None,
    parts: Optional[Mapping[PartKey, IrreducibleTensor]] = None,
    settings: GenerationSettings = GenerationSettings(),
    threshold: float = VANISHING_THRESHOLD,
) -> InvariantSet:
    """All pure invariants plus the mixed invariants of the robust part with every
    other part of rank 1 or more.

    The robust part is `robust` if given, otherwise it is chosen from the reference
    `parts` with `choose_robust`, or (2, 2) without reference data."""
    symbols = irreducible_symbols(lmax, flavor)
    members = _pure_members(symbols, settings)
    robust_symbol = None
    if lmax >= 2:
        if robust is None:
            robust = choose_robust(parts, threshold) if parts is not None else DEFAULT_ROBUST
        robust_symbol = TensorSymbol.irreducible(*robust)
        if robust_symbol not in symbols or robust_symbol.rank < 2:
            raise ValueError(
                f"Robust part {robust} must be a part of rank 2 or more up to order {lmax}"
            )
        if parts is not None and robust in parts:
            total = float(np.sqrt(sum(p.norm() ** 2 for p in parts.values())))
            if _is_vanishing(parts[robust].norm(), total, threshold):
                raise NoRobustCandidate(
                    f"The robust part {robust} vanishes; use the minimal flexible set instead"
                )
        for sym in symbols:
            if sym != robust_symbol and sym.rank >= 1:
                members += _mixed_members(robust_symbol, sym, settings)
    return InvariantSet(
        Mode.SPECIFIC, flavor, lmax, robust_symbol, settings.selection.seed, members
    )


def minimal_flexible_set(
    lmax: int,
    flavor: Flavor = Flavor.VOLUMETRIC,
    settings: GenerationSettings = GenerationSettings(),
) -> InvariantSet:
    """All pure invariants plus the mixed invariants of every pair of parts of rank 1
    or more."""
    symbols = irreducible_symbols(lmax, flavor)
    members = _pure_members(symbols, settings)
    coupled = [s for s in symbols if s.rank >= 1]
    for a, b in combinations(coupled, 2):
        members += _mixed_members(a, b, settings)
    return InvariantSet(Mode.MINIMAL, flavor, lmax, None, settings.selection.seed, members)


def langbein_count(lmax: int) -> int:
    """Number of independent invariants of all moment tensors up to lmax."""
    if lmax == 0:
        return 1
    if lmax == 1:
        return 2
    return sum(dof_count(order) for order in range(lmax + 1)) - 3


def langbein_basis(
    lmax: int, settings: GenerationSettings = GenerationSettings()
) -> InvariantSet:
    """Independent invariants selected directly over the moment tensors, including
    traces within factors."""
    symbols = moment_symbols(lmax)
    candidates = iter_patterns(
        symbols,
        settings.max_exponent,
        settings.max_mixed_rank,
        max_open=settings.selection.max_rank,
    )
    selection = select(candidates, langbein_count(lmax), settings.selection, symbols=symbols)
    members = [
        InvariantMember(p, "pure" if p.is_pure else "mixed", p.symbols)
        for p in selection.accepted
    ]
    return InvariantSet(Mode.LANGBEIN, Flavor.VOLUMETRIC, lmax, None, settings.selection.seed, members)


def build_invariant_set(
    lmax: int,
    flavor: Flavor,
    mode: Mode,
    robust: Optional[PartKey] = None,
    parts: Optional[Mapping[PartKey, IrreducibleTensor]] = None,
    settings: GenerationSettings = GenerationSettings(),
    threshold: float = VANISHING_THRESHOLD,
) -> InvariantSet:
    if mode == Mode.SPECIFIC:
        return specific_flexible_basis(lmax, flavor, robust, parts, settings, threshold)
    elif mode == Mode.MINIMAL:
        return minimal_flexible_set(lmax, flavor, settings)
    else:
        if flavor != Flavor.VOLUMETRIC:
            raise FlavorMismatch("Moment-based sets are only built for volumetric moments")
        return langbein_basis(lmax, settings)


def invariant_assignment(
    moments: MomentSet, flavor: Optional[Flavor] = None
) -> Dict[TensorSymbol, SymTensor3]:
    """Tensors for every symbol an invariant of these moments can use."""
    result: Dict[TensorSymbol, SymTensor3] = {
        TensorSymbol.moment(order): moments[order] for order in range(moments.lmax + 1)
    }
    for (order, rank), part in decompose_moments(moments, flavor).items():
        result[TensorSymbol.irreducible(order, rank)] = part.data
    return result


def evaluate_set(invariants: InvariantSet, moments: MomentSet) -> np.ndarray:
    """The descriptor vector of the moments, one value per member in order."""
    if invariants.flavor != moments.flavor:
        raise FlavorMismatch(
            f"The set is for {invariants.flavor} moments, got {moments.flavor} moments"
        )
    if invariants.lmax > moments.lmax:
        raise ValueError(
            f"The set needs moments up to order {invariants.lmax}, got {moments.lmax}"
        )
    assignment = invariant_assignment(moments.truncated(invariants.lmax))
    max_rank = max(12, max((p.total_rank for p in invariants.patterns), default=0))
    return np.array([m.pattern.evaluate(assignment, max_rank) for m in invariants.members])


def descriptor_to_csv(invariants: InvariantSet, values: Sequence[float]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["index", "role", "pattern", "value"])
    for i, (member, value) in enumerate(zip(invariants.members, values), start=1):
        writer.writerow([i, member.role, str(member.pattern), repr(float(value))])
    return out.getvalue()


@dataclass(frozen=True)
class CountRow:
    pure: int
    mixed: int

    @property
    def total(self) -> int:
        return self.pure + self.mixed


@dataclass
class CountTable:
    """Expected counts per maximal order."""

    flavor: Flavor
    mode: Mode
    rows: Dict[int, CountRow] = field(default_factory=dict)

    def format(self) -> str:
        lines = [f"{'lmax':>4} {'pure':>6} {'mixed':>6} {'total':>6}"]
        for lmax, row in self.rows.items():
            lines.append(f"{lmax:>4} {row.pure:>6} {row.mixed:>6} {row.total:>6}")
        return "\n".join(lines) + "\n"


def order_counts(order: int) -> CountRow:
    """Counts of a basis for a single moment tensor of this order: the pure invariants
    of its parts plus the top part anchored to the other parts of rank 1 or more."""
    ranks = list(range(order, -1, -2))
    pure = sum(pure_count(r) for r in ranks)
    mixed = 0
    if order >= 2:
        mixed = sum(mixed_count(order, r) for r in ranks[1:])
    return CountRow(pure, mixed)


def expected_counts(lmax: int, flavor: Flavor, mode: Mode) -> CountRow:
    if mode == Mode.LANGBEIN:
        return CountRow(langbein_count(lmax), 0)
    symbols = irreducible_symbols(lmax, flavor)
    pure = sum(pure_count(s.rank) for s in symbols)
    ranks = [s.rank for s in symbols if s.rank >= 1]
    if mode == Mode.SPECIFIC:
        if lmax < 2:
            return CountRow(pure, 0)
        # One part of rank >= 2 is anchored to all others, the count does not depend
        # on which one.
        others = list(ranks)
        others.remove(2)
        return CountRow(pure, sum(mixed_count(2, r) for r in others))
    return CountRow(pure, sum(mixed_count(a, b) for a, b in combinations(ranks, 2)))


def count_table(max_lmax: int, flavor: Flavor, mode: Mode) -> CountTable:
    return CountTable(
        flavor, mode, {lmax: expected_counts(lmax, flavor, mode) for lmax in range(max_lmax + 1)}
    )


_PUBLISHED_SPHERICAL_MINIMAL = (1, 3, 8, 20, 37, 59)


def published_minimal_count(lmax: int, flavor: Flavor) -> Optional[int]:
    """Published sizes of the minimal flexible set, kept for reference. For even lmax
    (volumetric) and for the spherical sequence they disagree with the counting rules
    that `expected_counts` and the generated sets follow: the even formula gives 12 at
    lmax 2, where the minimal set equals the 7-member specific basis, and 89 at lmax 4
    against 54."""
    if flavor == Flavor.SPHERICAL:
        if lmax < len(_PUBLISHED_SPHERICAL_MINIMAL):
            return _PUBLISHED_SPHERICAL_MINIMAL[lmax]
        return None
    if lmax == 0:
        return 1
    n = lmax
    if n % 2 == 0:
        return (9 * n**4 + 76 * n**3 + 84 * n**2 - 16 * n + 96) // 96
    return (9 * n**4 + 40 * n**3 + 6 * n**2 + 56 * n + 81) // 96
