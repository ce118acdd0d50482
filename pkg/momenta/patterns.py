"""Zero-rank contraction patterns over products of tensor symbols.

A pattern is a product of symbol occurrences (factors) and a perfect pairing of all of
their indices. Patterns are written in label notation: every factor lists one label per
index and the two paired indices share a label, e.g. `[M3, M3] (1,1,2)(2,3,3)`.
"""

import functools
import logging
import os
import re
from collections import Counter
from dataclasses import dataclass
from typing import (
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import networkx as nx
import numpy as np

from momenta.tensor_core import (
    DEFAULT_MAX_RANK,
    Pairing,
    PairingNotPerfect,
    SymTensor3,
    contract_full,
    gradient,
)

logger = logging.getLogger(__name__)

MAX_CANONICAL_NODES = 12

Labels = Tuple[Tuple[int, ...], ...]


class TooManyNodes(ValueError):
    """Raised when a graph is too large to be canonicalized."""


@functools.total_ordering
@dataclass(frozen=True)
class TensorSymbol:
    """A tensor that can appear as a factor of a pattern.

    Attributes:
        kind: "M" for the moment tensor of order `order`, "H" for its irreducible
            part of rank `part`.
        order: The moment order l.
        part: The rank p of an irreducible part, None for moment tensors.
    """

    kind: str
    order: int
    part: Optional[int] = None

    def __post_init__(self):
        if self.kind == "M":
            if self.part is not None:
                raise ValueError("Moment symbols have no part rank")
        elif self.kind == "H":
            if self.part is None:
                raise ValueError("Irreducible symbols need a part rank")
            if self.part < 0 or self.part > self.order or (self.order - self.part) % 2:
                raise ValueError(f"Invalid irreducible part ({self.order},{self.part})")
        else:
            raise ValueError(f"Unknown symbol kind: {self.kind}")
        if self.order < 0:
            raise ValueError(f"Symbol order must be non-negative, got {self.order}")

    @staticmethod
    def moment(order: int) -> "TensorSymbol":
        return TensorSymbol("M", order)

    @staticmethod
    def irreducible(order: int, part: int) -> "TensorSymbol":
        return TensorSymbol("H", order, part)

    @staticmethod
    def from_string(s: str) -> "TensorSymbol":
        """Parse "M3" or "H3,1"."""
        match = re.fullmatch(r"\s*([MH])\s*(\d+)\s*(?:,\s*(\d+))?\s*", s)
        if not match:
            raise ValueError(f"Invalid tensor symbol: {s!r}")
        kind, order, part = match.groups()
        if kind == "M" and part is not None:
            raise ValueError(f"Moment symbols have no part rank: {s!r}")
        return TensorSymbol(kind, int(order), None if part is None else int(part))

    @property
    def rank(self) -> int:
        return self.order if self.part is None else self.part

    @property
    def sort_key(self) -> Tuple[int, int, str]:
        return (self.rank, self.order, self.kind)

    def __lt__(self, other: "TensorSymbol") -> bool:
        return self.sort_key < other.sort_key

    @property
    def dot_label(self) -> str:
        return str(self.order) if self.part is None else f"{self.order}_{self.part}"

    def to_json(self) -> list:
        return [self.kind, self.order] if self.part is None else [self.kind, self.order, self.part]

    @staticmethod
    def from_json(obj: Sequence) -> "TensorSymbol":
        if not isinstance(obj, (list, tuple)) or len(obj) not in (2, 3):
            raise ValueError(f"Invalid tensor symbol: {obj!r}")
        return TensorSymbol(str(obj[0]), int(obj[1]), None if len(obj) == 2 else int(obj[2]))

    def __str__(self) -> str:
        return f"M{self.order}" if self.part is None else f"H{self.order},{self.part}"


def parse_labels(text: str) -> Labels:
    """Parse label notation such as "(1,1,2)(2,3,3)". A rank-0 factor is "()"."""
    groups = re.findall(r"\(([^()]*)\)", text)
    if not groups or re.sub(r"\([^()]*\)|\s", "", text):
        raise ValueError(f"Invalid label notation: {text!r}")
    return tuple(
        tuple(int(v) for v in g.split(",")) if g.strip() else () for g in groups
    )


def format_labels(labels: Labels) -> str:
    return "".join("(" + ",".join(str(v) for v in factor) + ")" for factor in labels)


@dataclass(frozen=True)
class PatternGraph:
    """Graph view of a pattern: one node per factor.

    Attributes:
        node_labels: One label per node, the factor's symbol.
        edges: (i, j, weight) with i < j, the number of index pairs contracted
            between the two factors.
        loops: Number of traces within every factor.
    """

    node_labels: Tuple[str, ...]
    edges: Tuple[Tuple[int, int, int], ...]
    loops: Tuple[int, ...]

    @property
    def num_nodes(self) -> int:
        return len(self.node_labels)

    def weight_matrix(self) -> np.ndarray:
        result = np.zeros((self.num_nodes, self.num_nodes), dtype=int)
        for i, j, w in self.edges:
            result[i, j] = result[j, i] = w
        return result

    def degrees(self) -> List[int]:
        """Number of indices of every node used by edges and loops."""
        return [int(d) for d in self.weight_matrix().sum(axis=1) + 2 * np.array(self.loops, dtype=int)]

    def is_connected(self) -> bool:
        return self.num_nodes <= 1 or nx.is_connected(self.to_networkx())

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        for i, (label, loops) in enumerate(zip(self.node_labels, self.loops)):
            g.add_node(i, symbol=label, loops=loops)
        for i, j, w in self.edges:
            g.add_edge(i, j, weight=w)
        return g


def _graph_from_labels(node_labels: Sequence[str], labels: Labels) -> PatternGraph:
    """Build the graph of a (possibly partial) labeling. Labels seen once are open
    and do not contribute."""
    where: Dict[int, List[int]] = {}
    for node, factor in enumerate(labels):
        for label in factor:
            where.setdefault(label, []).append(node)
    loops = [0] * len(labels)
    weights: Counter = Counter()
    for nodes in where.values():
        if len(nodes) != 2:
            continue
        a, b = nodes
        if a == b:
            loops[a] += 1
        else:
            weights[(min(a, b), max(a, b))] += 1
    edges = tuple(sorted((i, j, w) for (i, j), w in weights.items()))
    return PatternGraph(tuple(node_labels), edges, tuple(loops))


def _refine(colors: List[int], adjacency: List[List[Tuple[int, int]]]) -> List[int]:
    """Color refinement: split cells by the multiset of (neighbor color, weight)
    until the partition is stable. New colors are ranks of the signatures."""
    num_cells = len(set(colors))
    while True:
        signatures = [
            (colors[v], tuple(sorted((colors[u], w) for u, w in adjacency[v])))
            for v in range(len(colors))
        ]
        ranking = {s: i for i, s in enumerate(sorted(set(signatures)))}
        colors = [ranking[s] for s in signatures]
        if len(ranking) == num_cells:
            return colors
        num_cells = len(ranking)


@functools.lru_cache(maxsize=100000)
def _certificate(graph: PatternGraph) -> tuple:
    n = graph.num_nodes
    weights = graph.weight_matrix()
    adjacency = [[(u, int(weights[v, u])) for u in range(n) if weights[v, u]] for v in range(n)]
    node_keys = list(zip(graph.node_labels, graph.loops))
    ranking = {k: i for i, k in enumerate(sorted(set(node_keys)))}
    best: Optional[tuple] = None

    def search(colors: List[int]) -> None:
        nonlocal best
        colors = _refine(colors, adjacency)
        counts = Counter(colors)
        cells = [c for c, size in counts.items() if size > 1]
        if not cells:
            order = sorted(range(n), key=lambda v: colors[v])
            cert = (
                tuple(node_keys[v] for v in order),
                tuple(tuple(int(weights[a, b]) for b in order) for a in order),
            )
            if best is None or cert < best:
                best = cert
            return
        # Individualize every vertex of the first non-singleton cell in turn.
        target = min(cells)
        for v in range(n):
            if colors[v] != target:
                continue
            individualized = [
                2 * c if c < target else 2 * c + 1 if c > target else 2 * c + (u != v)
                for u, c in enumerate(colors)
            ]
            search(individualized)

    search([ranking[k] for k in node_keys])
    assert best is not None
    return best


def canonical_form(graph: PatternGraph) -> str:
    """A key that is equal for isomorphic graphs (node labels, loops and edge weights
    respected), computed by individualization and refinement."""
    if graph.num_nodes > MAX_CANONICAL_NODES:
        raise TooManyNodes(
            f"Cannot canonicalize a graph with {graph.num_nodes} nodes,"
            f" the limit is {MAX_CANONICAL_NODES}"
        )
    if graph.num_nodes == 0:
        return "()"
    return repr(_certificate(graph))


@dataclass(frozen=True)
class ContractionPattern:
    """A product of symbol occurrences with a perfect pairing of all their indices.

    Attributes:
        factors: The symbol of every factor, in product order.
        pairing: Pairs of 1-based index positions over the concatenated factors.
    """

    factors: Tuple[TensorSymbol, ...]
    pairing: Pairing

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("A pattern needs at least one factor")
        if self.total_rank % 2:
            raise PairingNotPerfect(f"Total rank {self.total_rank} is odd")
        self.pairing.validate(self.total_rank)

    @staticmethod
    def from_labels(
        factors: Sequence[TensorSymbol], labels: Sequence[Sequence[int]]
    ) -> "ContractionPattern":
        if len(factors) != len(labels):
            raise ValueError(f"Got {len(labels)} label groups for {len(factors)} factors")
        for sym, factor_labels in zip(factors, labels):
            if len(factor_labels) != sym.rank:
                raise PairingNotPerfect(
                    f"Factor {sym} has rank {sym.rank} but {len(factor_labels)} labels"
                )
        return ContractionPattern(tuple(factors), Pairing.from_labels(labels))

    @staticmethod
    def parse(factors: Sequence[str], labels: str) -> "ContractionPattern":
        """Build a pattern from symbol strings and label notation, e.g.
        `parse(["H3,3"] * 2, "(1,2,3)(1,2,3)")`."""
        return ContractionPattern.from_labels(
            [TensorSymbol.from_string(s) for s in factors], parse_labels(labels)
        )

    @property
    def ranks(self) -> Tuple[int, ...]:
        return tuple(s.rank for s in self.factors)

    @property
    def total_rank(self) -> int:
        return sum(self.ranks)

    @property
    def symbols(self) -> Tuple[TensorSymbol, ...]:
        """Distinct symbols, sorted."""
        return tuple(sorted(set(self.factors)))

    @property
    def exponents(self) -> Dict[TensorSymbol, int]:
        return dict(sorted(Counter(self.factors).items()))

    @property
    def is_pure(self) -> bool:
        return len(set(self.factors)) == 1

    @property
    def is_homogeneous(self) -> bool:
        return len({s.order for s in self.factors}) == 1

    @property
    def tags(self) -> Tuple[str, str]:
        return (
            "pure" if self.is_pure else "mixed",
            "homogeneous" if self.is_homogeneous else "simultaneous",
        )

    def labels(self) -> Labels:
        return self.pairing.to_labels(self.ranks)

    @property
    def sort_key(self) -> tuple:
        return tuple((s.sort_key, lab) for s, lab in zip(self.factors, self.labels()))

    def evaluate(
        self, assignment: Mapping[TensorSymbol, SymTensor3], max_rank: int = DEFAULT_MAX_RANK
    ) -> float:
        return contract_full([assignment[s] for s in self.factors], self.pairing, max_rank)

    def gradient(
        self,
        assignment: Mapping[TensorSymbol, SymTensor3],
        symbol: TensorSymbol,
        max_rank: int = DEFAULT_MAX_RANK,
    ) -> np.ndarray:
        """Derivative with respect to the compact coefficients of `symbol`."""
        return gradient(
            [assignment[s] for s in self.factors],
            self.pairing,
            symbol,
            symbols=list(self.factors),
            max_rank=max_rank,
        )

    def graph(self) -> PatternGraph:
        return _graph_from_labels([str(s) for s in self.factors], self.labels())

    def canonical_key(self) -> str:
        return canonical_form(self.graph())

    def is_isomorphic(self, other: "ContractionPattern") -> bool:
        return self.canonical_key() == other.canonical_key()

    def replace_symbols(self, mapping: Mapping[TensorSymbol, TensorSymbol]) -> "ContractionPattern":
        """The same pairing over other symbols of equal ranks."""
        factors = tuple(mapping.get(s, s) for s in self.factors)
        for old, new in zip(self.factors, factors):
            if old.rank != new.rank:
                raise ValueError(f"Cannot replace {old} with {new}: ranks differ")
        return ContractionPattern(factors, self.pairing)

    def to_json(self) -> dict:
        return {
            "factors": [s.to_json() for s in self.factors],
            "pairing": [list(pair) for pair in self.pairing.pairs],
            "tags": list(self.tags),
        }

    @staticmethod
    def from_json(obj: dict) -> "ContractionPattern":
        try:
            factors = tuple(TensorSymbol.from_json(f) for f in obj["factors"])
            pairing = Pairing(tuple(tuple(pair) for pair in obj["pairing"]))
        except (KeyError, TypeError) as e:
            raise ValueError(f"Invalid pattern: {obj!r}") from e
        return ContractionPattern(factors, pairing)

    def __str__(self) -> str:
        return "[" + ", ".join(str(s) for s in self.factors) + "] " + format_labels(self.labels())


def to_dot(pattern: ContractionPattern, name: str = "G") -> str:
    """DOT text of the pattern graph. Node labels are the factor orders, edge labels
    the number of contracted pairs. Traces are not drawn."""
    graph = pattern.graph()
    lines = [f"graph {name} {{"]
    for i, sym in enumerate(pattern.factors):
        lines.append(f'  n{i} [label="{sym.dot_label}"];')
    for i, j, w in graph.edges:
        lines.append(f'  n{i} -- n{j} [label="{w}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot_bundle(patterns: Iterable[ContractionPattern], out_dir: str) -> List[str]:
    """Write one DOT file per pattern and return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i, pattern in enumerate(patterns, start=1):
        path = os.path.join(out_dir, f"invariant_{i:03d}.dot")
        with open(path, "w") as f:
            f.write(to_dot(pattern, name=f"invariant_{i:03d}"))
        paths.append(path)
    logger.info("Wrote %s DOT files to %s", len(paths), out_dir)
    return paths


@dataclass(frozen=True)
class _Partial:
    """A prefix of a pattern under construction."""

    factors: Tuple[TensorSymbol, ...]
    labels: Labels
    open_labels: Tuple[Tuple[int, ...], ...]
    next_label: int
    rank: int

    @property
    def num_open(self) -> int:
        return sum(len(o) for o in self.open_labels)

    def components_closed_early(self) -> bool:
        """Whether a connected component has no open labels left."""
        parent = list(range(len(self.factors)))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        where: Dict[int, int] = {}
        for node, factor in enumerate(self.labels):
            for label in factor:
                if label in where:
                    parent[find(where[label])] = find(node)
                else:
                    where[label] = node
        has_open = {find(node) for node, o in enumerate(self.open_labels) if o}
        return any(find(node) not in has_open for node in range(len(self.factors)))

    def partial_key(self) -> str:
        node_labels = [f"{s}|{len(o)}" for s, o in zip(self.factors, self.open_labels)]
        return canonical_form(_graph_from_labels(node_labels, self.labels))


def _close_choices(open_counts: Sequence[int], budget: int) -> Iterator[Tuple[int, ...]]:
    """All per-node close counts bounded by the open counts with sum <= budget."""
    if not open_counts:
        yield ()
        return
    for c in range(min(open_counts[0], budget) + 1):
        for rest in _close_choices(open_counts[1:], budget - c):
            yield (c,) + rest


class _LevelSearch:
    """Depth-first enumeration of the patterns with a fixed total rank and factor
    count, in ascending order of the factor-by-factor (symbol, labels) key."""

    def __init__(
        self,
        symbols: Sequence[TensorSymbol],
        total_rank: int,
        num_factors: int,
        connected: bool,
        traces: bool,
        require_all: bool,
        max_open: int,
    ):
        self.symbols = list(symbols)
        self.max_rank = max(s.rank for s in symbols)
        self.total_rank = total_rank
        self.num_factors = num_factors
        self.connected = connected
        self.traces = traces
        self.require_all = require_all
        self.max_open = max_open
        self.partial_seen: Dict[int, Set[str]] = {}
        self.seen: Set[str] = set()

    def run(self) -> Iterator[ContractionPattern]:
        yield from self._extend(_Partial((), (), (), 1, 0))

    def _symbol_allowed(self, state: _Partial, sym: TensorSymbol) -> bool:
        if state.factors and sym < state.factors[-1]:
            return False
        remaining = self.num_factors - len(state.factors) - 1
        rank_after = state.rank + sym.rank
        if rank_after + remaining * sym.rank > self.total_rank:
            return False
        if rank_after + remaining * self.max_rank < self.total_rank:
            return False
        if self.require_all:
            used = set(state.factors) | {sym}
            missing = [s for s in self.symbols if s not in used]
            if any(s < sym for s in missing) or len(missing) > remaining:
                return False
        return True

    def _options(self, state: _Partial) -> List[Tuple[tuple, _Partial]]:
        result = []
        remaining = self.num_factors - len(state.factors) - 1
        for sym in self.symbols:
            if not self._symbol_allowed(state, sym):
                continue
            rank_after = state.rank + sym.rank
            open_counts = [len(o) for o in state.open_labels]
            for closes in _close_choices(open_counts, sym.rank):
                num_closed = sum(closes)
                max_loops = (sym.rank - num_closed) // 2
                if not self.traces or sym.kind != "M":
                    max_loops = 0
                for loops in range(max_loops + 1):
                    new_open = sym.rank - num_closed - 2 * loops
                    open_after = state.num_open - num_closed + new_open
                    if open_after > self.max_open or open_after > self.total_rank - rank_after:
                        continue
                    if remaining == 0 and open_after:
                        continue
                    closed = sorted(
                        label for o, c in zip(state.open_labels, closes) for label in o[:c]
                    )
                    n = state.next_label
                    loop_labels = [n + i // 2 for i in range(2 * loops)]
                    open_labels = list(range(n + loops, n + loops + new_open))
                    factor_labels = tuple(closed + loop_labels + open_labels)
                    child = _Partial(
                        state.factors + (sym,),
                        state.labels + (factor_labels,),
                        tuple(o[c:] for o, c in zip(state.open_labels, closes))
                        + (tuple(open_labels),),
                        n + loops + new_open,
                        rank_after,
                    )
                    result.append(((sym.sort_key, factor_labels), child))
        result.sort(key=lambda item: item[0])
        return result

    def _extend(self, state: _Partial) -> Iterator[ContractionPattern]:
        depth = len(state.factors)
        if depth == self.num_factors:
            yield from self._emit(state)
            return
        for _, child in self._options(state):
            if depth + 1 < self.num_factors:
                if self.connected and child.components_closed_early():
                    continue
                key = child.partial_key()
                seen = self.partial_seen.setdefault(depth + 1, set())
                if key in seen:
                    continue
                seen.add(key)
            yield from self._extend(child)

    def _emit(self, state: _Partial) -> Iterator[ContractionPattern]:
        if self.require_all and set(state.factors) != set(self.symbols):
            return
        pattern = ContractionPattern.from_labels(state.factors, state.labels)
        graph = pattern.graph()
        if self.connected and not graph.is_connected():
            return
        key = canonical_form(graph)
        if key in self.seen:
            return
        self.seen.add(key)
        yield pattern


def iter_patterns(
    symbols: Iterable[TensorSymbol],
    max_factors: int,
    max_total_rank: Optional[int] = None,
    *,
    connected: bool = True,
    traces: bool = True,
    require_all: bool = False,
    max_open: int = DEFAULT_MAX_RANK,
) -> Iterator[ContractionPattern]:
    """Lazily enumerate zero-rank contraction patterns over products of the symbols,
    one per isomorphism class, ordered by total rank, then by factor count, then by
    the factor-by-factor (symbol, labels) key. Within a class the first pattern in
    this order is emitted.

    Args:
        symbols: The symbols that may appear, each any number of times.
        max_factors: The largest number of factors.
        max_total_rank: The largest total rank, by default `max_factors` times the
            largest symbol rank.
        connected: Only emit patterns with a connected graph.
        traces: Allow traces within moment factors. Traces of irreducible factors
            vanish and are never generated.
        require_all: Only emit patterns that use every symbol.
        max_open: The largest number of open indices after any prefix of factors,
            i.e. the intermediate rank of a left-to-right evaluation.
    """
    symbols = sorted(set(symbols))
    if not symbols or max_factors < 1:
        return
    max_rank = max(s.rank for s in symbols)
    if max_total_rank is None:
        max_total_rank = max_factors * max_rank
    for total_rank in range(0, max_total_rank + 1, 2):
        for num_factors in range(1, max_factors + 1):
            if num_factors * symbols[0].rank > total_rank or num_factors * max_rank < total_rank:
                continue
            if require_all and num_factors < len(symbols):
                continue
            logger.debug("Enumerating patterns of total rank %s with %s factors", total_rank, num_factors)
            search = _LevelSearch(
                symbols, total_rank, num_factors, connected, traces, require_all, max_open
            )
            yield from search.run()


def enumerate_patterns(
    symbols: Iterable[TensorSymbol],
    max_factors: int,
    max_total_rank: Optional[int] = None,
    **kwargs,
) -> List[ContractionPattern]:
    """All patterns of `iter_patterns` as a list."""
    return list(iter_patterns(symbols, max_factors, max_total_rank, **kwargs))


def _perfect_matchings(positions: List[int]) -> Iterator[List[Tuple[int, int]]]:
    if not positions:
        yield []
        return
    first = positions[0]
    for k in range(1, len(positions)):
        rest = positions[1:k] + positions[k + 1 :]
        for matching in _perfect_matchings(rest):
            yield [(first, positions[k])] + matching


def brute_force_classes(factors: Sequence[TensorSymbol]) -> List[List[ContractionPattern]]:
    """Every perfect matching of the product, grouped into isomorphism classes with
    networkx. Slow, meant for checking the enumeration on small products."""
    total = sum(s.rank for s in factors)
    classes: List[List[ContractionPattern]] = []
    graphs: List[nx.Graph] = []
    for matching in _perfect_matchings(list(range(1, total + 1))):
        pattern = ContractionPattern(tuple(factors), Pairing(tuple(matching)))
        g = pattern.graph().to_networkx()
        for cls, h in zip(classes, graphs):
            if nx.is_isomorphic(
                g,
                h,
                node_match=lambda a, b: (a["symbol"], a["loops"]) == (b["symbol"], b["loops"]),
                edge_match=lambda a, b: a["weight"] == b["weight"],
            ):
                cls.append(pattern)
                break
        else:
            classes.append([pattern])
            graphs.append(g)
    return classes


def relabel_symbols(
    patterns: Iterable[ContractionPattern], mapping: Mapping[TensorSymbol, TensorSymbol]
) -> List[ContractionPattern]:
    return [p.replace_symbols(mapping) for p in patterns]

