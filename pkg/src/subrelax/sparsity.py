"""Correlative sparsity graphs, chordal extension, and RIP-ordered cliques.

Two variables are adjacent in the correlative sparsity (CSP) graph when they
appear together in some constraint or in the same monomial of the objective.
The graph is chordally extended by greedy minimum-degree elimination (ties
broken by lowest vertex index), whose elimination order is a perfect
elimination ordering of the extension.  Maximal cliques are read off the
forward neighborhoods and ordered so the Running Intersection Property
holds: cliques sorted by descending elimination position of their
representative (first-eliminated) vertex.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .errors import StructureError
from .polynomials import POPInstance


@dataclass(frozen=True)
class CSPGraph:
    """Undirected graph on variable indices; edges stored as (i, j) with i < j."""

    nvars: int
    edges: frozenset[tuple[int, int]]

    @classmethod
    def from_edges(cls, nvars: int, edges) -> "CSPGraph":
        norm = set()
        for i, j in edges:
            if i == j:
                continue
            a, b = (i, j) if i < j else (j, i)
            if b >= nvars or a < 0:
                raise ValueError(f"edge ({i},{j}) out of range for n={nvars}")
            norm.add((a, b))
        return cls(nvars, frozenset(norm))

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.nvars)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj

    def has_edge(self, i: int, j: int) -> bool:
        a, b = (i, j) if i < j else (j, i)
        return (a, b) in self.edges

    @property
    def density(self) -> float:
        """Fraction of off-diagonal adjacency entries that are nonzero."""
        if self.nvars < 2:
            return 0.0
        return 2.0 * len(self.edges) / (self.nvars * (self.nvars - 1))


@dataclass
class CliqueCover:
    """Maximal cliques of a chordal graph, ordered to satisfy the RIP."""

    nvars: int
    cliques: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def tau(self) -> list[int]:
        return [len(c) for c in self.cliques]

    def containing(self, vars_: set[int] | frozenset[int]) -> list[int]:
        """Indices of cliques containing every variable in ``vars_``."""
        return [k for k, c in enumerate(self.cliques) if vars_ <= set(c)]

    def __len__(self) -> int:
        return len(self.cliques)


def build_csp_graph(pop: POPInstance) -> CSPGraph:
    """CSP graph of a problem; univariate domain bounds contribute no edges."""
    edges: set[tuple[int, int]] = set()
    for m in pop.objective.terms:
        vs = m.variables()
        edges.update(combinations(vs, 2))
    for con in pop.constraints:
        vs = sorted(con.poly.variables())
        edges.update(combinations(vs, 2))
    return CSPGraph.from_edges(pop.nvars, edges)


def chordal_extension(g: CSPGraph) -> tuple[CSPGraph, list[int]]:
    """Greedy minimum-degree fill-in.

    Returns the extended (chordal) graph and its elimination order, which is
    a perfect elimination ordering of the extension.  Ties in degree are
    broken by lowest vertex index, so the result is deterministic.
    """
    n = g.nvars
    adj = g.adjacency()
    remaining = set(range(n))
    fill: set[tuple[int, int]] = set()
    order: list[int] = []
    while remaining:
        v = min(remaining, key=lambda u: (len(adj[u] & remaining), u))
        order.append(v)
        remaining.discard(v)
        nb = sorted(adj[v] & remaining)
        for a, b in combinations(nb, 2):
            if b not in adj[a]:
                adj[a].add(b)
                adj[b].add(a)
                fill.add((a, b))
    return CSPGraph(n, g.edges | frozenset(fill)), order


def maximal_cliques(chordal: CSPGraph, order: list[int]) -> CliqueCover:
    """Maximal cliques of a chordal graph with perfect elimination order.

    Each vertex contributes its closed forward neighborhood; candidates
    contained in another are dropped.  Raises :class:`StructureError` when
    ``order`` is not a perfect elimination ordering (i.e. the graph is not
    chordal with respect to it).
    """
    n = chordal.nvars
    if sorted(order) != list(range(n)):
        raise StructureError("elimination order must be a permutation of vertices")
    pos = {v: i for i, v in enumerate(order)}
    adj = chordal.adjacency()

    candidates: list[tuple[int, frozenset[int]]] = []  # (rep position, clique)
    for v in order:
        fwd = {u for u in adj[v] if pos[u] > pos[v]}
        for a, b in combinations(sorted(fwd), 2):
            if b not in adj[a]:
                raise StructureError(
                    f"order is not a perfect elimination ordering: "
                    f"{a} and {b} are non-adjacent forward neighbors of {v}"
                )
        candidates.append((pos[v], frozenset(fwd | {v})))

    candidates.sort(key=lambda t: -len(t[1]))
    kept: list[tuple[int, frozenset[int]]] = []
    for p, c in candidates:
        if not any(c <= k for _, k in kept):
            kept.append((p, c))

    kept.sort(key=lambda t: -t[0])  # descending representative position => RIP
    return CliqueCover(n, [tuple(sorted(c)) for _, c in kept])


def rip_satisfied(cliques: list[tuple[int, ...]]) -> bool:
    """Explicit Running Intersection Property check for an ordered cover."""
    seen: set[int] = set()
    for k, c in enumerate(cliques):
        cs = set(c)
        inter = cs & seen
        if k > 0 and inter and not any(inter <= set(cliques[s]) for s in range(k)):
            return False
        seen |= cs
    return True


def dense_cover(nvars: int) -> CliqueCover:
    """Single-clique cover used by the dense relaxation mode."""
    return CliqueCover(nvars, [tuple(range(nvars))])


def clique_cover(pop: POPInstance, dense: bool = False) -> CliqueCover:
    """Clique cover of a problem: CSP graph, chordal extension, RIP order.

    Isolated variables (appearing in no edge) still end up in singleton
    cliques, so the cover always spans all variables.
    """
    if dense:
        return dense_cover(pop.nvars)
    g = build_csp_graph(pop)
    ext, order = chordal_extension(g)
    return maximal_cliques(ext, order)


@dataclass(frozen=True)
class SparsitySummary:
    nvars: int
    density: float
    ncliques: int
    max_clique: int
    min_clique: int


def summarize(pop: POPInstance, dense: bool = False) -> SparsitySummary:
    g = build_csp_graph(pop)
    cover = clique_cover(pop, dense=dense)
    sizes = cover.tau or [0]
    return SparsitySummary(
        nvars=pop.nvars,
        density=g.density,
        ncliques=len(cover),
        max_clique=max(sizes),
        min_clique=min(sizes),
    )
