"""Subset selection heuristics and sublevel relaxation assembly.

A sublevel relaxation interpolates between the order-d and order-(d+1)
moment relaxations: on top of the order-d blocks it adds, for selected index
subsets Gamma of size ``level`` (``depth`` many per constraint and clique),
an order-(d+1) moment block on Gamma and an order-(d - w_i + 1) localizing
block of the constraint on Gamma.  Everything is expressed on the moment
side as sparse linear-matrix blocks over a shared moment dictionary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, StructureError
from .polynomials import (
    COEFF_DROP_EPS,
    MomentDictionary,
    Monomial,
    POPInstance,
    Polynomial,
    Relation,
    Sense,
    index_polynomial,
    monomial_basis,
)
from .sparsity import CliqueCover


class Heuristic(Enum):
    H1 = "h1"    # random windows, seeded
    H2 = "h2"    # ordered windows
    H3 = "h3"    # ranked by first-order moment submatrix magnitude
    H4 = "h4"    # ranked by Laplacian submatrix magnitude
    H5 = "h5"    # windows contained in many maximal cliques first
    H6 = "h6"    # windows contained in few maximal cliques first
    H35 = "h35"  # rarely-repeated windows, then by moment magnitude
    H45 = "h45"  # rarely-repeated windows, then by Laplacian magnitude
    PROBLEM = "auto"  # problem-specific ordered generator


class Mode(Enum):
    DENSE = "dense"
    SPARSE = "sparse"


@dataclass
class SublevelConfig:
    """Order d, subset size (level), subset count (depth), and heuristic.

    ``level_overrides``/``depth_overrides`` map constraint indices to
    per-constraint values; the uniform ``level``/``depth`` apply elsewhere.
    When the level reaches a clique's size the whole clique is taken once
    (effective depth 1).  Level 0 or depth 0 adds no sublevel blocks.
    """

    d: int = 1
    level: int = 0
    depth: int = 0
    heuristic: Heuristic = Heuristic.H2
    seed: int = 0
    mode: Mode = Mode.SPARSE
    level_overrides: dict[int, int] = field(default_factory=dict)
    depth_overrides: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("relaxation order d must be >= 1")
        if self.level < 0 or self.depth < 0:
            raise ValueError("level and depth must be >= 0")

    def level_for(self, constraint: int | None) -> int:
        if constraint is not None and constraint in self.level_overrides:
            return self.level_overrides[constraint]
        return self.level

    def depth_for(self, constraint: int | None) -> int:
        if constraint is not None and constraint in self.depth_overrides:
            return self.depth_overrides[constraint]
        return self.depth


@dataclass
class HeuristicInput:
    """Side data some heuristics need.

    ``moment_matrices`` maps clique index -> first-order moment matrix of a
    previously solved base relaxation (rows/cols: constant then the clique's
    variables in ascending order).  ``laplacian`` is the graph Laplacian for
    Laplacian-guided ranking.
    """

    moment_matrices: dict[int, np.ndarray] | None = None
    laplacian: np.ndarray | None = None


# Owner of a group of subsets: an explicit constraint, or a variable whose
# binary domain constraint was absorbed by power reduction (it still anchors
# order-(d+1) moment blocks, but no localizing block).
Owner = tuple[str, int]  # ("con", constraint index) or ("var", variable index)


@dataclass(frozen=True)
class PlanEntry:
    owner: Owner
    clique: int
    subsets: tuple[tuple[int, ...], ...]


@dataclass
class SubsetPlan:
    """Ordered subset choices per (owner, clique).

    For a fixed heuristic and seed, the depth-q plan is a prefix of the
    depth-(q+1) plan, which makes depth monotonicity testable.
    """

    entries: list[PlanEntry] = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def cyclic_windows(members: Sequence[int], size: int) -> list[tuple[int, ...]]:
    """The len(members) cyclic windows of ``size`` consecutive members.

    Windows are returned as sorted tuples in start-position order, with
    exact duplicates dropped (keeps the first occurrence).
    """
    tau = len(members)
    out: list[tuple[int, ...]] = []
    seen = set()
    if size <= 0 or tau == 0:
        return out
    for j in range(tau):
        w = tuple(sorted({members[(j + o) % tau] for o in range(size)}))
        if w not in seen:
            seen.add(w)
            out.append(w)
    return out


def anchored_windows(
    members: Sequence[int], anchor: int, size: int, depth: int
) -> list[tuple[int, ...]]:
    """Windows containing ``anchor`` plus size-1 consecutive members at
    offsets t = 1..depth from the anchor's position (cyclic)."""
    tau = len(members)
    if size <= 0 or tau == 0:
        return []
    j = members.index(anchor)
    out: list[tuple[int, ...]] = []
    seen = set()
    for t in range(1, depth + 1):
        w = {anchor}
        for o in range(size - 1):
            w.add(members[(j + t + o) % tau])
        tw = tuple(sorted(w))
        if tw not in seen:
            seen.add(tw)
            out.append(tw)
    return out


def _h1_order(pool_size: int, seed: int, owner: Owner, clique: int) -> list[int]:
    kind_code = 0 if owner[0] == "con" else 1
    rng = np.random.default_rng([seed & 0xFFFFFFFFFFFFFFF, kind_code, owner[1], clique])
    return list(rng.permutation(pool_size))


def _window_submatrix_score(
    mat: np.ndarray, rows: Sequence[int]
) -> float:
    sub = mat[np.ix_(rows, rows)]
    return float(np.max(np.abs(sub))) if sub.size else 0.0


def _rank_windows(
    pool: list[tuple[int, ...]],
    heuristic: Heuristic,
    owner: Owner,
    clique_idx: int,
    clique: tuple[int, ...],
    cover: CliqueCover,
    cfg: SublevelConfig,
    aux: HeuristicInput | None,
) -> list[tuple[int, ...]]:
    if heuristic is Heuristic.H2:
        return pool
    if heuristic is Heuristic.H1:
        order = _h1_order(len(pool), cfg.seed, owner, clique_idx)
        return [pool[i] for i in order]

    def containment(w: tuple[int, ...]) -> int:
        ws = set(w)
        return sum(1 for c in cover.cliques if ws <= set(c))

    def h3_score(w: tuple[int, ...]) -> float:
        if aux is None or aux.moment_matrices is None:
            raise ConfigError("heuristic needs first-order moment matrices")
        mat = aux.moment_matrices.get(clique_idx)
        if mat is None:
            raise ConfigError(f"no moment matrix supplied for clique {clique_idx}")
        # rows: constant (0) plus 1 + position of each window var in the clique
        pos = {v: r + 1 for r, v in enumerate(clique)}
        rows = [0] + [pos[v] for v in w]
        return _window_submatrix_score(mat, rows)

    def h4_score(w: tuple[int, ...]) -> float:
        if aux is None or aux.laplacian is None:
            raise ConfigError("heuristic needs the graph Laplacian")
        return _window_submatrix_score(aux.laplacian, list(w))

    idx = list(range(len(pool)))
    if heuristic is Heuristic.H3:
        idx.sort(key=lambda j: (-h3_score(pool[j]), j))
    elif heuristic is Heuristic.H4:
        idx.sort(key=lambda j: (-h4_score(pool[j]), j))
    elif heuristic is Heuristic.H5:
        idx.sort(key=lambda j: (-containment(pool[j]), j))
    elif heuristic is Heuristic.H6:
        idx.sort(key=lambda j: (containment(pool[j]), j))
    elif heuristic is Heuristic.H35:
        idx.sort(key=lambda j: (containment(pool[j]), -h3_score(pool[j]), j))
    elif heuristic is Heuristic.H45:
        idx.sort(key=lambda j: (containment(pool[j]), -h4_score(pool[j]), j))
    else:
        raise ConfigError(f"unsupported heuristic {heuristic}")
    return [pool[j] for j in idx]


def select_subsets(
    pop: POPInstance,
    cover: CliqueCover,
    cfg: SublevelConfig,
    aux: HeuristicInput | None = None,
) -> SubsetPlan:
    """Choose subsets per (constraint, clique) with a generic heuristic.

    Candidate pool per clique: its cyclic windows of ``level`` consecutive
    members.  Binary-domain variables (whose quadratic constraint was
    absorbed by reduction) participate as per-variable owners and receive
    subsets from the same pools.  Problem-specific generators live with the
    encoders; see :mod:`subrelax.problems`.
    """
    if cfg.heuristic is Heuristic.PROBLEM:
        raise ConfigError("problem-specific plans are built by the encoders")
    entries: list[PlanEntry] = []
    owners: list[tuple[Owner, frozenset[int]]] = []
    for i, con in enumerate(pop.constraints):
        owners.append((("con", i), frozenset(con.poly.variables())))
    for v in pop.binary_like_vars():
        owners.append((("var", v), frozenset([v])))

    for owner, vars_ in owners:
        l = cfg.level_for(owner[1] if owner[0] == "con" else None)
        q = cfg.depth_for(owner[1] if owner[0] == "con" else None)
        if l <= 0 or q <= 0:
            continue
        holders = cover.containing(vars_) if vars_ else list(range(len(cover)))
        if not holders:
            raise StructureError(
                f"no clique contains the variables of owner {owner}"
            )
        for k in holders:
            clique = cover.cliques[k]
            tau = len(clique)
            if l >= tau:
                entries.append(PlanEntry(owner, k, (tuple(clique),)))
                continue
            pool = cyclic_windows(clique, l)
            ranked = _rank_windows(pool, cfg.heuristic, owner, k, clique, cover, cfg, aux)
            chosen = tuple(ranked[: min(q, len(ranked))])
            if chosen:
                entries.append(PlanEntry(owner, k, chosen))
    return SubsetPlan(entries)


# ---------------------------------------------------------------------------
# Moment-side blocks
# ---------------------------------------------------------------------------


@dataclass
class PSDBlock:
    """Sparse symmetric linear-matrix block: entries (row, col, y index, coeff).

    Only the upper triangle (row <= col) is stored; there is at most one
    entry per (row, col, index) triple.
    """

    size: int
    entries: list[tuple[int, int, int, float]] = field(default_factory=list)


@dataclass(frozen=True)
class BlockTag:
    """Provenance of a block inside a relaxation."""

    kind: str  # "moment" | "loc" | "zero"
    vars: tuple[int, ...]
    order: int
    constraint: int | None = None


def _reduced_basis(dct: MomentDictionary, variables, order: int) -> list[Monomial]:
    """Canonical basis, collapsed to one representative per reduced monomial.

    Without a reduction rule this is the plain basis of length
    C(len(vars)+order, order).  With a rule, duplicated rows (identical as
    linear forms in y) are removed so moment blocks keep a strictly feasible
    interior.
    """
    basis = monomial_basis(variables, order)
    if dct.rule is None or dct.rule.is_trivial:
        return basis
    seen = set()
    out = []
    for m in basis:
        r = dct.rule.reduce(m)
        if r not in seen:
            seen.add(r)
            out.append(m)
    return out


def moment_block(dct: MomentDictionary, variables, order: int) -> PSDBlock:
    """Moment matrix block on the given variables: entry (r,c) = y[b_r*b_c]."""
    basis = _reduced_basis(dct, variables, order)
    entries = []
    for r in range(len(basis)):
        for c in range(r, len(basis)):
            entries.append((r, c, dct.index(basis[r].mul(basis[c])), 1.0))
    return PSDBlock(len(basis), entries)


def localizing_block(
    dct: MomentDictionary,
    g: Polynomial,
    variables,
    order: int,
    allow_external_vars: bool = False,
) -> PSDBlock:
    """Localizing block of ``g``: entry (r,c) = sum_b g_b * y[b_r*b_c*x^b].

    By default the constraint's variables must lie inside ``variables``;
    subset-restricted blocks (whose basis covers only part of the
    constraint) pass ``allow_external_vars=True``.
    """
    vset = set(int(v) for v in variables)
    if not allow_external_vars and not g.variables() <= vset:
        raise DimensionError(
            "constraint references variables outside the block's variable set"
        )
    basis = _reduced_basis(dct, vset, order)
    entries = []
    for r in range(len(basis)):
        for c in range(r, len(basis)):
            prod = basis[r].mul(basis[c])
            acc: dict[int, float] = {}
            for m, coeff in g.items():
                idx = dct.index(prod.mul(m))
                acc[idx] = acc.get(idx, 0.0) + coeff
            for idx in sorted(acc):
                if abs(acc[idx]) >= COEFF_DROP_EPS:
                    entries.append((r, c, idx, acc[idx]))
    return PSDBlock(len(basis), entries)


# ---------------------------------------------------------------------------
# Relaxation assembly
# ---------------------------------------------------------------------------


@dataclass
class Relaxation:
    """A block LMI over shared moment variables.

    ``objective`` is the sparse vector of the Riesz functional of the POP
    objective over nonzero dictionary indices; the constant monomial's
    contribution sits in ``objective_offset``.  The normalization y_0 = 1 is
    applied when the relaxation is lowered to a block SDP.  ``var_scales``
    records the natural magnitude of each problem variable (box radii), used
    by the solver to equilibrate moment variables.
    """

    dct: MomentDictionary
    blocks: list[PSDBlock]
    tags: list[BlockTag]
    objective: list[tuple[int, float]]
    objective_offset: float
    sense: Sense
    cliques: list[tuple[int, ...]]
    nvars: int
    var_scales: list[float] | None = None

    def block_sizes(self) -> list[int]:
        return [b.size for b in self.blocks]


def _omega(g: Polynomial) -> int:
    return math.ceil(g.degree / 2)


@dataclass(frozen=True)
class _BlockRequest:
    kind: str  # "moment" | "loc"
    vars: tuple[int, ...]
    order: int
    constraint: int | None = None

    def key(self):
        # order-0 blocks have basis {1} whatever the variable set
        eff = self.vars if self.order > 0 else ()
        return (self.kind, self.constraint, eff, self.order)


def _subsumed(a: _BlockRequest, b: _BlockRequest) -> bool:
    """True when block a's basis monomials all appear in block b's basis
    (same kind/constraint), making a a principal submatrix of b."""
    if a.kind != b.kind or a.constraint != b.constraint:
        return False
    if a.order > b.order:
        return False
    if a.order == 0:
        return True
    return set(a.vars) <= set(b.vars)


def build_relaxation(
    pop: POPInstance,
    cover: CliqueCover,
    cfg: SublevelConfig,
    plan: SubsetPlan | None = None,
) -> Relaxation:
    """Assemble the moment-side sublevel relaxation as a block LMI.

    Blocks: an order-d moment block per clique; an order-(d - w_i)
    localizing block per constraint on a clique containing it (equalities
    become zero-pinned blocks); per planned subset Gamma, an order-(d+1)
    moment block on Gamma and an order-(d - w_i + 1) localizing block of the
    constraint on Gamma.  Blocks whose basis is contained in another kept
    block of the same provenance are pruned, so a full-level plan (level >=
    clique size, depth 1) reproduces the order-(d+1) relaxation block set
    exactly.
    """
    if plan is None:
        plan = SubsetPlan()
    d = cfg.d
    rule = pop.reduction_rule()
    dct = MomentDictionary(None if rule.is_trivial else rule)

    reduced_obj_degree = max(
        (rule.reduce(m).degree for m in pop.objective.terms), default=0
    )
    if reduced_obj_degree > 2 * d:
        raise ValueError(
            f"objective degree {reduced_obj_degree} exceeds 2*d = {2 * d}; "
            "raise the relaxation order"
        )

    requests: list[_BlockRequest] = []
    seen_keys: set = set()
    sublevel_keys: set = set()

    def request(kind: str, vars_, order: int, constraint: int | None = None,
                sublevel: bool = False):
        if order < 0:
            return
        req = _BlockRequest(kind, tuple(sorted(vars_)), order, constraint)
        if req.key() not in seen_keys:
            seen_keys.add(req.key())
            requests.append(req)
        if sublevel:
            sublevel_keys.add(req.key())

    equalities = [
        i for i, con in enumerate(pop.constraints) if con.rel is Relation.EQ
    ]
    home_clique: dict[int, tuple[int, ...]] = {}

    for clique in cover.cliques:
        request("moment", clique, d)

    for i, con in enumerate(pop.constraints):
        vars_i = frozenset(con.poly.variables())
        holders = cover.containing(vars_i)
        if not holders:
            raise StructureError(
                f"constraint {i} is not contained in any clique; "
                "its variables must co-occur in the sparsity pattern"
            )
        home_clique[i] = cover.cliques[holders[0]]
        if con.rel is Relation.GE:
            request("loc", home_clique[i], d - _omega(con.poly), constraint=i)

    gamma_by_con: dict[int, list[tuple[int, ...]]] = {i: [] for i in equalities}
    for entry in plan:
        clique = set(cover.cliques[entry.clique])
        for gamma in entry.subsets:
            if not set(gamma) <= clique:
                raise StructureError(
                    f"subset {gamma} is not contained in clique {entry.clique}"
                )
            request("moment", gamma, d + 1, sublevel=True)
            if entry.owner[0] == "con":
                i = entry.owner[1]
                if pop.constraints[i].rel is Relation.GE:
                    request(
                        "loc", gamma,
                        d - _omega(pop.constraints[i].poly) + 1, constraint=i,
                        sublevel=True,
                    )
                else:
                    gamma_by_con[i].append(gamma)

    kept: list[_BlockRequest] = []
    for a in requests:
        if not any(a is not b and _subsumed(a, b) for b in requests):
            kept.append(a)

    blocks: list[PSDBlock] = []
    tags: list[BlockTag] = []
    for req in kept:
        if req.kind == "moment":
            blocks.append(moment_block(dct, req.vars, req.order))
            tags.append(BlockTag("moment", req.vars, req.order))
        else:
            con = pop.constraints[req.constraint]
            blocks.append(
                localizing_block(dct, con.poly, req.vars, req.order,
                                 allow_external_vars=True)
            )
            tags.append(BlockTag("loc", req.vars, req.order, req.constraint))

    # Equality constraints pin every representable consequence L_y(g * m) = 0
    # instead of a symmetric localizing block: over the home clique and each
    # planned subset up to the relaxation's degree budget, plus the scopes of
    # kept PSD blocks whose basis can represent g (those would otherwise be
    # forced singular at every feasible point, leaving the SDP without a
    # strictly feasible interior).
    for i in equalities:
        g = pop.constraints[i].poly
        gamma_deg = g.degree
        omega = _omega(g)
        gvars = g.variables()
        scopes: list[tuple[Polynomial, tuple[int, ...], int]] = []
        seen_scopes: set = set()

        def add_scope(mult: Polynomial, vars_, budget: int, key):
            if budget < 0:
                return
            if key in seen_scopes:
                return
            seen_scopes.add(key)
            scopes.append((mult, tuple(sorted(vars_)), budget))

        add_scope(g, home_clique[i], 2 * (d - omega), ("home", home_clique[i]))
        for gamma in gamma_by_con[i]:
            add_scope(
                g, gamma,
                max(2 * (d - omega + 1), 2 * (d + 1) - gamma_deg),
                ("sub", gamma),
            )
        # sublevel blocks whose basis can represent g would be forced
        # singular without these consequence rows
        for req in kept:
            if req.key() not in sublevel_keys or not gvars <= set(req.vars):
                continue
            if req.kind == "moment":
                add_scope(g, req.vars, 2 * req.order - gamma_deg,
                          ("blk", req.vars, req.order))
            else:
                h = pop.constraints[req.constraint].poly
                if gamma_deg <= req.order:
                    add_scope(g * h, req.vars, req.order,
                              ("prod", req.constraint, req.vars, req.order))

        for mult, scope_vars, budget in scopes:
            rows: list[tuple[int, int, int, float]] = []
            for k, mono in enumerate(monomial_basis(scope_vars, budget)):
                acc: dict[int, float] = {}
                for mg, cg in mult.items():
                    idx = dct.index(mono.mul(mg))
                    acc[idx] = acc.get(idx, 0.0) + cg
                for idx in sorted(acc):
                    if abs(acc[idx]) >= COEFF_DROP_EPS:
                        rows.append((k, k, idx, acc[idx]))
            if rows:
                blocks.append(PSDBlock(len(monomial_basis(scope_vars, budget)), rows))
                tags.append(BlockTag("zero", scope_vars, budget, i))

    obj_terms = index_polynomial(dct, pop.objective)
    offset = 0.0
    objective = []
    for idx, coeff in obj_terms:
        if idx == 0:
            offset += coeff
        else:
            objective.append((idx, coeff))

    dct.freeze()
    # only magnitudes above 1 need equilibration; tiny radii would blow up
    # the scaled coefficients instead
    scales = []
    for dom in pop.domains:
        radius = max(abs(dom.lo), abs(dom.hi))
        scales.append(max(radius, 1.0) if math.isfinite(radius) else 1.0)
    return Relaxation(
        dct=dct,
        blocks=blocks,
        tags=tags,
        objective=objective,
        objective_offset=offset,
        sense=pop.sense,
        cliques=list(cover.cliques),
        nvars=pop.nvars,
        var_scales=scales,
    )
