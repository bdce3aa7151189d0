"""Sparse multivariate polynomial algebra and moment-variable indexing.

Monomials are stored as sparse exponent maps and ordered by (total degree,
graded lexicographic on variable indices), which fixes a canonical basis
order everywhere in the package.  Polynomials map monomials to float
coefficients; coefficients whose magnitude falls below ``COEFF_DROP_EPS``
after arithmetic are dropped.

A :class:`MomentDictionary` assigns a stable integer index to every reduced
monomial it sees, with index 0 pinned to the constant monomial.  Power
reductions (``x_i^2 = 1`` for signed binaries, ``x_i^2 = x_i`` for 0/1
binaries) are applied at dictionary lookup, never inside polynomial
arithmetic, so symbolic products stay exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Mapping

import numpy as np

from .errors import DimensionError, StructureError

# Coefficients below this magnitude are treated as exact zeros.
COEFF_DROP_EPS = 1e-12


class ReductionKind(Enum):
    NONE = "none"
    INVOLUTORY = "involutory"  # x^2 = 1
    IDEMPOTENT = "idempotent"  # x^2 = x


class Monomial:
    """Immutable sparse monomial: a map from variable index to positive power."""

    __slots__ = ("exps", "degree", "_hash")

    def __init__(self, exps: Iterable[tuple[int, int]] = ()):
        items = []
        for v, p in exps:
            if p == 0:
                continue
            if p < 0 or v < 0:
                raise ValueError(f"invalid exponent {p} for variable {v}")
            items.append((int(v), int(p)))
        items.sort()
        for (a, _), (b, _) in zip(items, items[1:]):
            if a == b:
                raise ValueError(f"duplicate variable {a} in monomial")
        self.exps: tuple[tuple[int, int], ...] = tuple(items)
        self.degree: int = sum(p for _, p in items)
        self._hash = hash(self.exps)

    @property
    def is_constant(self) -> bool:
        return not self.exps

    def variables(self) -> tuple[int, ...]:
        return tuple(v for v, _ in self.exps)

    def power(self, var: int) -> int:
        for v, p in self.exps:
            if v == var:
                return p
        return 0

    def mul(self, other: "Monomial") -> "Monomial":
        if not self.exps:
            return other
        if not other.exps:
            return self
        acc = dict(self.exps)
        for v, p in other.exps:
            acc[v] = acc.get(v, 0) + p
        return Monomial(acc.items())

    def sort_key(self) -> tuple:
        # degree first, then graded-lex: earlier variables with higher powers
        # come first within a degree class.
        return (self.degree, tuple((v, -p) for v, p in self.exps))

    def __mul__(self, other: "Monomial") -> "Monomial":
        return self.mul(other)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Monomial) and self.exps == other.exps

    def __lt__(self, other: "Monomial") -> bool:
        return self.sort_key() < other.sort_key()

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        if not self.exps:
            return "1"
        return "*".join(f"x{v}" + (f"^{p}" if p > 1 else "") for v, p in self.exps)


ONE = Monomial()


def monomial(*pairs: tuple[int, int]) -> Monomial:
    """Shorthand constructor: ``monomial((0, 2), (3, 1))`` is x0^2*x3."""
    return Monomial(pairs)


def monomial_basis(variables: Iterable[int], degree: int) -> list[Monomial]:
    """All monomials of total degree <= ``degree`` in the given variables.

    Returned in canonical order; the length is C(len(vars)+degree, degree).
    No power reduction is applied here (that happens at dictionary lookup).
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    vars_sorted = sorted(set(int(v) for v in variables))
    from itertools import combinations_with_replacement

    out: list[Monomial] = []
    for t in range(degree + 1):
        for combo in combinations_with_replacement(vars_sorted, t):
            counts: dict[int, int] = {}
            for v in combo:
                counts[v] = counts.get(v, 0) + 1
            out.append(Monomial(counts.items()))
    return out


class ReductionRule:
    """Per-variable power rewrite applied at moment-dictionary lookup."""

    __slots__ = ("kinds",)

    def __init__(self, kinds: Iterable[ReductionKind]):
        self.kinds = tuple(kinds)

    @classmethod
    def none(cls, nvars: int = 0) -> "ReductionRule":
        return cls((ReductionKind.NONE,) * nvars)

    @property
    def is_trivial(self) -> bool:
        return all(k is ReductionKind.NONE for k in self.kinds)

    def kind(self, var: int) -> ReductionKind:
        if var < len(self.kinds):
            return self.kinds[var]
        return ReductionKind.NONE

    def reduce(self, m: Monomial) -> Monomial:
        if self.is_trivial:
            return m
        out = []
        changed = False
        for v, p in m.exps:
            k = self.kind(v)
            if k is ReductionKind.INVOLUTORY:
                q = p % 2
            elif k is ReductionKind.IDEMPOTENT:
                q = 1
            else:
                q = p
            if q != p:
                changed = True
            if q:
                out.append((v, q))
        return Monomial(out) if changed else m


def reduce_monomial(m: Monomial, rule: ReductionRule | None) -> Monomial:
    """Fixed point of the per-variable power rewrite; degree never grows."""
    return m if rule is None else rule.reduce(m)


class Polynomial:
    """Sparse polynomial over float coefficients in a fixed variable space."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: Mapping[Monomial, float] | None = None):
        self.nvars = int(nvars)
        self.terms: dict[Monomial, float] = {}
        if terms:
            for m, c in terms.items():
                if abs(c) < COEFF_DROP_EPS:
                    continue
                if m.exps and m.exps[-1][0] >= self.nvars:
                    raise DimensionError(
                        f"monomial {m} references variable >= nvars={self.nvars}"
                    )
                self.terms[m] = float(c)

    # -- constructors -------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "Polynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value: float) -> "Polynomial":
        return cls(nvars, {ONE: value})

    @classmethod
    def variable(cls, nvars: int, var: int) -> "Polynomial":
        return cls(nvars, {Monomial([(var, 1)]): 1.0})

    @classmethod
    def from_terms(
        cls, nvars: int, terms: Iterable[tuple[float, Iterable[tuple[int, int]]]]
    ) -> "Polynomial":
        acc: dict[Monomial, float] = {}
        for coeff, exps in terms:
            m = Monomial(exps)
            acc[m] = acc.get(m, 0.0) + coeff
        return cls(nvars, acc)

    # -- queries ------------------------------------------------------------

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def degree(self) -> int:
        return max((m.degree for m in self.terms), default=0)

    def variables(self) -> set[int]:
        out: set[int] = set()
        for m in self.terms:
            out.update(m.variables())
        return out

    def support(self) -> list[Monomial]:
        return sorted(self.terms, key=Monomial.sort_key)

    def coefficient(self, m: Monomial) -> float:
        return self.terms.get(m, 0.0)

    def items(self) -> Iterator[tuple[Monomial, float]]:
        return iter(self.terms.items())

    # -- arithmetic ---------------------------------------------------------

    def _check(self, other: "Polynomial") -> None:
        if self.nvars != other.nvars:
            raise DimensionError(
                f"variable-space mismatch: {self.nvars} vs {other.nvars}"
            )

    def __add__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        self._check(other)
        acc = dict(self.terms)
        for m, c in other.terms.items():
            acc[m] = acc.get(m, 0.0) + c
        return Polynomial(self.nvars, acc)

    def __radd__(self, other: float) -> "Polynomial":
        return self.__add__(other)

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.nvars, {m: -c for m, c in self.terms.items()})

    def __sub__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.nvars, other)
        return self.__add__(-other)

    def __rsub__(self, other: float) -> "Polynomial":
        return (-self).__add__(other)

    def __mul__(self, other: "Polynomial | float") -> "Polynomial":
        if isinstance(other, (int, float)):
            return Polynomial(self.nvars, {m: c * other for m, c in self.terms.items()})
        self._check(other)
        acc: dict[Monomial, float] = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = ma.mul(mb)
                acc[m] = acc.get(m, 0.0) + ca * cb
        return Polynomial(self.nvars, acc)

    def __rmul__(self, other: float) -> "Polynomial":
        return self.__mul__(other)

    # -- evaluation ---------------------------------------------------------

    def __call__(self, point: Iterable[float]) -> float:
        x = np.asarray(list(point), dtype=float)
        total = 0.0
        for m, c in self.terms.items():
            term = c
            for v, p in m.exps:
                term *= x[v] ** p
            total += term
        return float(total)

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at each row of ``points`` (shape (k, nvars))."""
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[0])
        for m, c in self.terms.items():
            term = np.full(points.shape[0], c)
            for v, p in m.exps:
                term = term * points[:, v] ** p
            out += term
        return out

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Polynomial)
            and self.nvars == other.nvars
            and self.terms == other.terms
        )

    def __hash__(self):  # pragma: no cover - polynomials are not dict keys
        return NotImplemented

    def __repr__(self) -> str:
        if not self.terms:
            return "0"
        parts = [f"{c:+g}*{m}" if not m.is_constant else f"{c:+g}" for m, c in
                 sorted(self.terms.items(), key=lambda kv: kv[0].sort_key())]
        return " ".join(parts)


def poly_mul(a: Polynomial, b: Polynomial) -> Polynomial:
    """Exact distributive product; zero coefficients are dropped."""
    return a * b


class MomentDictionary:
    """Bijection between reduced monomials and dense moment-variable indices.

    Index 0 is always the constant monomial.  Lookups apply the reduction
    rule first, so two monomials equal after reduction share one index.  The
    dictionary grows on demand until :meth:`freeze` is called, after which
    unknown monomials raise :class:`StructureError`.
    """

    def __init__(self, rule: ReductionRule | None = None):
        self.rule = rule
        self._index: dict[Monomial, int] = {ONE: 0}
        self._monomials: list[Monomial] = [ONE]
        self._frozen = False

    def __len__(self) -> int:
        return len(self._monomials)

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "MomentDictionary":
        self._frozen = True
        return self

    def index(self, m: Monomial) -> int:
        r = reduce_monomial(m, self.rule)
        idx = self._index.get(r)
        if idx is None:
            if self._frozen:
                raise StructureError(f"monomial {r} not in frozen dictionary")
            idx = len(self._monomials)
            self._index[r] = idx
            self._monomials.append(r)
        return idx

    def get(self, m: Monomial) -> int | None:
        """Index of ``m`` if present (after reduction); never grows."""
        return self._index.get(reduce_monomial(m, self.rule))

    def monomial(self, idx: int) -> Monomial:
        return self._monomials[idx]

    def monomials(self) -> list[Monomial]:
        return list(self._monomials)


def riesz_index(dictionary: MomentDictionary, m: Monomial) -> int:
    """Stable moment-variable index of the reduced monomial ``m``."""
    return dictionary.index(m)


def index_polynomial(
    dictionary: MomentDictionary, p: Polynomial
) -> list[tuple[int, float]]:
    """Index every term of ``p``; terms that collide after reduction merge."""
    acc: dict[int, float] = {}
    for m, c in p.items():
        idx = dictionary.index(m)
        acc[idx] = acc.get(idx, 0.0) + c
    return sorted((i, c) for i, c in acc.items() if abs(c) >= COEFF_DROP_EPS)


# ---------------------------------------------------------------------------
# Problem instances
# ---------------------------------------------------------------------------


class Sense(Enum):
    MIN = "min"
    MAX = "max"


class Relation(Enum):
    GE = "ge"  # g(x) >= 0
    EQ = "eq"  # g(x) == 0


@dataclass(frozen=True)
class VarDomain:
    """Admissible values of one variable."""

    kind: str  # "free" | "box" | "pm1" | "01int"
    lo: float = float("-inf")
    hi: float = float("inf")

    @classmethod
    def free(cls) -> "VarDomain":
        return cls("free")

    @classmethod
    def box(cls, lo: float, hi: float) -> "VarDomain":
        if not lo <= hi:
            raise ValueError(f"empty box [{lo}, {hi}]")
        return cls("box", float(lo), float(hi))

    @classmethod
    def pm_one(cls) -> "VarDomain":
        return cls("pm1", -1.0, 1.0)

    @classmethod
    def zero_one(cls) -> "VarDomain":
        return cls("01int", 0.0, 1.0)

    @property
    def reduction_kind(self) -> ReductionKind:
        if self.kind == "pm1":
            return ReductionKind.INVOLUTORY
        if self.kind == "01int":
            return ReductionKind.IDEMPOTENT
        return ReductionKind.NONE


@dataclass(frozen=True)
class Constraint:
    poly: Polynomial
    rel: Relation


@dataclass
class POPInstance:
    """A polynomial optimization problem over a semialgebraic set.

    ``meta`` carries optional encoder-provided hints (problem origin,
    per-constraint subset rules, variable-block layout) used by the
    problem-specific subset generators; it never affects feasibility.
    """

    nvars: int
    objective: Polynomial
    sense: Sense
    constraints: list[Constraint] = field(default_factory=list)
    domains: list[VarDomain] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.domains:
            self.domains = [VarDomain.free() for _ in range(self.nvars)]
        if len(self.domains) != self.nvars:
            raise DimensionError("domains length must equal nvars")
        if self.objective.nvars != self.nvars:
            raise DimensionError("objective nvars mismatch")
        for c in self.constraints:
            if c.poly.nvars != self.nvars:
                raise DimensionError("constraint nvars mismatch")

    def reduction_rule(self) -> ReductionRule:
        return ReductionRule(d.reduction_kind for d in self.domains)

    def binary_like_vars(self) -> list[int]:
        """Variables whose domain is absorbed by a power reduction."""
        return [
            i
            for i, d in enumerate(self.domains)
            if d.reduction_kind is not ReductionKind.NONE
        ]


# ---------------------------------------------------------------------------
# Native JSON format
# ---------------------------------------------------------------------------
#
# {
#   "nvars": n,
#   "sense": "min" | "max",
#   "objective": [[coeff, [var, pow], [var, pow], ...], ...],
#   "constraints": [{"poly": [...terms...], "rel": "ge" | "eq"}, ...],
#   "domains": ["free" | ["box", lo, hi] | "pm1" | "01int", ...],
#   "meta": {...}            # optional
# }


def _poly_to_json(p: Polynomial) -> list:
    return [[c, *[[v, e] for v, e in m.exps]] for m, c in
            sorted(p.terms.items(), key=lambda kv: kv[0].sort_key())]


def _poly_from_json(nvars: int, data: list) -> Polynomial:
    return Polynomial.from_terms(
        nvars, ((term[0], [(int(v), int(e)) for v, e in term[1:]]) for term in data)
    )


def _domain_to_json(d: VarDomain):
    if d.kind == "box":
        return ["box", d.lo, d.hi]
    return d.kind


def _domain_from_json(data) -> VarDomain:
    if isinstance(data, str):
        if data == "free":
            return VarDomain.free()
        if data == "pm1":
            return VarDomain.pm_one()
        if data == "01int":
            return VarDomain.zero_one()
        raise ValueError(f"unknown domain {data!r}")
    kind, lo, hi = data
    if kind != "box":
        raise ValueError(f"unknown domain {data!r}")
    return VarDomain.box(lo, hi)


def pop_to_json(pop: POPInstance) -> dict:
    out = {
        "nvars": pop.nvars,
        "sense": pop.sense.value,
        "objective": _poly_to_json(pop.objective),
        "constraints": [
            {"poly": _poly_to_json(c.poly), "rel": c.rel.value}
            for c in pop.constraints
        ],
        "domains": [_domain_to_json(d) for d in pop.domains],
    }
    if pop.meta:
        out["meta"] = pop.meta
    return out


def pop_from_json(data: dict) -> POPInstance:
    nvars = int(data["nvars"])
    return POPInstance(
        nvars=nvars,
        objective=_poly_from_json(nvars, data["objective"]),
        sense=Sense(data["sense"]),
        constraints=[
            Constraint(_poly_from_json(nvars, c["poly"]), Relation(c["rel"]))
            for c in data.get("constraints", [])
        ],
        domains=[_domain_from_json(d) for d in data.get("domains", [])]
        or [VarDomain.free() for _ in range(nvars)],
        meta=data.get("meta", {}),
    )


def save_pop(pop: POPInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pop_to_json(pop), fh, indent=1)


def load_pop(path) -> POPInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return pop_from_json(json.load(fh))
