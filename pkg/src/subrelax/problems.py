"""Problem-class encoders, instance I/O, subset generators, and oracles.

Six encoders produce :class:`POPInstance` objects: max-cut and max-clique
from weighted graphs, mixed-integer and continuous QCQPs from quadratic
data, and two one-hidden-layer ReLU network problems (Lipschitz-constant
upper bounds and robustness certification).  Each encoder attaches the
ordered subset rule of its class in ``pop.meta`` so the ``auto`` heuristic
can build the problem-specific plan.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, StructureError
from .polynomials import (
    Constraint,
    Monomial,
    POPInstance,
    Polynomial,
    Relation,
    Sense,
    VarDomain,
)
from .sparsity import CliqueCover
from .sublevel import (
    PlanEntry,
    SubsetPlan,
    anchored_windows,
    cyclic_windows,
)

# ---------------------------------------------------------------------------
# Graph instances
# ---------------------------------------------------------------------------


@dataclass
class GraphInstance:
    """Undirected weighted graph with 0-based vertex indices."""

    n: int
    edges: list[tuple[int, int, float]]
    name: str = ""

    def __post_init__(self):
        seen = set()
        norm = []
        for i, j, w in self.edges:
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i},{j}) out of range")
            if not math.isfinite(w):
                raise ValueError(f"non-finite weight on edge ({i},{j})")
            a, b = (i, j) if i < j else (j, i)
            if (a, b) in seen:
                raise ValueError(f"duplicate edge ({a},{b})")
            seen.add((a, b))
            norm.append((a, b, float(w)))
        self.edges = sorted(norm)

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            W[i, j] = W[j, i] = w
        return W


def laplacian(g: GraphInstance) -> np.ndarray:
    """Graph Laplacian diag(W 1) - W."""
    W = g.weight_matrix()
    return np.diag(W.sum(axis=1)) - W


def parse_rudy(path) -> GraphInstance:
    """Read a rudy-style edge list: "n m" then m lines "i j w" (1-based)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    header = None
    lineno = 0
    for lineno, raw in enumerate(lines, start=1):
        if raw.strip():
            header = raw.split()
            break
    if header is None:
        raise ParseError("empty file")
    if len(header) < 2:
        raise ParseError("header must be 'n m'", lineno)
    try:
        n, m = int(header[0]), int(header[1])
    except ValueError:
        raise ParseError("header must contain two integers", lineno) from None
    edges = []
    count = 0
    for no, raw in enumerate(lines[lineno:], start=lineno + 1):
        if not raw.strip():
            continue
        parts = raw.split()
        if len(parts) < 3:
            raise ParseError("edge line must be 'i j w'", no)
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("malformed edge line", no) from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise ParseError(f"vertex index out of range 1..{n}", no)
        edges.append((i - 1, j - 1, w))
        count += 1
    if count != m:
        raise ParseError(f"header promised {m} edges, found {count}")
    import os

    return GraphInstance(n, edges, name=os.path.basename(str(path)))


def write_rudy(g: GraphInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{g.n} {len(g.edges)}\n")
        for i, j, w in g.edges:
            wtxt = str(int(w)) if float(w).is_integer() else f"{w:.17g}"
            fh.write(f"{i + 1} {j + 1} {wtxt}\n")


def random_graph(
    n: int, density: float, seed: int, weights: str = "unit"
) -> GraphInstance:
    """Seeded Erdos-Renyi-style graph; weights 'unit', 'pm' or 'uniform'."""
    rng = np.random.default_rng(seed)
    edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                if weights == "unit":
                    w = 1.0
                elif weights == "pm":
                    w = float(rng.choice([-1.0, 1.0]))
                else:
                    w = float(rng.integers(-10, 11))
                if w != 0.0:
                    edges.append((i, j, w))
    return GraphInstance(n, edges, name=f"rand_{n}_{seed}")


# ---------------------------------------------------------------------------
# Max-Cut / Max-Clique
# ---------------------------------------------------------------------------


def encode_maxcut(g: GraphInstance) -> POPInstance:
    """Maximize the cut weight (1/4) x' L x over signed binaries.

    The x_i^2 = 1 constraints are absorbed by the involutory power
    reduction; each variable still anchors order-(d+1) subsets of the
    sublevel relaxation.
    """
    L = laplacian(g)
    terms = []
    for i in range(g.n):
        if L[i, i] != 0.0:
            terms.append((L[i, i] / 4.0, [(i, 2)]))
    for i in range(g.n):
        for j in range(i + 1, g.n):
            if L[i, j] != 0.0:
                terms.append((L[i, j] / 2.0, [(i, 1), (j, 1)]))
    return POPInstance(
        nvars=g.n,
        objective=Polynomial.from_terms(g.n, terms),
        sense=Sense.MAX,
        constraints=[],
        domains=[VarDomain.pm_one() for _ in range(g.n)],
        meta={"origin": "maxcut", "force_dense": False, "name": g.name},
    )


def encode_maxclique(g: GraphInstance) -> POPInstance:
    """Maximize x' A x over the unit simplex (value 1 - 1/omega(G)).

    The box [0,1] is written as x_i - x_i^2 >= 0; the simplex equality
    makes the problem dense, so the dense relaxation mode is forced.
    """
    n = g.n
    terms = []
    for i, j, w in g.edges:
        if w != 0.0:
            terms.append((2.0, [(i, 1), (j, 1)]))  # adjacency, not weights
    objective = Polynomial.from_terms(n, terms)
    simplex = Polynomial.from_terms(
        n, [(1.0, [(i, 1)]) for i in range(n)] + [(-1.0, [])]
    )
    constraints = [Constraint(simplex, Relation.EQ)]
    rules: list = [["ordered"]]
    for i in range(n):
        box = Polynomial.from_terms(n, [(1.0, [(i, 1)]), (-1.0, [(i, 2)])])
        constraints.append(Constraint(box, Relation.GE))
        rules.append(["anchored", i])
    return POPInstance(
        nvars=n,
        objective=objective,
        sense=Sense.MAX,
        constraints=constraints,
        domains=[VarDomain.box(0.0, 1.0) for _ in range(n)],
        meta={
            "origin": "maxclique",
            "force_dense": True,
            "subset_rules": rules,
            "name": g.name,
        },
    )


# ---------------------------------------------------------------------------
# Quadratic instances (MIQCP / QCQP)
# ---------------------------------------------------------------------------


@dataclass
class QuadInstance:
    """Quadratic objective/constraints with bounds and optional integrality.

    Quadratic constraints mean x'Qx + b'x <= c; linear rows mean A x = rhs.
    """

    n: int
    Q0: np.ndarray
    b0: np.ndarray
    c0: float = 0.0
    quad: list[tuple[np.ndarray, np.ndarray, float]] = field(default_factory=list)
    A: np.ndarray | None = None
    rhs: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    integer: np.ndarray | None = None
    sense: Sense = Sense.MIN
    name: str = ""

    def __post_init__(self):
        self.Q0 = np.asarray(self.Q0, dtype=float)
        self.b0 = np.asarray(self.b0, dtype=float)
        if self.Q0.shape != (self.n, self.n):
            raise ValueError("Q0 must be n x n")
        if not np.allclose(self.Q0, self.Q0.T):
            raise ValueError("Q0 must be symmetric")
        for Q, b, _ in self.quad:
            if np.asarray(Q).shape != (self.n, self.n):
                raise ValueError("quadratic constraint matrix must be n x n")
        if self.lo is None:
            self.lo = np.zeros(self.n)
        if self.hi is None:
            self.hi = np.ones(self.n)
        if self.integer is None:
            self.integer = np.zeros(self.n, dtype=bool)
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        self.integer = np.asarray(self.integer, dtype=bool)


def _quad_poly(n: int, Q: np.ndarray, b: np.ndarray, const: float) -> Polynomial:
    terms = []
    for i in range(n):
        if Q[i, i] != 0.0:
            terms.append((float(Q[i, i]), [(i, 2)]))
        if b[i] != 0.0:
            terms.append((float(b[i]), [(i, 1)]))
        for j in range(i + 1, n):
            if Q[i, j] != 0.0:
                terms.append((2.0 * float(Q[i, j]), [(i, 1), (j, 1)]))
    if const != 0.0:
        terms.append((float(const), []))
    return Polynomial.from_terms(n, terms)


def _encode_quadratic(qi: QuadInstance, integer_mode: bool) -> POPInstance:
    n = qi.n
    objective = _quad_poly(n, qi.Q0, qi.b0, qi.c0)
    constraints: list[Constraint] = []
    rules: list = []
    domains: list[VarDomain] = []

    for Q, b, cval in qi.quad:
        Q = np.asarray(Q, dtype=float)
        b = np.asarray(b, dtype=float)
        g = Polynomial.constant(n, float(cval)) - _quad_poly(n, Q, b, 0.0)
        constraints.append(Constraint(g, Relation.GE))
        # identity-shaped quadratics share the ordered window rule of the
        # linear rows; arbitrary quadratics get no sublevel subsets
        rules.append(["ordered"] if np.allclose(Q, np.eye(n)) else ["none"])

    if qi.A is not None:
        A = np.asarray(qi.A, dtype=float)
        rhs = np.asarray(qi.rhs, dtype=float)
        for r in range(A.shape[0]):
            terms = [(float(A[r, j]), [(j, 1)]) for j in range(n) if A[r, j] != 0.0]
            terms.append((-float(rhs[r]), []))
            constraints.append(
                Constraint(Polynomial.from_terms(n, terms), Relation.EQ)
            )
            rules.append(["ordered"])

    for i in range(n):
        lo, hi = float(qi.lo[i]), float(qi.hi[i])
        if integer_mode and qi.integer[i]:
            if (lo, hi) != (0.0, 1.0):
                raise ConfigError(
                    "only binary integers (bounds [0,1]) are supported"
                )
            domains.append(VarDomain.zero_one())
            continue
        if math.isinf(lo) and math.isinf(hi):
            domains.append(VarDomain.free())
            continue
        if math.isinf(lo) or math.isinf(hi):
            raise ConfigError("one-sided bounds are not supported")
        domains.append(VarDomain.box(lo, hi))
        box = Polynomial.from_terms(
            n,
            [
                (-1.0, [(i, 2)]),
                (lo + hi, [(i, 1)]),
                (-lo * hi, []),
            ],
        )
        constraints.append(Constraint(box, Relation.GE))
        rules.append(["anchored", i])

    force_dense = bool(qi.quad) or qi.A is not None
    return POPInstance(
        nvars=n,
        objective=objective,
        sense=qi.sense,
        constraints=constraints,
        domains=domains,
        meta={
            "origin": "miqcp" if integer_mode else "qcqp",
            "force_dense": force_dense,
            "subset_rules": rules,
            "name": qi.name,
        },
    )


def encode_miqcp(qi: QuadInstance) -> POPInstance:
    """Binary variables become idempotent reductions (x^2 = x); continuous
    bounded variables get explicit box constraints."""
    return _encode_quadratic(qi, integer_mode=True)


def encode_qcqp(qi: QuadInstance) -> POPInstance:
    """All variables continuous; boxes become (x-lo)(hi-x) >= 0."""
    return _encode_quadratic(qi, integer_mode=False)


def quad_to_json(qi: QuadInstance) -> dict:
    out = {
        "n": qi.n,
        "sense": qi.sense.value,
        "Q0": qi.Q0.tolist(),
        "b0": qi.b0.tolist(),
        "c0": qi.c0,
        "quad": [
            {"Q": np.asarray(Q).tolist(), "b": np.asarray(b).tolist(), "c": c}
            for Q, b, c in qi.quad
        ],
        "lo": qi.lo.tolist(),
        "hi": qi.hi.tolist(),
        "integer": [bool(b) for b in qi.integer],
    }
    if qi.A is not None:
        out["A"] = np.asarray(qi.A).tolist()
        out["rhs"] = np.asarray(qi.rhs).tolist()
    if qi.name:
        out["name"] = qi.name
    return out


def quad_from_json(data: dict) -> QuadInstance:
    return QuadInstance(
        n=int(data["n"]),
        Q0=np.array(data["Q0"], dtype=float),
        b0=np.array(data["b0"], dtype=float),
        c0=float(data.get("c0", 0.0)),
        quad=[
            (np.array(q["Q"], dtype=float), np.array(q["b"], dtype=float), float(q["c"]))
            for q in data.get("quad", [])
        ],
        A=np.array(data["A"], dtype=float) if "A" in data else None,
        rhs=np.array(data["rhs"], dtype=float) if "rhs" in data else None,
        lo=np.array(data["lo"], dtype=float) if "lo" in data else None,
        hi=np.array(data["hi"], dtype=float) if "hi" in data else None,
        integer=np.array(data["integer"], dtype=bool) if "integer" in data else None,
        sense=Sense(data.get("sense", "min")),
        name=data.get("name", ""),
    )


def load_quad(path) -> QuadInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return quad_from_json(json.load(fh))


def save_quad(qi: QuadInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(quad_to_json(qi), fh, indent=1)


# ---------------------------------------------------------------------------
# One-hidden-layer ReLU network instances
# ---------------------------------------------------------------------------


@dataclass
class NNInstance:
    """Dense 1-hidden-layer network data: hidden layer u = relu(A x + b)."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    xbar: np.ndarray
    eps: float
    name: str = ""

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.xbar = np.asarray(self.xbar, dtype=float)
        p2, p1 = self.A.shape
        if p1 < 1 or p2 < 1:
            raise ValueError("network needs at least one input and one hidden unit")
        if self.b.shape != (p2,) or self.c.shape != (p2,):
            raise ValueError("b and c must have length p2")
        if self.xbar.shape != (p1,):
            raise ValueError("xbar must have length p1")
        if not (self.eps > 0):
            raise ValueError("eps must be positive")
        for arr in (self.A, self.b, self.c, self.xbar):
            if not np.all(np.isfinite(arr)):
                raise ValueError("network data must be finite")

    @property
    def p1(self) -> int:
        return self.A.shape[1]

    @property
    def p2(self) -> int:
        return self.A.shape[0]


def gen_random_nn(p1: int, p2: int, seed: int, eps: float = 10.0) -> NNInstance:
    """Seeded Gaussian network; weights scaled by the usual 1/sqrt(fan-in)."""
    if p1 < 1 or p2 < 1:
        raise ValueError("p1 and p2 must be >= 1")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p2, p1)) / math.sqrt(p1)
    b = rng.standard_normal(p2)
    c = rng.standard_normal(p2)
    return NNInstance(A, b, c, np.zeros(p1), eps, name=f"net_{p1}_{p2}_s{seed}")


def nn_to_json(nn: NNInstance) -> dict:
    return {
        "p1": nn.p1,
        "p2": nn.p2,
        "A": nn.A.tolist(),
        "b": nn.b.tolist(),
        "c": nn.c.tolist(),
        "xbar": nn.xbar.tolist(),
        "eps": nn.eps,
        "name": nn.name,
    }


def nn_from_json(data: dict) -> NNInstance:
    return NNInstance(
        A=np.array(data["A"], dtype=float),
        b=np.array(data["b"], dtype=float),
        c=np.array(data["c"], dtype=float),
        xbar=np.array(data["xbar"], dtype=float),
        eps=float(data["eps"]),
        name=data.get("name", ""),
    )


def load_nn(path) -> NNInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return nn_from_json(json.load(fh))


def save_nn(nn: NNInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(nn_to_json(nn), fh, indent=1)


def _unit_ranges(nn: NNInstance) -> tuple[np.ndarray, np.ndarray]:
    """Interval bounds of A x + b over the eps-box around xbar."""
    center = nn.A @ nn.xbar + nn.b
    spread = np.abs(nn.A).sum(axis=1) * nn.eps
    return center - spread, center + spread


def encode_lipschitz(nn: NNInstance) -> POPInstance:
    """Upper bound of the network's Lipschitz constant as a QCQP.

    Variables: inputs x (p1), activation pattern bits u for the unstable
    hidden units, dual directions t (p1).  Maximize t' A' diag(u) c subject
    to pattern consistency (u - 1/2)(Ax + b) >= 0, t in [-1,1] via
    1 - t^2 >= 0, and x in the eps-box around xbar.

    The pattern bits are signed by the idempotent power reduction (u^2 = u)
    instead of explicit u(u-1) = 0 constraints, and units whose pre-
    activation sign is fixed over the whole input box are folded into the
    objective up front; both would otherwise leave the moment relaxation
    without a strictly feasible point.
    """
    p1, p2 = nn.p1, nn.p2
    lo, hi = _unit_ranges(nn)
    unstable = [j for j in range(p2) if lo[j] < 0.0 < hi[j]]
    always_on = [j for j in range(p2) if lo[j] >= 0.0]

    nu = len(unstable)
    n = 2 * p1 + nu
    x = list(range(p1))
    u = list(range(p1, p1 + nu))
    t = list(range(p1 + nu, n))

    terms = []
    for k in range(p1):
        fixed = sum(nn.A[j, k] * nn.c[j] for j in always_on)
        if fixed != 0.0:
            terms.append((float(fixed), [(t[k], 1)]))
        for pos, j in enumerate(unstable):
            coeff = nn.A[j, k] * nn.c[j]
            if coeff != 0.0:
                terms.append((float(coeff), [(u[pos], 1), (t[k], 1)]))
    objective = Polynomial.from_terms(n, terms)

    constraints: list[Constraint] = []
    rules: list = []
    for pos, j in enumerate(unstable):
        terms = [
            (float(nn.A[j, i]), [(u[pos], 1), (x[i], 1)]) for i in range(p1)
            if nn.A[j, i] != 0.0
        ]
        terms += [
            (-0.5 * float(nn.A[j, i]), [(x[i], 1)]) for i in range(p1)
            if nn.A[j, i] != 0.0
        ]
        if nn.b[j] != 0.0:
            terms.append((float(nn.b[j]), [(u[pos], 1)]))
            terms.append((-0.5 * float(nn.b[j]), []))
        constraints.append(Constraint(Polynomial.from_terms(n, terms), Relation.GE))
        rules.append(["lip_u", pos])
    for k in range(p1):
        g = Polynomial.from_terms(n, [(1.0, []), (-1.0, [(t[k], 2)])])
        constraints.append(Constraint(g, Relation.GE))
        rules.append(["lip_t", k])
    for i in range(p1):
        g = Polynomial.from_terms(
            n,
            [
                (nn.eps**2 - nn.xbar[i] ** 2, []),
                (2.0 * nn.xbar[i], [(x[i], 1)]),
                (-1.0, [(x[i], 2)]),
            ],
        )
        constraints.append(Constraint(g, Relation.GE))
        rules.append(["lip_x", i])

    domains = (
        [VarDomain.box(nn.xbar[i] - nn.eps, nn.xbar[i] + nn.eps) for i in range(p1)]
        + [VarDomain.zero_one() for _ in range(nu)]
        + [VarDomain.box(-1.0, 1.0) for _ in range(p1)]
    )
    return POPInstance(
        nvars=n,
        objective=objective,
        sense=Sense.MAX,
        constraints=constraints,
        domains=domains,
        meta={
            "origin": "lip",
            "force_dense": False,
            "subset_rules": rules,
            "var_blocks": {"x": x, "u": u, "t": t},
            "domain_anchors": False,
            "name": nn.name,
        },
    )


def encode_cert(nn: NNInstance) -> POPInstance:
    """Robustness certification: maximize c'u over the exact ReLU graph.

    u_j = relu(A_j x + b_j) is encoded by u(u - Ax - b) = 0, u >= Ax + b,
    u >= 0, with x in the eps-box around xbar.  Units whose pre-activation
    sign is fixed over the box are affine there and get folded into the
    objective; keeping them as quadratic constraints would leave the moment
    relaxation without a strictly feasible point.
    """
    p1, p2 = nn.p1, nn.p2
    lo, hi = _unit_ranges(nn)
    unstable = [j for j in range(p2) if lo[j] < 0.0 < hi[j]]
    always_on = [j for j in range(p2) if lo[j] >= 0.0]

    nu = len(unstable)
    n = p1 + nu
    x = list(range(p1))
    u = list(range(p1, n))

    obj_terms = []
    for j in always_on:
        if nn.c[j] != 0.0:
            for i in range(p1):
                if nn.A[j, i] != 0.0:
                    obj_terms.append((float(nn.c[j] * nn.A[j, i]), [(x[i], 1)]))
            if nn.b[j] != 0.0:
                obj_terms.append((float(nn.c[j] * nn.b[j]), []))
    for pos, j in enumerate(unstable):
        if nn.c[j] != 0.0:
            obj_terms.append((float(nn.c[j]), [(u[pos], 1)]))
    objective = Polynomial.from_terms(n, obj_terms)

    constraints: list[Constraint] = []
    rules: list = []
    for pos, j in enumerate(unstable):
        terms = [(1.0, [(u[pos], 2)])]
        terms += [
            (-float(nn.A[j, i]), [(u[pos], 1), (x[i], 1)])
            for i in range(p1)
            if nn.A[j, i] != 0.0
        ]
        if nn.b[j] != 0.0:
            terms.append((-float(nn.b[j]), [(u[pos], 1)]))
        constraints.append(Constraint(Polynomial.from_terms(n, terms), Relation.EQ))
        rules.append(["cert_u", pos])
    for pos, j in enumerate(unstable):
        terms = [(1.0, [(u[pos], 1)])]
        terms += [
            (-float(nn.A[j, i]), [(x[i], 1)]) for i in range(p1) if nn.A[j, i] != 0.0
        ]
        if nn.b[j] != 0.0:
            terms.append((-float(nn.b[j]), []))
        constraints.append(Constraint(Polynomial.from_terms(n, terms), Relation.GE))
        rules.append(["cert_u", pos])
    for pos, j in enumerate(unstable):
        constraints.append(
            Constraint(Polynomial.from_terms(n, [(1.0, [(u[pos], 1)])]), Relation.GE)
        )
        rules.append(["cert_u", pos])
    for i in range(p1):
        g = Polynomial.from_terms(
            n,
            [
                (nn.eps**2 - nn.xbar[i] ** 2, []),
                (2.0 * nn.xbar[i], [(x[i], 1)]),
                (-1.0, [(x[i], 2)]),
            ],
        )
        constraints.append(Constraint(g, Relation.GE))
        rules.append(["cert_x", i])

    domains = [
        VarDomain.box(nn.xbar[i] - nn.eps, nn.xbar[i] + nn.eps) for i in range(p1)
    ]
    for j in unstable:
        domains.append(VarDomain.box(0.0, max(float(hi[j]), 1e-6)))
    return POPInstance(
        nvars=n,
        objective=objective,
        sense=Sense.MAX,
        constraints=constraints,
        domains=domains,
        meta={
            "origin": "cert",
            "force_dense": False,
            "subset_rules": rules,
            "var_blocks": {"x": x, "u": u},
            "domain_anchors": False,
            "name": nn.name,
        },
    )


# ---------------------------------------------------------------------------
# Problem-specific subset plans
# ---------------------------------------------------------------------------


def maxcut_subsets(
    cover: CliqueCover, level: int, depth: int, anchor: int
) -> SubsetPlan:
    """Anchored ordered windows for one signed-binary variable.

    In every clique containing the anchor, subset t (t = 1..depth) holds the
    anchor plus level-1 consecutive clique members offset by t, cyclically.
    """
    entries = []
    for k in cover.containing({anchor}):
        subs = anchored_windows(cover.cliques[k], anchor, level, depth)
        if subs:
            entries.append(PlanEntry(("var", anchor), k, tuple(subs)))
    return SubsetPlan(entries)


def _mixed_windows(
    first: list[int],
    second: list[int],
    anchor: int | None,
    anchor_in_first: bool,
    n_first: int,
    n_second: int,
    depth: int,
) -> list[tuple[int, ...]]:
    """Windows mixing two variable groups (network encodings).

    The anchored group contributes its anchor plus consecutive members at
    increasing offsets; the other group contributes a sliding window.
    """
    out = []
    seen = set()
    la, lb = len(first), len(second)
    for i in range(1, depth + 1):
        w: set[int] = set()
        if anchor is not None and anchor_in_first:
            j = first.index(anchor)
            w.add(anchor)
            for o in range(n_first - 1):
                w.add(first[(j + i + o) % la])
        else:
            for o in range(n_first):
                w.add(first[(i - 1 + o) % la]) if la else None
        if anchor is not None and not anchor_in_first:
            j = second.index(anchor)
            w.add(anchor)
            for o in range(n_second - 1):
                w.add(second[(j + i + o) % lb])
        else:
            for o in range(n_second):
                w.add(second[(i - 1 + o) % lb]) if lb else None
        tw = tuple(sorted(w))
        if tw and tw not in seen:
            seen.add(tw)
            out.append(tw)
    return out


def build_problem_plan(
    pop: POPInstance, cover: CliqueCover, level: int, depth: int
) -> SubsetPlan:
    """The ordered problem-specific subset plan recorded by the encoder.

    Falls back to anchored windows for binary-domain variables when the
    instance carries no per-constraint rules (max-cut, pure-binary QP).
    """
    entries: list[PlanEntry] = []
    if level <= 0 or depth <= 0:
        return SubsetPlan(entries)
    rules = pop.meta.get("subset_rules")
    blocks = pop.meta.get("var_blocks", {})
    xs = blocks.get("x", [])
    us = blocks.get("u", [])
    ts = blocks.get("t", [])

    def assign(owner, subsets):
        for gamma in subsets:
            vs = frozenset(gamma)
            holders = cover.containing(vs)
            if not holders:
                raise StructureError(
                    f"subset {gamma} fits in no clique; check the relaxation mode"
                )
            entries.append(PlanEntry(owner, holders[0], (tuple(sorted(gamma)),)))

    if rules is not None:
        for i, rule in enumerate(rules):
            kind = rule[0]
            owner = ("con", i)
            if kind == "none":
                continue
            if kind == "ordered":
                # consecutive windows over the whole variable range
                members = list(range(pop.nvars))
                subs = [
                    tuple(sorted({members[(t + o) % len(members)] for o in range(level)}))
                    for t in range(depth)
                ]
                seen = set()
                subs = [s for s in subs if not (s in seen or seen.add(s))]
                assign(owner, subs)
            elif kind == "anchored":
                anchor = rule[1]
                for k in cover.containing({anchor}):
                    subs = anchored_windows(cover.cliques[k], anchor, level, depth)
                    if subs:
                        entries.append(PlanEntry(owner, k, tuple(subs)))
            elif kind == "lip_t":
                k_t = rule[1]
                subs = _mixed_windows(us, [ts[k_t]], None, False, level - 1, 1, depth)
                assign(owner, subs)
            elif kind == "lip_x":
                k_x = rule[1]
                hx = level // 2
                hu = level - hx
                subs = _mixed_windows(xs, us, xs[k_x], True, hx, hu, depth)
                assign(owner, subs)
            elif kind == "lip_u":
                j_u = rule[1]
                hx = level // 2
                hu = level - hx
                subs = _mixed_windows(xs, us, us[j_u], False, hx, hu, depth)
                assign(owner, subs)
            elif kind == "cert_u":
                k_u = rule[1]
                subs = _mixed_windows(xs, [us[k_u]], None, False, level - 1, 1, depth)
                assign(owner, subs)
            elif kind == "cert_x":
                anchor = rule[1]
                subs = _mixed_windows(xs, [], anchor, True, level, 0, depth)
                assign(owner, subs)
            else:
                raise ConfigError(f"unknown subset rule {rule!r}")

    if pop.meta.get("domain_anchors", True):
        for v in pop.binary_like_vars():
            for k in cover.containing({v}):
                subs = anchored_windows(cover.cliques[k], v, level, depth)
                if subs:
                    entries.append(PlanEntry(("var", v), k, tuple(subs)))
    return SubsetPlan(entries)


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


@dataclass
class BruteForceResult:
    value: float
    exact: bool
    point: np.ndarray


_EXACT_LIMIT = 20
_FEAS_TOL = 1e-8


def _feasible_mask(pop: POPInstance, points: np.ndarray) -> np.ndarray:
    mask = np.ones(points.shape[0], dtype=bool)
    for con in pop.constraints:
        vals = con.poly.eval_many(points)
        if con.rel is Relation.EQ:
            mask &= np.abs(vals) <= _FEAS_TOL
        else:
            mask &= vals >= -_FEAS_TOL
    return mask


def brute_force(
    pop: POPInstance, samples: int = 200_000, seed: int = 0
) -> BruteForceResult:
    """Exact enumeration for small binary problems, else seeded sampling.

    All-binary instances with at most 20 variables are enumerated exactly
    (infeasible points filtered with a small tolerance).  Anything larger or
    continuous falls back to a Monte Carlo scan over the variable domains
    plus box corners, and the result is flagged as an estimate.
    """
    n = pop.nvars
    discrete_vals = []
    all_binary = True
    for d in pop.domains:
        if d.kind == "pm1":
            discrete_vals.append((-1.0, 1.0))
        elif d.kind == "01int":
            discrete_vals.append((0.0, 1.0))
        else:
            all_binary = False
            break

    best_val = None
    best_pt = None
    maximize = pop.sense is Sense.MAX

    def consider(points: np.ndarray):
        nonlocal best_val, best_pt
        if points.size == 0:
            return
        mask = _feasible_mask(pop, points)
        if not mask.any():
            return
        vals = pop.objective.eval_many(points[mask])
        k = int(np.argmax(vals) if maximize else np.argmin(vals))
        v = float(vals[k])
        if best_val is None or (v > best_val if maximize else v < best_val):
            best_val = v
            best_pt = points[mask][k]

    if all_binary and n <= _EXACT_LIMIT:
        lo = np.array([v[0] for v in discrete_vals])
        hi = np.array([v[1] for v in discrete_vals])
        chunk_bits = min(n, 16)
        for base in range(0, 1 << n, 1 << chunk_bits):
            count = min(1 << chunk_bits, (1 << n) - base)
            codes = np.arange(base, base + count, dtype=np.int64)
            bits = (codes[:, None] >> np.arange(n)[None, :]) & 1
            points = lo[None, :] + bits * (hi - lo)[None, :]
            consider(points)
        if best_val is None:
            raise ValueError("no feasible point found by enumeration")
        return BruteForceResult(best_val, True, best_pt)

    rng = np.random.default_rng(seed)
    los = np.empty(n)
    his = np.empty(n)
    for i, d in enumerate(pop.domains):
        lo = d.lo if math.isfinite(d.lo) else -1.0
        hi = d.hi if math.isfinite(d.hi) else 1.0
        los[i], his[i] = lo, hi
    chunk = 50_000
    remaining = samples
    while remaining > 0:
        k = min(chunk, remaining)
        pts = los[None, :] + rng.random((k, n)) * (his - los)[None, :]
        for i, d in enumerate(pop.domains):
            if d.kind in ("pm1", "01int"):
                pts[:, i] = np.where(
                    pts[:, i] > (los[i] + his[i]) / 2.0, his[i], los[i]
                )
        consider(pts)
        remaining -= k
    if n <= 12:
        bits = (np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1
        consider(los[None, :] + bits * (his - los)[None, :])
    if best_val is None:
        raise ValueError("no feasible point found by sampling")
    return BruteForceResult(best_val, False, best_pt)
