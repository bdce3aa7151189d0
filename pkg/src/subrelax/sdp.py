"""Block SDP form, an embedded interior-point solver, and moment extraction.

A :class:`Relaxation` is lowered to a standard linear-matrix-inequality
problem over the free moment variables y (the normalization y_0 = 1 is
substituted into the constant parts):

    optimize  c . y + offset
    s.t.      F_0^(b) + sum_j y_j F_j^(b)  PSD   for every block b
              A y = a                            (zero-pinned blocks)

The solver is a primal-dual interior-point method with Nesterov-Todd
scaling and a predictor-corrector step.  Equality rows are eliminated up
front by Gaussian substitution, and directions along which a block vanishes
identically are projected out; moment relaxations of problems with affine
equality constraints have no strictly feasible point without this
reduction, and interior-point iterations diverge on them.

The embedded solver targets desk-scale problems (a few thousand scalar
variables, blocks up to a few hundred); larger instances should go through
the SDPA export and an external solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_solve, solve_triangular

from .errors import StructureError
from .polynomials import ONE, Monomial, Sense
from .sublevel import Relaxation, _reduced_basis


@dataclass
class SDPBlockData:
    """One PSD block: constant part plus per-variable coefficient matrices.

    ``const`` holds upper-triangle entries (r, c, value) of F_0; ``lin``
    holds (r, c, var, value) entries of the F_j.  ``diag`` marks blocks that
    are diagonal (1x1 blocks always are); it only affects the export format.
    ``row_scale`` is an optional solver hint (the natural magnitude of each
    basis row of a moment-type block); it does not change the problem.
    """

    size: int
    diag: bool = False
    const: list[tuple[int, int, float]] = field(default_factory=list)
    lin: list[tuple[int, int, int, float]] = field(default_factory=list)
    row_scale: list[float] | None = None

    def canonical(self) -> "SDPBlockData":
        return SDPBlockData(
            self.size, self.diag, sorted(self.const), sorted(self.lin)
        )


@dataclass
class BlockSDP:
    """Standard-form block SDP over m free scalar variables."""

    m: int
    blocks: list[SDPBlockData]
    c: np.ndarray
    offset: float
    sense: Sense
    eq_rows: list[list[tuple[int, float]]] = field(default_factory=list)
    eq_rhs: list[float] = field(default_factory=list)
    var_index: list[int] | None = None  # moment-dictionary index per variable
    var_scale: np.ndarray | None = None  # natural magnitude of each variable

    def block_sizes(self) -> list[int]:
        return [b.size for b in self.blocks]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BlockSDP):
            return NotImplemented
        return (
            self.m == other.m
            and self.sense == other.sense
            and self.offset == other.offset
            and np.array_equal(self.c, other.c)
            and [b.canonical() for b in self.blocks]
            == [b.canonical() for b in other.blocks]
            and [sorted(r) for r in self.eq_rows]
            == [sorted(r) for r in other.eq_rows]
            and self.eq_rhs == other.eq_rhs
        )


def assemble(relax: Relaxation) -> BlockSDP:
    """Lower a relaxation to a block SDP.

    The pinned moment y_0 = 1 moves into the constant parts and the
    objective offset; zero-pinned blocks become scalar equality rows; the
    remaining dictionary indices are compacted in ascending order.
    """
    used: set[int] = set()
    for block in relax.blocks:
        for _, _, idx, _ in block.entries:
            used.add(idx)
    for idx, _ in relax.objective:
        used.add(idx)
    used.discard(0)
    var_index = sorted(used)
    pos = {idx: j for j, idx in enumerate(var_index)}

    blocks: list[SDPBlockData] = []
    eq_rows: list[list[tuple[int, float]]] = []
    eq_rhs: list[float] = []
    seen_rows: set = set()
    for block, tag in zip(relax.blocks, relax.tags):
        if tag.kind == "zero":
            # each upper-triangle entry pins a linear form of moments to zero
            per_rc: dict[tuple[int, int], tuple[dict[int, float], float]] = {}
            for r, c, idx, val in block.entries:
                coeffs, const = per_rc.setdefault((r, c), ({}, 0.0))
                if idx == 0:
                    per_rc[(r, c)] = (coeffs, const + val)
                else:
                    coeffs[pos[idx]] = coeffs.get(pos[idx], 0.0) + val
            for (r, c) in sorted(per_rc):
                coeffs, const = per_rc[(r, c)]
                row = sorted((j, v) for j, v in coeffs.items() if v != 0.0)
                rhs = -const
                key = (tuple(row), rhs)
                if row and key not in seen_rows:
                    seen_rows.add(key)
                    eq_rows.append(row)
                    eq_rhs.append(rhs)
        else:
            data = SDPBlockData(size=block.size, diag=block.size == 1)
            for r, c, idx, val in block.entries:
                if idx == 0:
                    data.const.append((r, c, val))
                else:
                    data.lin.append((r, c, pos[idx], val))
            if relax.var_scales is not None and any(
                s != 1.0 for s in relax.var_scales
            ):
                basis = _reduced_basis(relax.dct, tag.vars, tag.order)
                data.row_scale = [
                    float(np.prod([relax.var_scales[v] ** p for v, p in b.exps]))
                    if b.exps else 1.0
                    for b in basis
                ]
            blocks.append(data)

    c = np.zeros(len(var_index))
    for idx, coeff in relax.objective:
        c[pos[idx]] = coeff

    var_scale = None
    if relax.var_scales is not None and any(s != 1.0 for s in relax.var_scales):
        var_scale = np.ones(len(var_index))
        for j, idx in enumerate(var_index):
            s = 1.0
            for v, p in relax.dct.monomial(idx).exps:
                s *= relax.var_scales[v] ** p
            var_scale[j] = s

    return BlockSDP(
        m=len(var_index),
        blocks=blocks,
        c=c,
        offset=relax.objective_offset,
        sense=relax.sense,
        eq_rows=eq_rows,
        eq_rhs=eq_rhs,
        var_index=var_index,
        var_scale=var_scale,
    )


# ---------------------------------------------------------------------------
# Interior-point solver
# ---------------------------------------------------------------------------


class SolveStatus(Enum):
    OPTIMAL = "Optimal"
    NEAR_OPTIMAL = "NearOptimal"
    INFEASIBLE = "Infeasible"
    ITER_LIMIT = "IterLimit"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolveOptions:
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    max_iter: int = 200
    step_fraction: float = 0.98
    divergence_tol: float = 1e10
    # The full Mehrotra cross term oscillates on degenerate moment problems;
    # the affine predictor is still used to pick the centering parameter.
    mehrotra: bool = False
    verbose: bool = False


@dataclass
class SolverReport:
    status: SolveStatus
    primal_obj: float = float("nan")
    dual_obj: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    solve_seconds: float = 0.0
    y: np.ndarray | None = None
    var_index: list[int] | None = None
    history: list[dict] = field(default_factory=list)
    message: str = ""
    moment_matrices: dict[int, np.ndarray] = field(default_factory=dict)
    dual_blocks: list[np.ndarray] | None = None
    # transient state used by the facial-reduction driver
    _works: list | None = None
    _free: list | None = None

    @property
    def bound(self) -> float:
        return self.primal_obj


# -- presolve ----------------------------------------------------------------


class _Infeasible(Exception):
    pass


def _solve_equalities(
    eq_rows: list[list[tuple[int, float]]], eq_rhs: list[float], m: int
) -> tuple[dict[int, tuple[float, dict[int, float]]], list[int]]:
    """Gaussian elimination of the equality rows.

    Returns a substitution map pivot -> (rhs, {free col: coeff}) meaning
    y_pivot = rhs - sum coeff * y_free, plus the sorted free columns.
    Dependent rows are dropped; inconsistent ones raise ``_Infeasible``.
    """
    solved: dict[int, tuple[float, dict[int, float]]] = {}
    for row, rhs in zip(eq_rows, eq_rhs):
        coeffs = {j: float(v) for j, v in row}
        r = float(rhs)
        for p in list(coeffs):
            if p in solved:
                w = coeffs.pop(p)
                prhs, pcoeffs = solved[p]
                r -= w * prhs
                for f, cf in pcoeffs.items():
                    coeffs[f] = coeffs.get(f, 0.0) - w * cf
        scale = max((abs(v) for v in coeffs.values()), default=0.0)
        coeffs = {j: v for j, v in coeffs.items() if abs(v) > 1e-12 * max(1.0, scale)}
        if not coeffs:
            if abs(r) > 1e-9 * (1.0 + abs(rhs)):
                raise _Infeasible(f"inconsistent equality row (0 = {r:g})")
            continue
        piv = max(coeffs, key=lambda j: (abs(coeffs[j]), -j))
        w = coeffs.pop(piv)
        new = {j: v / w for j, v in coeffs.items()}
        new_rhs = r / w
        # keep previously solved pivots expressed in free columns only
        for p, (prhs, pcoeffs) in solved.items():
            if piv in pcoeffs:
                cf = pcoeffs.pop(piv)
                solved[p] = (
                    prhs - cf * new_rhs,
                    _merge(pcoeffs, new, -cf),
                )
        solved[piv] = (new_rhs, new)
    free = [j for j in range(m) if j not in solved]
    return solved, free


def _merge(a: dict[int, float], b: dict[int, float], w: float) -> dict[int, float]:
    out = dict(a)
    for j, v in b.items():
        out[j] = out.get(j, 0.0) + w * v
    return {j: v for j, v in out.items() if v != 0.0}


class _BlockWork:
    """Per-block solver data after substitution and null-space projection.

    Block data is normalized to unit max magnitude (a PSD constraint is
    invariant under positive scaling), which keeps mixed-scale relaxations
    well conditioned.
    """

    def __init__(self, size: int, const: dict[tuple[int, int], float],
                 lin: dict[tuple[int, int, int], float], m: int,
                 row_scale: list[float] | None = None):
        s = size
        self.size = s
        if row_scale is not None:
            # congruence by the basis scales: entries of moment-type blocks
            # become dimensionless
            rs = np.asarray(row_scale, dtype=float)
            const = {(r, c): v / (rs[r] * rs[c]) for (r, c), v in const.items()}
            lin = {
                (r, c, j): v / (rs[r] * rs[c]) for (r, c, j), v in lin.items()
            }
        data_scale = max(
            [abs(v) for v in const.values()] + [abs(v) for v in lin.values()],
            default=1.0,
        )
        if data_scale <= 0:
            data_scale = 1.0
        self.data_scale = data_scale
        F0 = np.zeros((s, s))
        for (r, c), v in const.items():
            F0[r, c] += v / data_scale
            if r != c:
                F0[c, r] += v / data_scale
        self.F0_full = F0
        per_var: dict[int, list[tuple[int, int, float]]] = {}
        for (r, c, j), v in lin.items():
            per_var.setdefault(j, []).append((r, c, v / data_scale))
        self.active = np.array(sorted(per_var), dtype=int)
        rows, cols, vals = [], [], []
        for local, j in enumerate(self.active):
            for r, c, v in per_var[j]:
                rows.append(local)
                cols.append(r * s + c)
                vals.append(v)
                if r != c:
                    rows.append(local)
                    cols.append(c * s + r)
                    vals.append(v)
        self.V = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.active), s * s))
        self.max_abs = 1.0
        self.Q: np.ndarray | None = None  # projection onto the active face
        self.rsize = s
        self.F0 = F0
        self._project()

    def _project(self) -> None:
        """Project out directions v with F_0 v = 0 and F_j v = 0 for all j.

        The common null space is the null space of F_0^2 + sum_j F_j^2,
        computed from one dense eigendecomposition per block.
        """
        s = self.size
        if s == 0:
            return
        H_parts = [sp.csr_matrix(self.F0_full)]
        for local in range(len(self.active)):
            H_parts.append(self.V[local].reshape(s, s, order="C").tocsr())
        H = sp.vstack(H_parts, format="csr")
        S = np.asarray((H.T @ H).todense())
        w, U = np.linalg.eigh(S)
        wmax = max(float(w[-1]), 1e-30)
        keep = w > 1e-12 * wmax
        if keep.all():
            return
        Q = U[:, keep]
        self.Q = Q
        self.rsize = Q.shape[1]
        self.F0 = Q.T @ self.F0_full @ Q

    def lift(self, M: np.ndarray) -> np.ndarray:
        return M if self.Q is None else self.Q @ M @ self.Q.T

    def fold(self, y: np.ndarray) -> np.ndarray:
        """sum_j y_j F_j in the reduced space."""
        if len(self.active) == 0:
            return np.zeros((self.rsize, self.rsize))
        vec = self.V.T @ y[self.active]
        M = vec.reshape(self.size, self.size)
        return M if self.Q is None else self.Q.T @ M @ self.Q

    def inner_all(self, M: np.ndarray) -> np.ndarray:
        """<F_j, M> for every active j (M symmetric, reduced space)."""
        if len(self.active) == 0:
            return np.zeros(0)
        return self.V @ self.lift(M).reshape(-1)


def _build_works(sdp: BlockSDP):
    """Substitute equality rows into the blocks and project null directions.

    Returns (works, c_reduced, extra_offset, free_cols, pivot_map).
    """
    return _build_works_rows(sdp, sdp.eq_rows, sdp.eq_rhs)


def _build_works_rows(sdp: BlockSDP, eq_rows, eq_rhs):
    pivots, free = _solve_equalities(eq_rows, eq_rhs, sdp.m)
    fpos = {j: k for k, j in enumerate(free)}

    c = np.zeros(len(free))
    extra = 0.0
    for j in range(sdp.m):
        cj = float(sdp.c[j])
        if cj == 0.0:
            continue
        if j in pivots:
            rhs, coeffs = pivots[j]
            extra += cj * rhs
            for f, cf in coeffs.items():
                c[fpos[f]] -= cj * cf
        else:
            c[fpos[j]] += cj

    works = []
    for data in sdp.blocks:
        if data.size == 0:
            continue
        const: dict[tuple[int, int], float] = {}
        lin: dict[tuple[int, int, int], float] = {}
        for r, cc, v in data.const:
            const[(r, cc)] = const.get((r, cc), 0.0) + v
        for r, cc, j, v in data.lin:
            if j in pivots:
                rhs, coeffs = pivots[j]
                if rhs != 0.0:
                    const[(r, cc)] = const.get((r, cc), 0.0) + v * rhs
                for f, cf in coeffs.items():
                    key = (r, cc, fpos[f])
                    lin[key] = lin.get(key, 0.0) - v * cf
            else:
                key = (r, cc, fpos[j])
                lin[key] = lin.get(key, 0.0) + v
        scale = max(
            [abs(v) for v in const.values()] + [abs(v) for v in lin.values()],
            default=1.0,
        )
        tol = 1e-14 * max(1.0, scale)
        const = {k: v for k, v in const.items() if abs(v) > tol}
        lin = {k: v for k, v in lin.items() if abs(v) > tol}
        work = _BlockWork(data.size, const, lin, len(free), data.row_scale)
        if work.rsize > 0:
            works.append(work)
    return works, c, extra, free, pivots


def _nt_scaling(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """The Nesterov-Todd scaling point W with W Z W = X."""
    Lx = np.linalg.cholesky(X)
    Lz = np.linalg.cholesky(Z)
    M = Lz.T @ Lx
    U, sv, Vt = np.linalg.svd(M)
    G = Lx @ Vt.T / np.sqrt(sv)
    return G @ G.T


def _max_step(S: np.ndarray, dS: np.ndarray) -> float:
    """Largest alpha with S + alpha*dS PSD (S positive definite)."""
    if S.shape[0] == 1:
        if dS[0, 0] >= 0:
            return np.inf
        return S[0, 0] / -dS[0, 0]
    L = np.linalg.cholesky(S)
    M = solve_triangular(L, dS, lower=True)
    M = solve_triangular(L, M.T, lower=True).T
    wmin = float(np.linalg.eigvalsh((M + M.T) / 2.0)[0])
    if wmin >= -1e-14:
        return np.inf
    return -1.0 / wmin


def _chol_with_reg(B: np.ndarray):
    """Cholesky with escalating diagonal regularization; None when hopeless."""
    from scipy.linalg import cho_factor

    scale = max(1.0, float(np.trace(B)) / max(1, B.shape[0]))
    for reg in (0.0, 1e-13 * scale, 1e-10 * scale, 1e-7 * scale):
        try:
            return cho_factor(B + reg * np.eye(B.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    return None


def _face_oracle(
    works, free: list[int], opts: SolveOptions
) -> list[tuple[list[tuple[int, float]], float]] | None:
    """Equality rows of the face the feasible set lives on, if it is proper.

    Solves the auxiliary problem max t s.t. F(z) - t I PSD (which always has
    a strictly feasible point).  When its optimum is ~0, the dual solution X
    certifies that every feasible point satisfies F(y) v = 0 for the
    dominant eigenvectors v of X; those linear equations are returned so the
    caller can cut the problem down to the face and re-solve.  Returns None
    when the feasible set has interior or no certificate emerges.
    """
    m = len(free)
    blocks: list[SDPBlockData] = []
    fence = 1e4
    for w in works:
        s = w.rsize
        const, lin = [], []
        for r in range(s):
            for c in range(r, s):
                if w.F0[r, c] != 0.0:
                    const.append((r, c, float(w.F0[r, c])))
        for local, j in enumerate(w.active):
            Fj = np.asarray(w.V[local].todense()).reshape(w.size, w.size)
            Fr = Fj if w.Q is None else w.Q.T @ Fj @ w.Q
            for r in range(s):
                for c in range(r, s):
                    if abs(Fr[r, c]) > 1e-14:
                        lin.append((r, c, int(j), float(Fr[r, c])))
        for r in range(s):
            lin.append((r, r, m, -1.0))
        blocks.append(SDPBlockData(size=s, const=const, lin=lin))
    diag_const, diag_lin = [], []
    k = 0
    for j in range(m):
        diag_const.append((k, k, fence))
        diag_lin.append((k, k, j, -1.0))
        k += 1
        diag_const.append((k, k, fence))
        diag_lin.append((k, k, j, 1.0))
        k += 1
    diag_const.append((k, k, 1.0))
    diag_lin.append((k, k, m, -1.0))
    k += 1
    blocks.append(SDPBlockData(size=k, diag=True, const=diag_const, lin=diag_lin))
    c = np.zeros(m + 1)
    c[m] = 1.0
    aux = BlockSDP(m=m + 1, blocks=blocks, c=c, offset=0.0, sense=Sense.MAX)
    aux_opts = SolveOptions(gap_tol=1e-9, feas_tol=1e-9,
                            max_iter=max(100, opts.max_iter))
    rep = _solve_plain(aux, aux_opts)
    if rep.status not in (SolveStatus.OPTIMAL, SolveStatus.NEAR_OPTIMAL):
        return None
    if rep.primal_obj > 1e-7 or rep.dual_blocks is None:
        return None

    lam_max = max(
        (float(np.linalg.eigvalsh(Xb)[-1]) for Xb in rep.dual_blocks[: len(works)]),
        default=0.0,
    )
    if lam_max <= 0:
        return None
    rows: list[tuple[list[tuple[int, float]], float]] = []
    for b, w in enumerate(works):
        Xb = rep.dual_blocks[b]
        vals, vecs = np.linalg.eigh(Xb)
        big = vals > 1e-4 * lam_max
        if not big.any():
            continue
        s = w.size
        for v in vecs[:, big].T:
            u = v if w.Q is None else w.Q @ v
            const_vec = w.F0_full @ u
            coeff_vecs = {}
            for local, j in enumerate(w.active):
                Fj = w.V[local].reshape(s, s).tocsr()
                cv = Fj @ u
                if np.any(np.abs(cv) > 1e-11):
                    coeff_vecs[j] = cv
            for r in range(s):
                row = [
                    (free[j], float(cv[r]))
                    for j, cv in coeff_vecs.items()
                    if abs(cv[r]) > 1e-11
                ]
                rhs = -float(const_vec[r])
                if row:
                    rows.append((row, rhs))
                elif abs(rhs) > 1e-8:
                    return None
    return rows or None


def solve(sdp: BlockSDP, opts: SolveOptions | None = None) -> SolverReport:
    """Solve a block SDP with an NT-direction predictor-corrector IPM.

    On ``Optimal`` status the relative gap |primal - dual| / (1 + |primal|)
    is at most ``gap_tol`` and every block of the returned point is within
    ``feas_tol`` of PSD.  Moment relaxations whose feasible set lies on a
    proper face of the cone (diverging dual iterates) are reduced onto that
    face and re-solved; genuinely unbounded or infeasible problems end in
    ``NumericalFailure`` with a diagnostic message.
    """
    opts = opts or SolveOptions()
    t0 = time.perf_counter()

    report = SolverReport(status=SolveStatus.NUMERICAL_FAILURE)
    report.var_index = list(sdp.var_index) if sdp.var_index is not None else None

    # equilibrate: substitute y_j = d_j * yhat_j with d_j the variable's
    # natural magnitude, so iterates live at unit scale
    d_scale = sdp.var_scale
    if d_scale is not None:
        sdp = BlockSDP(
            m=sdp.m,
            blocks=[
                SDPBlockData(
                    b.size, b.diag, list(b.const),
                    [(r, c, j, v * d_scale[j]) for r, c, j, v in b.lin],
                    row_scale=b.row_scale,
                )
                for b in sdp.blocks
            ],
            c=sdp.c * d_scale,
            offset=sdp.offset,
            sense=sdp.sense,
            eq_rows=[[(j, v * d_scale[j]) for j, v in row] for row in sdp.eq_rows],
            eq_rhs=list(sdp.eq_rhs),
            var_index=sdp.var_index,
        )

    extra_rows: list[tuple[list[tuple[int, float]], float]] = []
    reduced = False
    for round_ in range(4):
        eq_rows = sdp.eq_rows + [r for r, _ in extra_rows]
        eq_rhs = sdp.eq_rhs + [b for _, b in extra_rows]
        _run_core(sdp, eq_rows, eq_rhs, opts, report, d_scale, t0)
        if reduced and report.status is SolveStatus.INFEASIBLE:
            # the face certificate was too noisy; report the original failure
            _run_core(sdp, sdp.eq_rows, sdp.eq_rhs, opts, report, d_scale, t0)
            break
        if report.status not in (
            SolveStatus.NUMERICAL_FAILURE, SolveStatus.ITER_LIMIT
        ) or report._works is None:
            break
        new_rows = _face_oracle(report._works, report._free, opts)
        if not new_rows:
            break
        extra_rows.extend(new_rows)
        reduced = True
    report._works = report._free = None
    report.solve_seconds = time.perf_counter() - t0
    return report


def _solve_plain(sdp: BlockSDP, opts: SolveOptions) -> SolverReport:
    """One solver round without facial-reduction retries (used internally)."""
    t0 = time.perf_counter()
    report = SolverReport(status=SolveStatus.NUMERICAL_FAILURE)
    _run_core(sdp, sdp.eq_rows, sdp.eq_rhs, opts, report, None, t0)
    report._works = report._free = None
    report.solve_seconds = time.perf_counter() - t0
    return report


def _run_core(
    sdp: BlockSDP,
    eq_rows,
    eq_rhs,
    opts: SolveOptions,
    report: SolverReport,
    d_scale,
    t0: float,
) -> None:
    sign = 1.0 if sdp.sense is Sense.MIN else -1.0
    report.history = []
    report._works = report._free = None
    report.dual_blocks = None

    try:
        works, c_red, extra_offset, free, pivots = _build_works_rows(
            sdp, eq_rows, eq_rhs
        )
    except _Infeasible as exc:
        report.status = SolveStatus.INFEASIBLE
        report.message = str(exc)
        return

    offset = sdp.offset + extra_offset

    def finalize(y_red: np.ndarray) -> np.ndarray:
        y_full = np.zeros(sdp.m)
        for k, j in enumerate(free):
            y_full[j] = y_red[k]
        for p, (rhs, coeffs) in pivots.items():
            y_full[p] = rhs - sum(cf * y_full[f] for f, cf in coeffs.items())
        if d_scale is not None:
            y_full = y_full * d_scale
        return y_full

    m = len(free)
    if m == 0 or not works:
        if m > 0 and np.any(c_red != 0.0):
            # free variables in the objective but no conic constraints left
            report.status = SolveStatus.NUMERICAL_FAILURE
            report.message = "no conic constraints; the problem is unbounded"
        else:
            feasible = all(
                w.rsize == 0 or float(np.linalg.eigvalsh(w.F0)[0]) >= -opts.feas_tol
                for w in works
            )
            report.status = (
                SolveStatus.OPTIMAL if feasible else SolveStatus.INFEASIBLE
            )
            report.primal_obj = report.dual_obj = offset
            report.gap = 0.0
        report.y = finalize(np.zeros(m))
        return

    obj_scale = max(1.0, float(np.max(np.abs(c_red))))
    c_hat = sign * c_red / obj_scale

    y = np.zeros(m)
    X = []
    Z = []
    for w in works:
        eta = 1.0 + max(w.max_abs, float(np.max(np.abs(w.F0))) if w.rsize else 0.0)
        X.append(eta * np.eye(w.rsize))
        Z.append(eta * np.eye(w.rsize))
    ndim = sum(w.rsize for w in works)

    c_norm = 1.0 + float(np.max(np.abs(c_hat)))
    f_norm = 1.0 + max((float(np.max(np.abs(w.F0))) for w in works), default=0.0)

    def bound_scale(v: float) -> float:
        return sign * obj_scale * v + offset

    status = SolveStatus.ITER_LIMIT
    message = ""
    it = 0
    gap = pinf = dinf = np.inf
    pobj_int = dobj_int = 0.0
    mu0 = None

    for it in range(1, opts.max_iter + 1):
        Rp = [works[b].F0 + works[b].fold(y) - Z[b] for b in range(len(works))]
        ax = np.zeros(m)
        for b, w in enumerate(works):
            if len(w.active):
                ax[w.active] += w.inner_all(X[b])
        r_d = c_hat - ax

        mu = sum(float(np.sum(X[b] * Z[b])) for b in range(len(works))) / ndim
        pobj_int = float(c_hat @ y)
        dobj_int = -sum(float(np.sum(w.F0 * X[b])) for b, w in enumerate(works))

        pinf = max(
            (float(np.max(np.abs(Rp[b]))) for b in range(len(works))), default=0.0
        ) / f_norm
        dinf = float(np.max(np.abs(r_d))) / c_norm if m else 0.0
        gap = abs(pobj_int - dobj_int) / (1.0 + abs(pobj_int))

        report.history.append(
            {
                "pobj": obj_scale * pobj_int,
                "dobj": obj_scale * dobj_int,
                "mu": mu * obj_scale,
                "pinf": pinf,
                "dinf": dinf,
            }
        )
        if opts.verbose:
            print(
                f"  it {it:3d}  mu {mu:9.2e}  gap {gap:9.2e}  "
                f"pinf {pinf:9.2e}  dinf {dinf:9.2e}"
            )

        if gap <= opts.gap_tol and pinf <= opts.feas_tol and dinf <= opts.feas_tol:
            status = SolveStatus.OPTIMAL
            break

        if mu0 is None:
            mu0 = mu
        if mu < max(1e-12 * mu0, 1e-300):
            # complementarity vanished but a residual is stuck: the problem
            # has no interior between the two sides
            if dinf > 1e3 * opts.feas_tol >= pinf:
                status = SolveStatus.NUMERICAL_FAILURE
                message = (
                    "complementarity vanished while the dual system stayed "
                    "infeasible; the problem is likely unbounded"
                )
                break
            if pinf > 1e3 * opts.feas_tol:
                status = SolveStatus.INFEASIBLE
                message = (
                    "complementarity vanished while primal residuals stayed "
                    "large; the relaxation is likely infeasible (heuristic, "
                    "not a certificate)"
                )
                break

        big = max(
            float(np.max(np.abs(y))) if m else 0.0,
            max((float(np.max(np.abs(X[b]))) for b in range(len(works))), default=0.0),
        )
        if big > opts.divergence_tol:
            status = SolveStatus.NUMERICAL_FAILURE
            message = (
                "iterates diverged (norm exceeded "
                f"{opts.divergence_tol:g}); the problem is likely unbounded "
                "or infeasible"
            )
            break

        try:
            W = [_nt_scaling(X[b], Z[b]) for b in range(len(works))]
            Zinv = [
                cho_solve((np.linalg.cholesky(Z[b]), True), np.eye(works[b].rsize))
                for b in range(len(works))
            ]
        except np.linalg.LinAlgError:
            status = SolveStatus.NUMERICAL_FAILURE
            message = "lost positive definiteness of an iterate"
            break

        B = np.zeros((m, m))
        for b, w in enumerate(works):
            if not len(w.active):
                continue
            s = w.size
            WL = w.lift(W[b])  # scaling expressed in the unprojected space
            chunk = max(1, (1 << 22) // max(1, s * s))
            for lo in range(0, len(w.active), chunk):
                hi = min(lo + chunk, len(w.active))
                Fd = np.asarray(w.V[lo:hi].todense()).reshape(-1, s, s)
                T = np.matmul(WL, np.matmul(Fd, WL)).reshape(hi - lo, s * s)
                contrib = w.V @ T.T
                B[np.ix_(w.active, w.active[lo:hi])] += contrib
        B = (B + B.T) / 2.0

        factor = _chol_with_reg(B)
        if factor is None:
            status = SolveStatus.NUMERICAL_FAILURE
            message = "Schur complement not positive definite after regularization"
            break

        def newton(sigma_mu: float, corr: list[np.ndarray] | None):
            G = []
            for b in range(len(works)):
                Gb = sigma_mu * Zinv[b] - X[b] - W[b] @ Rp[b] @ W[b]
                if corr is not None:
                    Gb = Gb - corr[b]
                G.append((Gb + Gb.T) / 2.0)
            g = -r_d.copy()
            for b, w in enumerate(works):
                if len(w.active):
                    g[w.active] += w.inner_all(G[b])
            dy = cho_solve(factor, g)
            # one round of iterative refinement rescues accuracy when the
            # Schur complement turns ill conditioned near the optimum
            resid = g - B @ dy
            dy = dy + cho_solve(factor, resid)
            dZ = []
            dX = []
            for b, w in enumerate(works):
                dZb = w.fold(dy) + Rp[b]
                dXb = G[b] - W[b] @ dZb @ W[b]
                dZ.append((dZb + dZb.T) / 2.0)
                dX.append((dXb + dXb.T) / 2.0)
            return dy, dX, dZ

        dy_a, dX_a, dZ_a = newton(0.0, None)
        ap = min(
            1.0,
            opts.step_fraction
            * min((_max_step(X[b], dX_a[b]) for b in range(len(works))), default=np.inf),
        )
        ad = min(
            1.0,
            opts.step_fraction
            * min((_max_step(Z[b], dZ_a[b]) for b in range(len(works))), default=np.inf),
        )
        mu_aff = (
            sum(
                float(np.sum((X[b] + ap * dX_a[b]) * (Z[b] + ad * dZ_a[b])))
                for b in range(len(works))
            )
            / ndim
        )
        mu_aff = max(mu_aff, 0.0)
        sigma = min(max((mu_aff / mu) ** 3, 1e-10), 1.0 - 1e-10)

        corr = None
        if opts.mehrotra:
            corr = []
            for b in range(len(works)):
                Mb = dX_a[b] @ Zinv[b] @ dZ_a[b]
                corr.append((Mb + Mb.T) / 2.0)
        dy, dX, dZ = newton(sigma * mu, corr)

        def steps(dX_, dZ_):
            a_p = min(
                1.0,
                opts.step_fraction
                * min(
                    (_max_step(X[b], dX_[b]) for b in range(len(works))),
                    default=np.inf,
                ),
            )
            a_d = min(
                1.0,
                opts.step_fraction
                * min(
                    (_max_step(Z[b], dZ_[b]) for b in range(len(works))),
                    default=np.inf,
                ),
            )
            return a_p, a_d

        ap, ad = steps(dX, dZ)
        if min(ap, ad) < 0.05 and sigma < 0.5:
            # overshoot; retry with stronger centering
            dy, dX, dZ = newton(0.5 * mu, None)
            ap, ad = steps(dX, dZ)

        for _ in range(8):
            okstep = True
            for b in range(len(works)):
                try:
                    np.linalg.cholesky(X[b] + ap * dX[b])
                    np.linalg.cholesky(Z[b] + ad * dZ[b])
                except np.linalg.LinAlgError:
                    okstep = False
                    break
            if okstep:
                break
            ap *= 0.5
            ad *= 0.5
        else:
            status = SolveStatus.NUMERICAL_FAILURE
            message = "could not retain positive definiteness along the step"
            break

        for b in range(len(works)):
            Xn = X[b] + ap * dX[b]
            Zn = Z[b] + ad * dZ[b]
            X[b] = (Xn + Xn.T) / 2.0
            Z[b] = (Zn + Zn.T) / 2.0
        y = y + ad * dy

    if status is not SolveStatus.OPTIMAL and gap <= 100 * opts.gap_tol \
            and pinf <= 100 * opts.feas_tol and dinf <= 100 * opts.feas_tol:
        status = SolveStatus.NEAR_OPTIMAL

    report.status = status
    report.message = message
    report.iterations = it
    report.primal_obj = bound_scale(pobj_int)
    report.dual_obj = bound_scale(dobj_int)
    report.gap = gap
    report.y = finalize(y)
    report.dual_blocks = [np.array(X[b]) for b in range(len(works))]
    if status in (SolveStatus.NUMERICAL_FAILURE, SolveStatus.ITER_LIMIT):
        # keep the reduced problem so the caller can attempt facial reduction
        report._works = works
        report._free = free


# ---------------------------------------------------------------------------
# Moment extraction
# ---------------------------------------------------------------------------


def moment_value(report: SolverReport, relax: Relaxation, mono: Monomial) -> float:
    """Value of one moment in a solved relaxation."""
    idx = relax.dct.get(mono)
    if idx is None:
        raise StructureError(f"monomial {mono} is not indexed in this relaxation")
    if idx == 0:
        return 1.0
    if report.y is None or report.var_index is None:
        raise StructureError("report carries no solution vector")
    try:
        j = report.var_index.index(idx)
    except ValueError:
        raise StructureError(f"moment {mono} was eliminated from the SDP") from None
    return float(report.y[j])


def extract_moment_matrix(
    report: SolverReport, relax: Relaxation, clique: int
) -> np.ndarray:
    """First-order moment matrix of one clique from a solved relaxation.

    Rows and columns are indexed by the constant monomial followed by the
    clique's variables in ascending order.
    """
    if clique < 0 or clique >= len(relax.cliques):
        raise StructureError(f"no clique {clique} in this relaxation")
    variables = relax.cliques[clique]
    basis = [ONE] + [Monomial([(v, 1)]) for v in variables]
    pos = {}
    if report.var_index is not None:
        pos = {idx: j for j, idx in enumerate(report.var_index)}

    def value(mono: Monomial) -> float:
        idx = relax.dct.get(mono)
        if idx is None:
            raise StructureError(
                f"moment {mono} missing; was an order-1 block assembled "
                "for this clique?"
            )
        if idx == 0:
            return 1.0
        if idx not in pos or report.y is None:
            raise StructureError(f"moment {mono} was eliminated from the SDP")
        return float(report.y[pos[idx]])

    n = len(basis)
    M = np.zeros((n, n))
    for r in range(n):
        for c in range(r, n):
            M[r, c] = M[c, r] = value(basis[r].mul(basis[c]))
    return M


def solve_relaxation(
    relax: Relaxation,
    opts: SolveOptions | None = None,
    with_moments: bool = False,
) -> SolverReport:
    """Assemble and solve; optionally attach per-clique first-order moments."""
    report = solve(assemble(relax), opts)
    if with_moments and report.y is not None:
        for k in range(len(relax.cliques)):
            try:
                report.moment_matrices[k] = extract_moment_matrix(report, relax, k)
            except StructureError:
                continue
    return report
