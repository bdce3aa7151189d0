"""Benchmark metrics, single runs, and level/depth/heuristic sweeps.

Two bound-quality metrics are reported per run relative to a supplied
reference value (an optimum or best-known bound):

* RI, ratio of improvement over the base (level-0) relaxation:
  (base - bound) / (base - reference) * 100.
* RG, relative gap to the reference: (bound - reference) / |reference| * 100
  for maximization; the sign is flipped for minimization so that a looser
  bound is always a positive gap and a bound beating the reference is
  negative.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MetricUndefinedError
from .polynomials import POPInstance, Sense
from .problems import build_problem_plan, laplacian
from .sdp import (
    SolveOptions,
    SolverReport,
    assemble,
    extract_moment_matrix,
    solve,
    solve_relaxation,
)
from .sparsity import CliqueCover, clique_cover
from .sublevel import (
    Heuristic,
    HeuristicInput,
    Mode,
    SublevelConfig,
    SubsetPlan,
    build_relaxation,
    select_subsets,
)


def ri(shor: float, sublevel: float, solution: float) -> float:
    """Percent of the base-relaxation gap closed by the sublevel bound."""
    denom = shor - solution
    if denom == 0.0:
        raise MetricUndefinedError("base bound equals the reference value")
    return (shor - sublevel) / denom * 100.0


def rg(sublevel: float, solution: float) -> float:
    """Percent gap of the bound relative to the reference value."""
    if solution == 0.0:
        raise MetricUndefinedError("reference value is zero")
    return (sublevel - solution) / abs(solution) * 100.0


def signed_rg(sublevel: float, solution: float, sense: Sense) -> float:
    """RG oriented so that looser bounds are positive for either sense."""
    value = rg(sublevel, solution)
    return value if sense is Sense.MAX else -value


@dataclass
class RunRecord:
    instance: str
    mode: str
    d: int
    l: int
    q: int
    heuristic: str
    bound: float = float("nan")
    status: str = ""
    iterations: int = 0
    solve_seconds: float = 0.0
    primal_obj: float = float("nan")
    dual_obj: float = float("nan")
    reference: float | None = None
    ri: float | None = None
    rg: float | None = None
    error: str = ""


@dataclass
class RunContext:
    """Parsed instance plus everything reusable across sweep cells."""

    pop: POPInstance
    name: str = ""
    dense: bool = False
    laplacian_matrix: np.ndarray | None = None
    reference: float | None = None
    options: SolveOptions = field(default_factory=SolveOptions)
    cover: CliqueCover | None = None
    _shor_moments: dict[int, np.ndarray] | None = None

    def __post_init__(self):
        if self.cover is None:
            self.cover = clique_cover(self.pop, dense=self.dense)
        if not self.name:
            self.name = self.pop.meta.get("name", "") or "instance"

    def shor_moments(self, d: int) -> dict[int, np.ndarray]:
        """First-order moment matrices of the base relaxation (cached)."""
        if self._shor_moments is None:
            cfg = SublevelConfig(d=d, level=0, depth=0, mode=self._mode())
            relax = build_relaxation(self.pop, self.cover, cfg, SubsetPlan())
            report = solve_relaxation(relax, self.options, with_moments=True)
            self._shor_moments = report.moment_matrices
        return self._shor_moments

    def _mode(self) -> Mode:
        return Mode.DENSE if self.dense else Mode.SPARSE


def make_context(
    pop: POPInstance,
    mode: str = "auto",
    reference: float | None = None,
    options: SolveOptions | None = None,
    graph=None,
    name: str = "",
) -> RunContext:
    if mode == "auto":
        dense = bool(pop.meta.get("force_dense", False))
    elif mode in ("dense", "sparse"):
        dense = mode == "dense"
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    lap = laplacian(graph) if graph is not None else None
    return RunContext(
        pop=pop,
        name=name,
        dense=dense,
        laplacian_matrix=lap,
        reference=reference,
        options=options or SolveOptions(),
    )


def build_plan(
    ctx: RunContext, cfg: SublevelConfig
) -> SubsetPlan:
    """Resolve the configured heuristic into a concrete subset plan."""
    if cfg.level <= 0 or cfg.depth <= 0:
        return SubsetPlan()
    if cfg.heuristic is Heuristic.PROBLEM:
        if ctx.pop.meta.get("origin"):
            return build_problem_plan(ctx.pop, ctx.cover, cfg.level, cfg.depth)
        fallback = SublevelConfig(
            d=cfg.d, level=cfg.level, depth=cfg.depth,
            heuristic=Heuristic.H2, seed=cfg.seed, mode=cfg.mode,
        )
        return select_subsets(ctx.pop, ctx.cover, fallback)
    aux = HeuristicInput()
    if cfg.heuristic in (Heuristic.H3, Heuristic.H35):
        aux.moment_matrices = ctx.shor_moments(cfg.d)
    if cfg.heuristic in (Heuristic.H4, Heuristic.H45):
        if ctx.laplacian_matrix is None:
            raise ConfigError(
                "Laplacian-guided heuristics need a graph instance"
            )
        aux.laplacian = ctx.laplacian_matrix
    return select_subsets(ctx.pop, ctx.cover, cfg, aux)


def run_cell(
    ctx: RunContext,
    d: int,
    level: int,
    depth: int,
    heuristic: Heuristic,
    seed: int = 0,
    base_bound: float | None = None,
) -> RunRecord:
    """Build, solve, and score one relaxation; failures land in the record."""
    rec = RunRecord(
        instance=ctx.name,
        mode="dense" if ctx.dense else "sparse",
        d=d,
        l=level,
        q=depth,
        heuristic=heuristic.value,
    )
    try:
        cfg = SublevelConfig(
            d=d, level=level, depth=depth, heuristic=heuristic,
            seed=seed, mode=ctx._mode(),
        )
        plan = build_plan(ctx, cfg)
        relax = build_relaxation(ctx.pop, ctx.cover, cfg, plan)
        report = solve(assemble(relax), ctx.options)
        rec.bound = report.primal_obj
        rec.primal_obj = report.primal_obj
        rec.dual_obj = report.dual_obj
        rec.status = report.status.value
        rec.iterations = report.iterations
        rec.solve_seconds = report.solve_seconds
    except Exception as exc:  # recorded, never aborts a sweep
        rec.status = "Error"
        rec.error = str(exc)
        return rec
    rec.reference = ctx.reference
    if ctx.reference is not None and math.isfinite(rec.bound):
        try:
            rec.rg = signed_rg(rec.bound, ctx.reference, ctx.pop.sense)
        except MetricUndefinedError:
            rec.rg = None
        if base_bound is not None:
            try:
                rec.ri = ri(base_bound, rec.bound, ctx.reference)
            except MetricUndefinedError:
                rec.ri = None
    return rec


def sweep(
    ctx: RunContext,
    d: int = 1,
    levels: list[int] = (0,),
    depths: list[int] = (1,),
    heuristics: list[Heuristic] = (Heuristic.PROBLEM,),
    seed: int = 0,
    jobs: int = 1,
) -> list[RunRecord]:
    """Run every (heuristic, level, depth) cell; row order is deterministic.

    The base (level-0) bound for RI is solved once and shared; per-cell
    failures are recorded in their row.
    """
    base_rec = run_cell(ctx, d, 0, 0, Heuristic.H2, seed)
    base_bound = base_rec.bound if math.isfinite(base_rec.bound) else None

    cells = [
        (h, l, q)
        for h in heuristics
        for l in levels
        for q in depths
    ]

    def work(cell):
        h, l, q = cell
        if l == 0 or q == 0:
            rec = RunRecord(
                instance=base_rec.instance, mode=base_rec.mode, d=d, l=l, q=q,
                heuristic=h.value, bound=base_rec.bound, status=base_rec.status,
                iterations=base_rec.iterations,
                solve_seconds=base_rec.solve_seconds,
                primal_obj=base_rec.primal_obj, dual_obj=base_rec.dual_obj,
            )
            rec.reference = ctx.reference
            if ctx.reference is not None and math.isfinite(rec.bound):
                try:
                    rec.rg = signed_rg(rec.bound, ctx.reference, ctx.pop.sense)
                except MetricUndefinedError:
                    rec.rg = None
                rec.ri = 0.0 if base_bound is not None else None
            return rec
        return run_cell(ctx, d, l, q, h, seed, base_bound)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(work, cells))
    else:
        records = [work(c) for c in cells]
    return records


CSV_FIELDS = [
    "instance", "mode", "d", "l", "q", "heuristic", "bound", "status",
    "iterations", "solve_seconds", "primal_obj", "dual_obj",
    "reference", "ri", "rg", "error",
]


def _format_cell(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        if math.isnan(value):
            return "-"
        return f"{value:.6f}"
    return str(value)


def records_to_csv(records: list[RunRecord], include_timing: bool = True) -> str:
    fields = [f for f in CSV_FIELDS if include_timing or f != "solve_seconds"]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for rec in records:
        writer.writerow([_format_cell(getattr(rec, f)) for f in fields])
    return buf.getvalue()


def records_to_json(records: list[RunRecord], include_timing: bool = True) -> str:
    out = []
    for rec in records:
        row = {}
        for f in CSV_FIELDS:
            if not include_timing and f == "solve_seconds":
                continue
            v = getattr(rec, f)
            if isinstance(v, float) and math.isnan(v):
                v = None
            row[f] = v
        out.append(row)
    return json.dumps(out, indent=1)


def analyze_csv(summaries: list[tuple[str, object]]) -> str:
    """CSV of sparsity-structure columns for one or more instances."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["instance", "nVar", "density", "nCliques", "MaxClique", "MinClique"]
    )
    for name, s in summaries:
        writer.writerow(
            [name, s.nvars, f"{100.0 * s.density:.1f}%", s.ncliques,
             s.max_clique, s.min_clique]
        )
    return buf.getvalue()


def load_reference(path) -> float:
    """Read a sidecar reference file: {"solution": v} or {"ub"/"lb": v}."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    for key in ("solution", "ub", "lb"):
        if key in data:
            return float(data[key])
    raise ConfigError("reference file must contain 'solution', 'ub' or 'lb'")
