"""Command-line front end: analyze, run, sweep, export, gen-nn."""

from __future__ import annotations

import json
import sys

import click

from .bench import (
    Heuristic,
    RunContext,
    analyze_csv,
    load_reference,
    make_context,
    records_to_csv,
    records_to_json,
    run_cell,
    sweep,
)
from .polynomials import load_pop
from .problems import (
    encode_cert,
    encode_lipschitz,
    encode_maxclique,
    encode_maxcut,
    encode_miqcp,
    encode_qcqp,
    gen_random_nn,
    load_nn,
    load_quad,
    parse_rudy,
    save_nn,
)
from .sdp import SolveOptions, assemble
from .sdpa import export_sdpa
from .sparsity import summarize
from .sublevel import SublevelConfig, SubsetPlan, build_relaxation
from .bench import build_plan

PROBLEMS = ("maxcut", "maxclique", "miqcp", "qcqp", "lip", "cert", "pop-json")


def _load_instance(path: str, problem: str, eps: float | None):
    graph = None
    if problem == "maxcut":
        graph = parse_rudy(path)
        pop = encode_maxcut(graph)
    elif problem == "maxclique":
        graph = parse_rudy(path)
        pop = encode_maxclique(graph)
    elif problem == "miqcp":
        pop = encode_miqcp(load_quad(path))
    elif problem == "qcqp":
        pop = encode_qcqp(load_quad(path))
    elif problem in ("lip", "cert"):
        nn = load_nn(path)
        if eps is not None:
            nn.eps = eps
        pop = encode_lipschitz(nn) if problem == "lip" else encode_cert(nn)
    elif problem == "pop-json":
        pop = load_pop(path)
    else:
        raise click.UsageError(f"unknown problem class {problem!r}")
    return pop, graph


def _instance_options(fn):
    fn = click.option("--instance", required=True, type=click.Path(exists=True),
                      help="Instance file (edge list, quadratic/NN/POP JSON).")(fn)
    fn = click.option("--problem", type=click.Choice(PROBLEMS), required=True,
                      help="Problem class of the instance file.")(fn)
    fn = click.option("--eps", type=float, default=None,
                      help="Override the input-box radius of network instances.")(fn)
    fn = click.option("--mode", type=click.Choice(["auto", "dense", "sparse"]),
                      default="auto", show_default=True,
                      help="Clique handling of the relaxation.")(fn)
    return fn


def _solver_options(fn):
    fn = click.option("--gap-tol", type=float, default=1e-7, show_default=True)(fn)
    fn = click.option("--feas-tol", type=float, default=1e-7, show_default=True)(fn)
    fn = click.option("--max-iter", type=int, default=200, show_default=True)(fn)
    return fn


def _config_options(fn):
    fn = click.option("--order", "d", type=int, default=1, show_default=True,
                      help="Base relaxation order d.")(fn)
    fn = click.option("--level", type=int, default=0, show_default=True,
                      help="Subset size added on top of order d.")(fn)
    fn = click.option("--depth", type=int, default=0, show_default=True,
                      help="Number of subsets per constraint and clique.")(fn)
    fn = click.option("--heuristic", type=click.Choice(
        ["auto", "h1", "h2", "h3", "h4", "h5", "h6", "h35", "h45"]),
        default="auto", show_default=True)(fn)
    fn = click.option("--seed", type=int, default=0, show_default=True,
                      help="Seed for the randomized heuristic.")(fn)
    return fn


def _write_out(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


@click.group()
def main():
    """Sublevel moment-SOS relaxations of polynomial optimization problems."""


@main.command()
@_instance_options
@click.option("--out", type=click.Path(), default=None)
def analyze(instance, problem, eps, mode, out):
    """Print variable count, density, and clique structure as CSV."""
    pop, _ = _load_instance(instance, problem, eps)
    dense = mode == "dense" or (mode == "auto" and pop.meta.get("force_dense"))
    s = summarize(pop, dense=bool(dense))
    name = pop.meta.get("name") or instance
    _write_out(analyze_csv([(name, s)]), out)


@main.command()
@_instance_options
@_config_options
@_solver_options
@click.option("--solver", type=click.Choice(["internal", "export"]),
              default="internal", show_default=True,
              help="Solve embedded or just write the SDPA file.")
@click.option("--ref", type=click.Path(exists=True), default=None,
              help="Sidecar JSON with the reference solution/bound.")
@click.option("--out", type=click.Path(), default=None)
def run(instance, problem, eps, mode, d, level, depth, heuristic, seed,
        gap_tol, feas_tol, max_iter, solver, ref, out):
    """Solve one sublevel relaxation and emit a JSON result."""
    pop, graph = _load_instance(instance, problem, eps)
    opts = SolveOptions(gap_tol=gap_tol, feas_tol=feas_tol, max_iter=max_iter)
    reference = load_reference(ref) if ref else None
    ctx = make_context(pop, mode=mode, reference=reference, options=opts,
                       graph=graph, name=pop.meta.get("name") or instance)
    if solver == "export":
        target = out or (instance + ".dat-s")
        _export(ctx, d, level, depth, heuristic, seed, target)
        click.echo(f"wrote {target}")
        return
    base = None
    if reference is not None and (level > 0 and depth > 0):
        base_rec = run_cell(ctx, d, 0, 0, Heuristic.H2, seed)
        base = base_rec.bound
    rec = run_cell(ctx, d, level, depth, Heuristic(heuristic), seed, base)
    payload = {
        "instance": rec.instance,
        "bound": None if rec.bound != rec.bound else rec.bound,
        "status": rec.status,
        "iterations": rec.iterations,
        "solve_seconds": rec.solve_seconds,
        "primal_obj": rec.primal_obj,
        "dual_obj": rec.dual_obj,
        "ri": rec.ri,
        "rg": rec.rg,
        "error": rec.error or None,
    }
    _write_out(json.dumps(payload, indent=1) + "\n", out)


def _export(ctx: RunContext, d, level, depth, heuristic, seed, target):
    cfg = SublevelConfig(d=d, level=level, depth=depth,
                         heuristic=Heuristic(heuristic), seed=seed,
                         mode=ctx._mode())
    plan = build_plan(ctx, cfg) if level > 0 and depth > 0 else SubsetPlan()
    relax = build_relaxation(ctx.pop, ctx.cover, cfg, plan)
    export_sdpa(assemble(relax), target)


@main.command()
@_instance_options
@_config_options
@click.option("--out", type=click.Path(), required=True,
              help="Target .dat-s path.")
def export(instance, problem, eps, mode, d, level, depth, heuristic, seed, out):
    """Write the assembled relaxation in SDPA sparse format."""
    pop, graph = _load_instance(instance, problem, eps)
    ctx = make_context(pop, mode=mode, graph=graph)
    _export(ctx, d, level, depth, heuristic, seed, out)
    click.echo(f"wrote {out}")


@main.command()
@_instance_options
@_solver_options
@click.option("--order", "d", type=int, default=1, show_default=True)
@click.option("--levels", default="0", show_default=True,
              help="Comma-separated subset sizes.")
@click.option("--depths", default="1", show_default=True,
              help="Comma-separated subset counts.")
@click.option("--heuristics", default="auto", show_default=True,
              help="Comma-separated heuristic names.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--ref", type=click.Path(exists=True), default=None)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--timing/--no-timing", default=True, show_default=True,
              help="Include wall-clock timings (disable for repeatable output).")
@click.option("--out", type=click.Path(), default=None)
def sweep_cmd(instance, problem, eps, mode, gap_tol, feas_tol, max_iter, d,
              levels, depths, heuristics, seed, jobs, ref, fmt, timing, out):
    """Run a grid of (heuristic, level, depth) cells and emit a table."""
    pop, graph = _load_instance(instance, problem, eps)
    opts = SolveOptions(gap_tol=gap_tol, feas_tol=feas_tol, max_iter=max_iter)
    reference = load_reference(ref) if ref else None
    ctx = make_context(pop, mode=mode, reference=reference, options=opts,
                       graph=graph, name=pop.meta.get("name") or instance)
    records = sweep(
        ctx,
        d=d,
        levels=[int(t) for t in levels.split(",") if t != ""],
        depths=[int(t) for t in depths.split(",") if t != ""],
        heuristics=[Heuristic(t) for t in heuristics.split(",") if t != ""],
        seed=seed,
        jobs=jobs,
    )
    if fmt == "csv":
        _write_out(records_to_csv(records, include_timing=timing), out)
    else:
        _write_out(records_to_json(records, include_timing=timing) + "\n", out)


main.add_command(sweep_cmd, name="sweep")


@main.command("gen-nn")
@click.option("--p1", type=int, required=True, help="Input dimension.")
@click.option("--p2", type=int, required=True, help="Hidden-layer width.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--eps", type=float, default=10.0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
def gen_nn(p1, p2, seed, eps, out):
    """Generate a seeded random 1-hidden-layer network instance."""
    save_nn(gen_random_nn(p1, p2, seed, eps), out)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
