"""Sublevel moment-SOS relaxations for polynomial optimization.

The package builds intermediate SDP relaxations between the order-d and
order-(d+1) moment relaxations of a polynomial optimization problem, guided
by subset-selection heuristics over the cliques of a chordal extension of
the correlative sparsity graph, and solves them with an embedded block-SDP
interior-point method or exports them in SDPA sparse format.
"""

from .bench import RunContext, RunRecord, make_context, rg, ri, run_cell, sweep
from .errors import (
    ConfigError,
    DimensionError,
    MetricUndefinedError,
    ParseError,
    StructureError,
)
from .polynomials import (
    Constraint,
    MomentDictionary,
    Monomial,
    POPInstance,
    Polynomial,
    ReductionKind,
    ReductionRule,
    Relation,
    Sense,
    VarDomain,
    load_pop,
    monomial_basis,
    pop_from_json,
    pop_to_json,
    reduce_monomial,
    riesz_index,
    save_pop,
)
from .problems import (
    BruteForceResult,
    GraphInstance,
    NNInstance,
    QuadInstance,
    brute_force,
    build_problem_plan,
    encode_cert,
    encode_lipschitz,
    encode_maxclique,
    encode_maxcut,
    encode_miqcp,
    encode_qcqp,
    gen_random_nn,
    laplacian,
    load_nn,
    load_quad,
    maxcut_subsets,
    parse_rudy,
    random_graph,
    save_nn,
    save_quad,
    write_rudy,
)
from .sdp import (
    BlockSDP,
    SolveOptions,
    SolverReport,
    SolveStatus,
    assemble,
    extract_moment_matrix,
    solve,
    solve_relaxation,
)
from .sdpa import export_sdpa, format_sdpa, parse_sdpa, parse_sdpa_text
from .sparsity import (
    CliqueCover,
    CSPGraph,
    build_csp_graph,
    chordal_extension,
    clique_cover,
    dense_cover,
    maximal_cliques,
    rip_satisfied,
    summarize,
)
from .sublevel import (
    Heuristic,
    HeuristicInput,
    Mode,
    PSDBlock,
    PlanEntry,
    Relaxation,
    SublevelConfig,
    SubsetPlan,
    build_relaxation,
    localizing_block,
    moment_block,
    select_subsets,
)

__version__ = "0.1.0"
