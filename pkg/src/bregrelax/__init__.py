"""Convex relaxations of Bregman-divergence clustering.

The package is organized bottom-up:

- :mod:`bregrelax.divergences` -- divergence families (euclidean,
  bernoulli), transfers, conjugates.
- :mod:`bregrelax.geometry` -- relaxation sets over normalized
  equivalence matrices, membership checks, projections.
- :mod:`bregrelax.clusternorm` -- the cluster norm, its dual, and
  equivalence-matrix recovery from the water-filled spectrum.
- :mod:`bregrelax.solvers` -- GCG, ADMM, and smooth-minimization engines.
- :mod:`bregrelax.models` -- the four relaxed clustering models plus
  alternating and EM baselines.
- :mod:`bregrelax.rounding` -- spectral rounding, reoptimization,
  matched-accuracy scoring.
- :mod:`bregrelax.bench` / :mod:`bregrelax.cli` -- dataset handling,
  experiment grids, result tables, command line front end.
"""

from .bench import (
    Dataset,
    ExperimentSpec,
    ParseError,
    ResultRecord,
    emit_table,
    load_dataset,
    preprocess,
    run_experiment,
    run_grid,
    score_assignments,
    stratified_subsample,
)
from .clusternorm import (
    cluster_norm,
    cluster_norm_dual,
    cluster_norm_dual_subgradient,
    recover_equivalence,
    spectrum_waterfill,
)
from .divergences import (
    BERNOULLI_CLIP,
    DomainError,
    conjugate_divergence,
    conjugate_divergence_grad,
    divergence,
    family,
    pairwise_divergence,
    rowwise_divergence,
)
from .geometry import (
    RELAXATIONS,
    RangeError,
    capped_box_simplex_project,
    check_membership,
    equivalence_from_assignment,
    pinv_quadratic_form,
    project_rowsum,
    simplex_project,
)
from .models import (
    MODELS,
    RELAXATION_MODELS,
    ModelConfig,
    RelaxationSolution,
    SoftEmResult,
    alternating_hard,
    cond_objective,
    derived_rng,
    disc_loss,
    joint_hard_reopt,
    joint_loss,
    soft_em,
    solve_cond,
    solve_cond_jc,
    solve_disc,
    solve_joint,
    solve_relaxation,
)
from .rounding import (
    ClusteringResult,
    hard_posterior_accuracy,
    hard_reopt,
    kmeans,
    matched_accuracy,
    soft_accuracy,
    spectral_embedding,
    spectral_round,
)
from .solvers import (
    AdmmResult,
    GcgResult,
    SmoothProblem,
    SolverDivergence,
    admm_row_step,
    admm_solve,
    gcg_line_search,
    gcg_minimize,
    rowwise_objective,
    smooth_minimize,
)

__version__ = "0.1.0"

__all__ = [
    "BERNOULLI_CLIP",
    "AdmmResult",
    "ClusteringResult",
    "Dataset",
    "DomainError",
    "ExperimentSpec",
    "GcgResult",
    "MODELS",
    "ModelConfig",
    "ParseError",
    "ResultRecord",
    "RELAXATIONS",
    "RELAXATION_MODELS",
    "RangeError",
    "RelaxationSolution",
    "SmoothProblem",
    "SoftEmResult",
    "SolverDivergence",
    "admm_row_step",
    "admm_solve",
    "alternating_hard",
    "capped_box_simplex_project",
    "check_membership",
    "cluster_norm",
    "cluster_norm_dual",
    "cluster_norm_dual_subgradient",
    "cond_objective",
    "derived_rng",
    "conjugate_divergence",
    "conjugate_divergence_grad",
    "disc_loss",
    "divergence",
    "emit_table",
    "equivalence_from_assignment",
    "family",
    "gcg_line_search",
    "gcg_minimize",
    "hard_posterior_accuracy",
    "hard_reopt",
    "joint_hard_reopt",
    "joint_loss",
    "kmeans",
    "load_dataset",
    "matched_accuracy",
    "pairwise_divergence",
    "pinv_quadratic_form",
    "preprocess",
    "project_rowsum",
    "recover_equivalence",
    "rowwise_divergence",
    "rowwise_objective",
    "run_experiment",
    "run_grid",
    "score_assignments",
    "simplex_project",
    "smooth_minimize",
    "soft_accuracy",
    "soft_em",
    "stratified_subsample",
    "solve_cond",
    "solve_cond_jc",
    "solve_disc",
    "solve_joint",
    "solve_relaxation",
    "spectral_embedding",
    "spectral_round",
    "spectrum_waterfill",
]
