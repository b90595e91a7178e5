"""Graph condensation by gradient matching, with explainer-guided node selection."""

from ._core import (
    CondenseConfig,
    Graph,
    MatchReport,
    condense,
    evaluate,
    evaluate_full,
    generate_sbm,
    grad_match_distance,
    info_constraint,
    load_graph,
    normalize_adjacency,
    save_coreset,
    save_graph,
    select_coreset,
    selfcheck,
)

__all__ = [
    "CondenseConfig",
    "Graph",
    "MatchReport",
    "condense",
    "evaluate",
    "evaluate_full",
    "generate_sbm",
    "grad_match_distance",
    "info_constraint",
    "load_graph",
    "normalize_adjacency",
    "save_coreset",
    "save_graph",
    "select_coreset",
    "selfcheck",
]
