"""Knowledge graph completion with LLM reasoning and re-ranking."""

from ._kgr3 import (
    ConfigError,
    ContextStore,
    Error,
    KnowledgeGraph,
    MissingArtifactError,
    Pipeline,
    ScoringModel,
    compose_candidates,
    compute_metrics,
    filtered_rank,
    parse_answers,
    rank,
    reasoning_prompt,
    reorder,
    train,
    verbalize_relation,
    write_sft_dataset,
)

__all__ = [
    "ConfigError",
    "ContextStore",
    "Error",
    "KnowledgeGraph",
    "MissingArtifactError",
    "Pipeline",
    "ScoringModel",
    "compose_candidates",
    "compute_metrics",
    "filtered_rank",
    "parse_answers",
    "rank",
    "reasoning_prompt",
    "reorder",
    "train",
    "verbalize_relation",
    "write_sft_dataset",
]
