"""Embedding benchmark engine: evaluation tasks over precomputed embeddings."""

from ._core import (
    EmbenchError,
    augment,
    benjamini_hochberg,
    binomial_test,
    calibration,
    knn_classify,
    merge_reports,
    mutual_knn,
    pgd_linear,
    rank_sum,
    read_embeddings,
    run,
    simpleshot,
    transform_kinds,
    write_embeddings,
    write_synthetic_suite,
)

__all__ = [
    "EmbenchError",
    "augment",
    "benjamini_hochberg",
    "binomial_test",
    "calibration",
    "knn_classify",
    "merge_reports",
    "mutual_knn",
    "pgd_linear",
    "rank_sum",
    "read_embeddings",
    "run",
    "simpleshot",
    "transform_kinds",
    "write_embeddings",
    "write_synthetic_suite",
]
