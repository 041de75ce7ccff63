"""Hierarchical Tucker format with black-box cross approximation."""

from podhta.htucker.aca import CrossResult, aca
from podhta.htucker.build import build_hta, dense_rank_oracle, dense_tensor
from podhta.htucker.fileformat import deserialize, load, save, serialize
from podhta.htucker.oracle import EntryOracle, mat_entry, mat_entry_linear, matricize
from podhta.htucker.tensor import (
    HTensor, eval_hta, eval_many, ht_add, random_htensor, storage_bound, storage_count, storage_from_ranks, to_dense,
)
from podhta.htucker.tree import DimensionTree, balanced_tree

__all__ = [
    "CrossResult", "DimensionTree", "EntryOracle", "HTensor", "aca", "balanced_tree", "build_hta",
    "dense_rank_oracle", "dense_tensor", "deserialize", "eval_hta", "eval_many", "ht_add", "load", "mat_entry",
    "mat_entry_linear", "matricize", "random_htensor", "save", "serialize", "storage_bound", "storage_count",
    "storage_from_ranks", "to_dense",
]
