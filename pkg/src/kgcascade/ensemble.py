"""Additive reweighting of two scorers and grid tuning of the convex weight."""

from __future__ import annotations

import numpy as np

from .datasets import FilterIndex, Query
from .errors import AlignmentError
from .scores import SCALE_NORMALIZED, ScoreMatrix

# 19-point grid over [0.05, 0.95] in steps of 0.05.
DEFAULT_ALPHA_GRID = [round(i * 0.05, 2) for i in range(1, 20)]


def combine_values(a: np.ndarray, b: np.ndarray, alpha: float) -> np.ndarray:
    """``alpha * a + (1 - alpha) * b`` in float32, with a fixed operation order.

    Every code path that blends two score blocks goes through this helper so
    that full-cascade progression and plain ensembling agree bitwise.
    """
    w_a = np.float32(alpha)
    w_b = np.float32(1.0 - alpha)
    return w_a * a + w_b * b


def additive_combine(s_a: ScoreMatrix, s_b: ScoreMatrix, alpha: float) -> ScoreMatrix:
    """Convex combination of two normalized, key-aligned score matrices."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if s_a.scale != SCALE_NORMALIZED or s_b.scale != SCALE_NORMALIZED:
        raise ValueError("additive_combine requires per-query normalized matrices")
    if s_a.values.shape != s_b.values.shape:
        raise AlignmentError(
            f"shape mismatch: {s_a.values.shape} vs {s_b.values.shape}"
        )
    if not np.array_equal(s_a.query_keys, s_b.query_keys):
        raise AlignmentError("query keys differ between the two matrices")
    values = combine_values(s_a.values, s_b.values, alpha)
    return ScoreMatrix(values, s_a.query_keys.copy(), SCALE_NORMALIZED)


def tune_alpha(
    s_a: ScoreMatrix,
    s_b: ScoreMatrix,
    dev_queries: list[Query],
    filter_index: FilterIndex,
    grid: list[float] | None = None,
) -> tuple[float, float]:
    """Pick the grid weight maximizing filtered dev MRR of the combination.

    Ties are broken toward the smallest alpha. Returns (alpha, dev MRR).
    """
    from .evaluation import evaluate  # local import to avoid a module cycle

    if grid is None:
        grid = DEFAULT_ALPHA_GRID
    if not grid:
        raise ValueError("alpha grid is empty")
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ValueError("alpha grid values must lie in [0, 1]")
    best_alpha, best_mrr = None, -1.0
    for alpha in sorted(grid):
        mrr = evaluate(additive_combine(s_a, s_b, alpha), dev_queries, filter_index).mrr
        if mrr > best_mrr:
            best_alpha, best_mrr = alpha, mrr
    return float(best_alpha), float(best_mrr)
