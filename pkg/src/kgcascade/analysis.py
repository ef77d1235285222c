"""Diagnostics: model diversity, score-distribution shape, margins, Pareto data.

Every function is pure; CSV writers with fixed headers live at the bottom so
the outputs can be fed to any external plotting tool.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .cascade import CostReport
from .datasets import DIRECTION_NAMES, FilterIndex, Query
from .evaluation import EvalReport, gold_ranks
from .scores import ScoreMatrix


def rank_correlation(ranks_a, ranks_b) -> float:
    """Pearson correlation between two aligned per-query gold-rank vectors."""
    a = np.asarray(ranks_a, dtype=np.float64)
    b = np.asarray(ranks_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("rank vectors must be 1-D and equally long")
    if a.size < 2:
        raise ValueError("need at least 2 queries for a correlation")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise ValueError("correlation is undefined for a constant rank vector")
    a = a - a.mean()
    b = b - b.mean()
    return float((a @ b) / np.sqrt((a @ a) * (b @ b)))


def average_margin(
    matrix: ScoreMatrix, queries: list[Query], filter_index: FilterIndex
) -> np.ndarray:
    """Per-query mean score gap between the gold answer and its negatives.

    Negatives are the non-filtered, non-gold candidates, consistent with the
    filtered evaluation protocol. Queries without a single negative are
    reported as NaN and a warning is emitted.
    """
    values = matrix.values.astype(np.float64)
    n, n_entities = values.shape
    if n != len(queries):
        raise ValueError("matrix and queries are not aligned")
    out = np.empty(n, dtype=np.float64)
    skipped = 0
    for i, q in enumerate(queries):
        filt = filter_index.get(q.anchor, q.relation, q.direction)
        mask = np.ones(n_entities, dtype=bool)
        mask[filt] = False
        mask[q.gold] = False
        n_neg = int(mask.sum())
        if n_neg == 0:
            out[i] = np.nan
            skipped += 1
            continue
        out[i] = values[i, q.gold] - values[i, mask].mean()
    if skipped:
        warnings.warn(
            f"{skipped} queries had no negative candidates and were excluded from margins",
            stacklevel=2,
        )
    return out


def margin_rank_correlation(
    matrix: ScoreMatrix, queries: list[Query], filter_index: FilterIndex
) -> float:
    """Pearson correlation between per-query margins and gold reciprocal ranks."""
    if len(queries) < 2:
        raise ValueError("need at least 2 queries for a correlation")
    margins = average_margin(matrix, queries, filter_index)
    ranks = gold_ranks(matrix, queries, filter_index)
    keep = ~np.isnan(margins)
    return rank_correlation(margins[keep], 1.0 / ranks[keep])


@dataclass
class DistributionSummary:
    mean: np.ndarray
    variance: np.ndarray
    skewness: np.ndarray
    zero_variance: np.ndarray  # bool flag per row; skewness forced to 0 there


def distribution_summary(matrix: ScoreMatrix) -> DistributionSummary:
    """Per-row mean, population variance, and moment skewness (m3 / m2^1.5)."""
    values = matrix.values.astype(np.float64)
    if values.shape[1] < 3:
        raise ValueError("need at least 3 candidates per row for moment statistics")
    mean = values.mean(axis=1)
    centered = values - mean[:, None]
    m2 = (centered**2).mean(axis=1)
    m3 = (centered**3).mean(axis=1)
    flat = m2 == 0.0
    denom = np.where(flat, 1.0, m2) ** 1.5
    skew = np.where(flat, 0.0, m3 / denom)
    return DistributionSummary(mean=mean, variance=m2, skewness=skew, zero_variance=flat)


@dataclass
class ParetoRow:
    label: str
    cost: float
    pairs: int
    mrr: float
    dominated: bool


def pareto_table(runs: list[tuple[str, CostReport, EvalReport]]) -> list[ParetoRow]:
    """Cost/accuracy rows sorted by cost, with Pareto-dominated rows flagged.

    A row is dominated when some other row has cost <= and MRR >= with at
    least one strict inequality.
    """
    if not runs:
        raise ValueError("pareto_table needs at least one run")
    entries = [(label, cr.total_cost, cr.total_pairs, er.mrr) for label, cr, er in runs]
    rows = []
    for label, cost, pairs, mrr in entries:
        dominated = any(
            o_cost <= cost and o_mrr >= mrr and (o_cost < cost or o_mrr > mrr)
            for _, o_cost, _, o_mrr in entries
        )
        rows.append(ParetoRow(label, cost, pairs, mrr, dominated))
    rows.sort(key=lambda r: r.cost)
    return rows


# ---------------------------------------------------------------------------
# CSV emission (fixed headers, one file per analysis)


def write_pareto_csv(rows: list[ParetoRow], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "cost", "pairs_scored", "mrr", "dominated"])
        for r in rows:
            writer.writerow([r.label, repr(r.cost), r.pairs, repr(r.mrr), int(r.dominated)])


def write_rank_correlation_csv(
    pairs: list[tuple[str, str, float]], path: str
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matrix_a", "matrix_b", "pearson_r"])
        for a, b, r in pairs:
            writer.writerow([a, b, repr(r)])


def write_margins_csv(
    queries: list[Query],
    margins: np.ndarray,
    ranks: np.ndarray,
    path: str,
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["query_index", "direction", "anchor", "relation", "gold",
             "gold_rank", "reciprocal_rank", "average_margin"]
        )
        for i, q in enumerate(queries):
            writer.writerow(
                [i, DIRECTION_NAMES[q.direction], q.anchor, q.relation, q.gold,
                 repr(float(ranks[i])), repr(float(1.0 / ranks[i])),
                 "" if np.isnan(margins[i]) else repr(float(margins[i]))]
            )


def write_distribution_csv(summary: DistributionSummary, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query_index", "mean", "variance", "skewness", "zero_variance"])
        for i in range(summary.mean.shape[0]):
            writer.writerow(
                [i, repr(float(summary.mean[i])), repr(float(summary.variance[i])),
                 repr(float(summary.skewness[i])), int(summary.zero_variance[i])]
            )


def write_margin_correlation_csv(rows: list[tuple[str, float]], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["matrix", "pearson_r_margin_vs_reciprocal_rank"])
        for name, r in rows:
            writer.writerow([name, repr(r)])
