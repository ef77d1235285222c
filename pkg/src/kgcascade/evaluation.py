"""Filtered ranking evaluation: gold ranks, MRR, and hits@k.

Ranks are computed in the filtered setting: for a query with gold answer g,
the competitor set is every entity except the *other* answers known true for
the same (anchor, relation, direction) key. Ties are resolved with mean-tie
fractional ranks, ``1 + #strictly_greater + 0.5 * #equal``, so a degenerate
constant scorer is neither rewarded nor punished.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datasets import HEAD, TAIL, FilterIndex, Query
from .errors import AlignmentError
from .scores import ScoreMatrix, keys_from_queries

HITS_KS = (1, 3, 10)


@dataclass
class EvalReport:
    """Aggregate ranking metrics, with per-direction sub-reports."""

    mrr: float
    hits: dict[int, float]
    n_queries: int
    tail: "EvalReport | None" = None
    head: "EvalReport | None" = None
    gold_ranks: np.ndarray | None = None  # per-query, retained for analysis

    def to_dict(self) -> dict:
        out = {
            "mrr": self.mrr,
            "hits": {str(k): v for k, v in self.hits.items()},
            "n_queries": self.n_queries,
        }
        if self.tail is not None:
            out["tail"] = self.tail.to_dict()
        if self.head is not None:
            out["head"] = self.head.to_dict()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def harmonic_number(n: int) -> float:
    return float(np.sum(1.0 / np.arange(1, n + 1)))


def uniform_random_mrr(n_entities: int) -> float:
    """Expected MRR when the gold rank is uniform on 1..n (H_n / n)."""
    return harmonic_number(n_entities) / n_entities


def filtered_rank(scores_row: np.ndarray, query: Query, filter_index: FilterIndex) -> float:
    """Filtered mean-tie rank of the query's gold answer within one score row."""
    row = np.asarray(scores_row)
    if query.gold < 0 or query.gold >= row.shape[0]:
        raise ValueError(f"gold id {query.gold} outside score row of length {row.shape[0]}")
    gold_score = row[query.gold]
    filt = filter_index.get(query.anchor, query.relation, query.direction)
    greater = int((row > gold_score).sum())
    equal = int((row == gold_score).sum()) - 1  # drop the gold itself
    if filt.size:
        fs = row[filt]
        greater -= int((fs > gold_score).sum())
        # gold is a member of its own filter set, so its self-tie is already
        # removed here whenever the index was built from the same graph
        equal -= int((fs == gold_score).sum()) - (1 if query.gold in filt else 0)
    return 1.0 + greater + 0.5 * equal


def gold_ranks(matrix: ScoreMatrix, queries: list[Query], filter_index: FilterIndex) -> np.ndarray:
    """Vectorized filtered ranks for every row of an aligned score matrix."""
    _check_alignment(matrix, queries)
    values = matrix.values
    n = len(queries)
    golds = matrix.query_keys[:, 3].astype(np.int64)
    gold_scores = values[np.arange(n), golds]
    greater = (values > gold_scores[:, None]).sum(axis=1).astype(np.int64)
    equal = (values == gold_scores[:, None]).sum(axis=1).astype(np.int64) - 1
    ranks = np.empty(n, dtype=np.float64)
    for i, q in enumerate(queries):
        g, e = greater[i], equal[i]
        filt = filter_index.get(q.anchor, q.relation, q.direction)
        if filt.size:
            fs = values[i, filt]
            g -= int((fs > gold_scores[i]).sum())
            e -= int((fs == gold_scores[i]).sum()) - (1 if q.gold in filt else 0)
        ranks[i] = 1.0 + g + 0.5 * e
    return ranks


def _report_from_ranks(ranks: np.ndarray, keep_ranks: bool) -> EvalReport:
    n = int(ranks.shape[0])
    if n == 0:
        return EvalReport(mrr=0.0, hits={k: 0.0 for k in HITS_KS}, n_queries=0)
    mrr = float(np.mean(1.0 / ranks))
    hits = {k: float(np.mean(ranks <= k)) for k in HITS_KS}
    return EvalReport(mrr=mrr, hits=hits, n_queries=n, gold_ranks=ranks if keep_ranks else None)


def evaluate(matrix: ScoreMatrix, queries: list[Query], filter_index: FilterIndex) -> EvalReport:
    """Filtered MRR and hits@{1,3,10}, overall and per query direction."""
    ranks = gold_ranks(matrix, queries, filter_index)
    directions = matrix.query_keys[:, 0]
    report = _report_from_ranks(ranks, keep_ranks=True)
    report.tail = _report_from_ranks(ranks[directions == TAIL], keep_ranks=False)
    report.head = _report_from_ranks(ranks[directions == HEAD], keep_ranks=False)
    return report


def _check_alignment(matrix: ScoreMatrix, queries: list[Query]) -> None:
    if matrix.n_queries != len(queries):
        raise AlignmentError(
            f"matrix has {matrix.n_queries} rows but {len(queries)} queries were given"
        )
    expected = keys_from_queries(queries)
    if not np.array_equal(matrix.query_keys, expected):
        raise AlignmentError("matrix query keys do not match the given query list")
