import numpy as np
import pytest

import kgcascade as kc
from kgcascade.datasets import HEAD, TAIL, FilterIndex, Query
from kgcascade.errors import AlignmentError
from kgcascade.evaluation import HITS_KS, filtered_rank, gold_ranks


def make_matrix(values, queries, scale="raw"):
    return kc.ScoreMatrix(np.asarray(values, dtype=np.float32),
                          kc.keys_from_queries(queries), scale)


def brute_force_rank(row, gold, filter_ids):
    """Independent oracle: sort competitors + gold, mean position of the tie block.

    Competitors are all entities minus the filtered known-true answers (gold
    excluded from the removal). The mean-tie rank of the gold is the average
    1-based position of the score values equal to the gold score within the
    descending sort.
    """
    keep = [j for j in range(len(row)) if j == gold or j not in set(filter_ids)]
    scores = sorted((float(row[j]) for j in keep), reverse=True)
    g = float(row[gold])
    positions = [i + 1 for i, s in enumerate(scores) if s == g]
    return sum(positions) / len(positions)


def brute_force_report(matrix, queries, fi):
    ranks = [
        brute_force_rank(matrix.values[i], q.gold,
                         fi.get(q.anchor, q.relation, q.direction))
        for i, q in enumerate(queries)
    ]
    mrr = sum(1.0 / r for r in ranks) / len(ranks)
    hits = {k: sum(r <= k for r in ranks) / len(ranks) for k in HITS_KS}
    return mrr, hits, ranks


def fi_from_dict(d):
    return FilterIndex({k: np.array(sorted(v), dtype=np.int64) for k, v in d.items()})


class TestFilteredRank:
    def test_gold_strictly_highest_is_rank_one(self):
        q = Query(TAIL, 0, 0, 2)
        fi = fi_from_dict({(0, 0, TAIL): {2}})
        assert filtered_rank(np.array([0.1, 0.3, 0.9]), q, fi) == 1.0

    def test_mean_tie_rank(self):
        # gold scores 0.5; one competitor above, one tied, one below
        q = Query(TAIL, 0, 0, 0)
        fi = fi_from_dict({(0, 0, TAIL): {0}})
        row = np.array([0.5, 0.9, 0.5, 0.1])
        assert filtered_rank(row, q, fi) == 2.5

    def test_filtering_removes_known_true_competitor(self):
        q = Query(TAIL, 0, 0, 0)
        fi = fi_from_dict({(0, 0, TAIL): {0, 1}})  # the 0.9 entity is known true
        row = np.array([0.5, 0.9, 0.5, 0.1])
        assert filtered_rank(row, q, fi) == 1.5

    def test_gold_out_of_range(self):
        q = Query(TAIL, 0, 0, 7)
        with pytest.raises(ValueError, match="outside"):
            filtered_rank(np.array([1.0, 2.0]), q, fi_from_dict({}))

    def test_filtering_never_increases_rank(self):
        rng = np.random.default_rng(4)
        empty = fi_from_dict({})
        for _ in range(50):
            row = rng.random(12)
            gold = int(rng.integers(12))
            filt = set(map(int, rng.choice(12, size=4, replace=False))) | {gold}
            q = Query(TAIL, 0, 0, gold)
            fi = fi_from_dict({(0, 0, TAIL): filt})
            assert filtered_rank(row, q, fi) <= filtered_rank(row, q, empty)


class TestEvaluate:
    def test_all_rank_one(self):
        queries = [Query(TAIL, 0, 0, 0), Query(HEAD, 1, 0, 1)]
        values = [[1.0, 0.2, 0.1], [0.0, 5.0, -1.0]]
        fi = fi_from_dict({(0, 0, TAIL): {0}, (1, 0, HEAD): {1}})
        report = kc.evaluate(make_matrix(values, queries), queries, fi)
        assert report.mrr == 1.0
        assert all(report.hits[k] == 1.0 for k in HITS_KS)

    def test_hand_computed_ranks_1_2_4(self):
        # three tail queries engineered to gold ranks 1, 2, 4
        queries = [Query(TAIL, i, 0, 0) for i in range(3)]
        values = [
            [0.9, 0.1, 0.2, 0.3, 0.4],
            [0.8, 0.9, 0.2, 0.1, 0.0],
            [0.5, 0.9, 0.8, 0.7, 0.1],
        ]
        fi = fi_from_dict({(i, 0, TAIL): {0} for i in range(3)})
        report = kc.evaluate(make_matrix(values, queries), queries, fi)
        assert report.mrr == pytest.approx((1 + 0.5 + 0.25) / 3, abs=1e-15)
        assert report.hits[1] == pytest.approx(1 / 3)
        assert report.hits[3] == pytest.approx(2 / 3)
        assert report.hits[10] == 1.0
        assert report.n_queries == 3

    def test_matches_brute_force_on_random_fixture(self):
        rng = np.random.default_rng(99)
        n_q, n_e = 20, 50
        queries = []
        fsets = {}
        for i in range(n_q):
            direction = int(rng.integers(2))
            anchor, rel, gold = int(rng.integers(n_e)), int(rng.integers(4)), int(rng.integers(n_e))
            queries.append(Query(direction, anchor, rel, gold))
            filt = set(map(int, rng.choice(n_e, size=int(rng.integers(1, 6)), replace=False)))
            filt.add(gold)
            fsets[(anchor, rel, direction)] = filt
        # quantized scores to force plenty of ties
        values = np.round(rng.random((n_q, n_e)) * 8) / 8
        fi = fi_from_dict(fsets)
        matrix = make_matrix(values, queries)
        report = kc.evaluate(matrix, queries, fi)
        mrr, hits, ranks = brute_force_report(matrix, queries, fi)
        assert report.mrr == pytest.approx(mrr, abs=1e-12)
        for k in HITS_KS:
            assert report.hits[k] == pytest.approx(hits[k], abs=1e-12)
        np.testing.assert_allclose(report.gold_ranks, ranks, atol=1e-12)

    def test_per_direction_subreports(self):
        queries = [Query(TAIL, 0, 0, 0), Query(HEAD, 0, 0, 1)]
        values = [[0.9, 0.1, 0.0], [0.1, 0.9, 0.0]]
        fi = fi_from_dict({(0, 0, TAIL): {0}, (0, 0, HEAD): {1}})
        report = kc.evaluate(make_matrix(values, queries), queries, fi)
        assert report.tail.n_queries == 1 and report.head.n_queries == 1
        assert report.tail.mrr == 1.0 and report.head.mrr == 1.0

    def test_alignment_mismatch_rejected(self):
        queries = [Query(TAIL, 0, 0, 0)]
        matrix = make_matrix([[1.0, 0.0]], queries)
        wrong = [Query(TAIL, 1, 0, 0)]
        with pytest.raises(AlignmentError):
            kc.evaluate(matrix, wrong, fi_from_dict({}))

    def test_json_shape(self):
        queries = [Query(TAIL, 0, 0, 0), Query(HEAD, 0, 0, 1)]
        values = [[0.9, 0.1, 0.0], [0.1, 0.9, 0.0]]
        fi = fi_from_dict({})
        report = kc.evaluate(make_matrix(values, queries), queries, fi)
        payload = report.to_dict()
        assert set(payload) == {"mrr", "hits", "n_queries", "tail", "head"}
        assert set(payload["hits"]) == {"1", "3", "10"}
        assert payload["n_queries"] == 2


class TestInvariances:
    def test_monotone_transform_preserves_metrics(self):
        rng = np.random.default_rng(5)
        queries = [Query(TAIL, i, 0, int(rng.integers(30))) for i in range(15)]
        values = rng.random((15, 30)).astype(np.float32)
        fi = fi_from_dict({(q.anchor, q.relation, q.direction): {q.gold} for q in queries})
        base = kc.evaluate(make_matrix(values, queries), queries, fi)
        transformed = np.exp(3.0 * values.astype(np.float64)).astype(np.float32)
        after = kc.evaluate(make_matrix(transformed, queries), queries, fi)
        assert after.mrr == pytest.approx(base.mrr, rel=1e-12)
        assert after.hits == base.hits

    def test_hits_nondecreasing_and_mrr_at_least_hits1(self):
        rng = np.random.default_rng(6)
        queries = [Query(TAIL, i, 0, int(rng.integers(25))) for i in range(40)]
        values = rng.random((40, 25)).astype(np.float32)
        fi = fi_from_dict({(q.anchor, q.relation, q.direction): {q.gold} for q in queries})
        report = kc.evaluate(make_matrix(values, queries), queries, fi)
        assert report.hits[1] <= report.hits[3] <= report.hits[10] <= 1.0
        assert report.mrr >= report.hits[1]
        assert 0.0 < report.mrr <= 1.0


def test_gold_ranks_agrees_with_single_row_path():
    rng = np.random.default_rng(8)
    queries = [Query(int(rng.integers(2)), int(rng.integers(10)), 0, int(rng.integers(10)))
               for _ in range(12)]
    values = np.round(rng.random((12, 10)) * 4) / 4
    fi = fi_from_dict(
        {(q.anchor, q.relation, q.direction): {q.gold, int(rng.integers(10))} for q in queries}
    )
    matrix = make_matrix(values, queries)
    vec = gold_ranks(matrix, queries, fi)
    for i, q in enumerate(queries):
        assert vec[i] == filtered_rank(matrix.values[i], q, fi)
