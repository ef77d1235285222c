"""Shared fixtures, including the trained benchmark bundle reused by the
acceptance tests (training is the expensive part, so it is session-scoped)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

import kgcascade as kc


@pytest.fixture()
def toy_kg() -> kc.KnowledgeGraph:
    """3 entities, 1 relation, triples (0,0,1) train and (1,0,2) dev."""
    return kc.KnowledgeGraph(
        entity_labels=["a", "b", "c"],
        relation_labels=["r"],
        train=[(0, 0, 1)],
        dev=[(1, 0, 2)],
        test=[],
    )


def random_kg(rng: np.random.Generator, n_entities=20, n_relations=3, n_train=40, n_dev=8, n_test=8):
    """Random graph with unique triples split across train/dev/test."""
    total = n_train + n_dev + n_test
    seen = set()
    triples = []
    while len(triples) < total:
        h = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        t = int(rng.integers(n_entities))
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            triples.append((h, r, t))
    return kc.KnowledgeGraph(
        entity_labels=[f"e{i}" for i in range(n_entities)],
        relation_labels=[f"r{i}" for i in range(n_relations)],
        train=triples[:n_train],
        dev=triples[n_train : n_train + n_dev],
        test=triples[n_train + n_dev :],
    )


@dataclass
class Benchmark:
    """Planted-structure graph with a trained tier-1 model and tier matrices."""

    kg: kc.KnowledgeGraph
    fi: kc.FilterIndex
    dev_queries: list
    tier1_result: kc.TrainResult
    tier1_dev: kc.ScoreMatrix  # normalized
    tier2_dev: kc.ScoreMatrix  # normalized, synthetic fidelity 0.8


BENCH_SEED = 20240601
BENCH_ENTITIES = 500


@pytest.fixture(scope="session")
def benchmark() -> Benchmark:
    """|E| = 500 planted graph, 5000 train triples, trained tier-1 ComplEx."""
    kg = kc.planted_kg(
        n_entities=BENCH_ENTITIES,
        n_groups=100,
        n_relations=6,
        n_train=5000,
        n_dev=400,
        n_test=400,
        seed=BENCH_SEED,
    )
    fi = kc.build_filter_index(kg)
    dev_queries = kc.build_queries(kg, "dev")
    config = kc.TrainConfig(
        arch="complex", dim=64, epochs=150, lr=3.0, negatives=4,
        batch_size=256, loss="bce", seed=BENCH_SEED,
    )
    result = kc.train_kge(kg, config)
    tier1_dev = kc.normalize_per_query(kc.score_all(result.model, dev_queries))
    tier2_dev = kc.normalize_per_query(
        kc.synthesize_scorer(kg, dev_queries, rank_fidelity=0.8, seed=BENCH_SEED + 7)
    )
    return Benchmark(
        kg=kg,
        fi=fi,
        dev_queries=dev_queries,
        tier1_result=result,
        tier1_dev=tier1_dev,
        tier2_dev=tier2_dev,
    )
