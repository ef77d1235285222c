"""Seeded synthetic benchmark graphs with learnable planted structure.

Entities are partitioned round-robin into groups and every relation acts as a
random permutation over groups: (h, r, t) is structurally valid exactly when
t's group is the image of h's group under r. Sampled triples are unique across
splits, so an embedding model that recovers the group structure ranks the
handful of structurally valid candidates far above chance while still leaving
headroom for a higher tier to break the within-group ties.
"""

from __future__ import annotations

import numpy as np

from .datasets import KnowledgeGraph


def planted_kg(
    n_entities: int = 200,
    n_groups: int = 40,
    n_relations: int = 4,
    n_train: int = 2000,
    n_dev: int = 200,
    n_test: int = 200,
    seed: int = 0,
) -> KnowledgeGraph:
    """Block-structured random graph with disjoint train/dev/test splits."""
    if n_groups < 2 or n_entities % n_groups:
        raise ValueError("n_entities must be a positive multiple of n_groups (>= 2)")
    total = n_train + n_dev + n_test
    group_size = n_entities // n_groups
    group_of = np.arange(n_entities) % n_groups
    members = [np.nonzero(group_of == g)[0] for g in range(n_groups)]

    rng = np.random.default_rng(seed)
    perms = [rng.permutation(n_groups) for _ in range(n_relations)]

    capacity = n_relations * n_entities * group_size
    if total > (9 * capacity) // 10:
        raise ValueError(
            f"{total} triples requested but only {capacity} structurally valid "
            "triples exist; lower the split sizes or enlarge the graph"
        )

    triples: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    while len(triples) < total:
        h = int(rng.integers(n_entities))
        r = int(rng.integers(n_relations))
        target_group = int(perms[r][group_of[h]])
        t = int(members[target_group][rng.integers(group_size)])
        if (h, r, t) not in seen:
            seen.add((h, r, t))
            triples.append((h, r, t))

    return KnowledgeGraph(
        entity_labels=[f"e{i}" for i in range(n_entities)],
        relation_labels=[f"r{i}" for i in range(n_relations)],
        train=triples[:n_train],
        dev=triples[n_train : n_train + n_dev],
        test=triples[n_train + n_dev :],
    )
