"""Multi-relational graph datasets, link-prediction queries, and the filtered-evaluation index.

Datasets live on disk as a directory of TSV files:

* ``entities.tsv``  -- one entity per line, ``label<TAB>description`` (description
  optional); the 0-based line number is the entity id.
* ``relations.tsv`` -- one relation label per line; line number is the relation id.
* ``train.tsv`` / ``dev.tsv`` / ``test.tsv`` -- one triple per line,
  ``head_label<TAB>relation_label<TAB>tail_label``.

All files are UTF-8. Ids are dense integers assigned by file order, so every
downstream score matrix can be indexed directly by entity id.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetError

# Query directions. A triple (h, r, t) yields one query per direction:
# tail-prediction (h, r, ?) anchored at h, and head-prediction (?, r, t)
# anchored at t.
TAIL, HEAD = 0, 1
DIRECTION_NAMES = {TAIL: "tail", HEAD: "head"}

SPLIT_NAMES = ("train", "dev", "test")

Triple = tuple[int, int, int]


@dataclass(frozen=True)
class Query:
    """A single link-prediction query with its known gold answer."""

    direction: int  # TAIL or HEAD
    anchor: int  # h for tail-prediction, t for head-prediction
    relation: int
    gold: int
    source_split: str = "test"


@dataclass
class KnowledgeGraph:
    """Entities, relations, and disjoint train/dev/test triple splits.

    Immutable by convention after construction; safe to share across threads.
    ``entity_meta`` carries optional per-entity description text verbatim and
    is never interpreted by numeric code.
    """

    entity_labels: list[str]
    relation_labels: list[str]
    train: list[Triple]
    dev: list[Triple]
    test: list[Triple]
    entity_meta: list[str | None] = field(default_factory=list)

    @property
    def n_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def n_relations(self) -> int:
        return len(self.relation_labels)

    def split(self, name: str) -> list[Triple]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        return getattr(self, name)

    def validate(self) -> None:
        """Check id ranges, split disjointness, and duplicate-freeness."""
        if not self.train:
            raise DatasetError("train split is empty; a graph needs at least one train triple")
        if self.entity_meta and len(self.entity_meta) != self.n_entities:
            raise DatasetError("entity_meta length does not match entity count")
        seen: dict[Triple, str] = {}
        for name in SPLIT_NAMES:
            triples = self.split(name)
            in_split: set[Triple] = set()
            for h, r, t in triples:
                if not (0 <= h < self.n_entities and 0 <= t < self.n_entities):
                    raise DatasetError(f"{name}: entity id out of range in triple {(h, r, t)}")
                if not (0 <= r < self.n_relations):
                    raise DatasetError(f"{name}: relation id out of range in triple {(h, r, t)}")
                if (h, r, t) in in_split:
                    raise DatasetError(f"{name}: duplicate triple {(h, r, t)}")
                in_split.add((h, r, t))
                prev = seen.get((h, r, t))
                if prev is not None:
                    raise DatasetError(
                        f"triple {(h, r, t)} appears in both {prev} and {name}; splits must be disjoint"
                    )
                seen[(h, r, t)] = name


class FilterIndex:
    """Map (anchor, relation, direction) to every answer known true in any split.

    Used by the filtered evaluation protocol: when ranking a gold answer, the
    other known-true answers for the same query are removed from the
    competitor set so they cannot produce false negatives.
    """

    def __init__(self, sets: dict[tuple[int, int, int], np.ndarray]):
        self._sets = sets

    def get(self, anchor: int, relation: int, direction: int) -> np.ndarray:
        """Sorted array of known-true entity ids for this key (empty if unseen)."""
        return self._sets.get((anchor, relation, direction), _EMPTY_IDS)

    def __len__(self) -> int:
        return len(self._sets)


_EMPTY_IDS = np.empty(0, dtype=np.int64)


def _read_lines(path: str) -> list[str]:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read().splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc


def _load_label_map(path: str, *, with_meta: bool) -> tuple[list[str], list[str | None], dict[str, int]]:
    labels: list[str] = []
    meta: list[str | None] = []
    index: dict[str, int] = {}
    for lineno, line in enumerate(_read_lines(path)):
        if not line.strip():
            raise DatasetError(f"{path}:{lineno}: blank line (ids are assigned by line order)")
        if with_meta:
            label, _, desc = line.partition("\t")
            meta.append(desc if desc else None)
        else:
            label = line
            if "\t" in label:
                raise DatasetError(f"{path}:{lineno}: unexpected TAB in relation label")
        if not label:
            raise DatasetError(f"{path}:{lineno}: empty label")
        if label in index:
            raise DatasetError(f"{path}:{lineno}: duplicate label {label!r}")
        index[label] = lineno
        labels.append(label)
    return labels, meta, index


def _load_split(path: str, ent_index: dict[str, int], rel_index: dict[str, int]) -> list[Triple]:
    triples: list[Triple] = []
    for lineno, line in enumerate(_read_lines(path)):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        h_label, r_label, t_label = parts
        try:
            h = ent_index[h_label]
        except KeyError:
            raise DatasetError(f"{path}:{lineno}: unknown entity {h_label!r}") from None
        try:
            r = rel_index[r_label]
        except KeyError:
            raise DatasetError(f"{path}:{lineno}: unknown relation {r_label!r}") from None
        try:
            t = ent_index[t_label]
        except KeyError:
            raise DatasetError(f"{path}:{lineno}: unknown entity {t_label!r}") from None
        triples.append((h, r, t))
    return triples


def load_dataset(path: str) -> KnowledgeGraph:
    """Load and validate a dataset directory.

    Raises :class:`DatasetError` with the offending file and line on malformed
    input, unknown labels, duplicate triples, or non-disjoint splits.
    """
    if not os.path.isdir(path):
        raise DatasetError(f"dataset directory not found: {path}")
    ent_labels, ent_meta, ent_index = _load_label_map(
        os.path.join(path, "entities.tsv"), with_meta=True
    )
    rel_labels, _, rel_index = _load_label_map(
        os.path.join(path, "relations.tsv"), with_meta=False
    )
    splits = {
        name: _load_split(os.path.join(path, f"{name}.tsv"), ent_index, rel_index)
        for name in SPLIT_NAMES
    }
    kg = KnowledgeGraph(
        entity_labels=ent_labels,
        relation_labels=rel_labels,
        train=splits["train"],
        dev=splits["dev"],
        test=splits["test"],
        entity_meta=ent_meta,
    )
    kg.validate()
    return kg


def save_dataset(kg: KnowledgeGraph, path: str) -> None:
    """Write a dataset directory in the TSV layout read by :func:`load_dataset`.

    Round-trips exactly: loading the written directory reproduces the same id
    assignments and triple sets.
    """
    for label in (*kg.entity_labels, *kg.relation_labels):
        if "\t" in label or "\n" in label:
            raise DatasetError(f"label {label!r} contains TSV delimiter characters")
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "entities.tsv"), "w", encoding="utf-8") as fh:
        for i, label in enumerate(kg.entity_labels):
            desc = kg.entity_meta[i] if i < len(kg.entity_meta) else None
            fh.write(f"{label}\t{desc}\n" if desc else f"{label}\n")
    with open(os.path.join(path, "relations.tsv"), "w", encoding="utf-8") as fh:
        for label in kg.relation_labels:
            fh.write(f"{label}\n")
    for name in SPLIT_NAMES:
        with open(os.path.join(path, f"{name}.tsv"), "w", encoding="utf-8") as fh:
            for h, r, t in kg.split(name):
                fh.write(
                    f"{kg.entity_labels[h]}\t{kg.relation_labels[r]}\t{kg.entity_labels[t]}\n"
                )


def build_queries(kg: KnowledgeGraph, split: str) -> list[Query]:
    """Two queries per triple, tail-prediction first, in triple file order."""
    queries: list[Query] = []
    for h, r, t in kg.split(split):
        queries.append(Query(TAIL, h, r, t, split))
        queries.append(Query(HEAD, t, r, h, split))
    return queries


def build_filter_index(kg: KnowledgeGraph) -> FilterIndex:
    """Index every known-true answer over train, dev, and test triples."""
    raw: dict[tuple[int, int, int], set[int]] = {}
    for name in SPLIT_NAMES:
        for h, r, t in kg.split(name):
            raw.setdefault((h, r, TAIL), set()).add(t)
            raw.setdefault((t, r, HEAD), set()).add(h)
    sets = {
        key: np.array(sorted(values), dtype=np.int64) for key, values in raw.items()
    }
    return FilterIndex(sets)
