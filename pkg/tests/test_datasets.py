import numpy as np
import pytest

import kgcascade as kc
from kgcascade import DatasetError
from kgcascade.datasets import HEAD, TAIL

from conftest import random_kg


def write_dataset(tmp_path, entities, relations, train, dev=(), test=()):
    (tmp_path / "entities.tsv").write_text("\n".join(entities) + "\n", encoding="utf-8")
    (tmp_path / "relations.tsv").write_text("\n".join(relations) + "\n", encoding="utf-8")
    for name, rows in (("train", train), ("dev", dev), ("test", test)):
        text = "".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows)
        (tmp_path / f"{name}.tsv").write_text(text, encoding="utf-8")
    return str(tmp_path)


class TestLoadDataset:
    def test_toy_fixture_counts(self, tmp_path):
        path = write_dataset(
            tmp_path,
            entities=["a\tfirst entity", "b", "c"],
            relations=["r"],
            train=[("a", "r", "b"), ("b", "r", "c")],
        )
        kg = kc.load_dataset(path)
        assert kg.n_entities == 3
        assert kg.n_relations == 1
        assert kg.train == [(0, 0, 1), (1, 0, 2)]
        assert kg.dev == [] and kg.test == []
        assert kg.entity_meta[0] == "first entity"
        assert kg.entity_meta[1] is None

    def test_ids_follow_file_order(self, tmp_path):
        path = write_dataset(
            tmp_path, entities=["z", "y", "x"], relations=["q", "p"],
            train=[("x", "p", "z")],
        )
        kg = kc.load_dataset(path)
        assert kg.entity_labels == ["z", "y", "x"]
        assert kg.train == [(2, 1, 0)]

    def test_empty_train_rejected(self, tmp_path):
        path = write_dataset(tmp_path, entities=["a", "b"], relations=["r"], train=[])
        with pytest.raises(DatasetError, match="train"):
            kc.load_dataset(path)

    def test_unknown_label_reports_line(self, tmp_path):
        path = write_dataset(
            tmp_path, entities=["a", "b"], relations=["r"],
            train=[("a", "r", "b"), ("a", "r", "ghost")],
        )
        with pytest.raises(DatasetError, match=r"train\.tsv:1.*ghost"):
            kc.load_dataset(path)

    def test_malformed_line_reports_line(self, tmp_path):
        path = write_dataset(tmp_path, entities=["a", "b"], relations=["r"],
                             train=[("a", "r", "b")])
        (tmp_path / "dev.tsv").write_text("a\tr\n", encoding="utf-8")
        with pytest.raises(DatasetError, match=r"dev\.tsv:0"):
            kc.load_dataset(path)

    def test_duplicate_in_split_rejected(self, tmp_path):
        path = write_dataset(
            tmp_path, entities=["a", "b"], relations=["r"],
            train=[("a", "r", "b"), ("a", "r", "b")],
        )
        with pytest.raises(DatasetError, match="duplicate"):
            kc.load_dataset(path)

    def test_cross_split_duplicate_rejected(self, tmp_path):
        path = write_dataset(
            tmp_path, entities=["a", "b"], relations=["r"],
            train=[("a", "r", "b")], dev=[("a", "r", "b")],
        )
        with pytest.raises(DatasetError, match="disjoint"):
            kc.load_dataset(path)

    def test_missing_relations_file(self, tmp_path):
        path = write_dataset(tmp_path, entities=["a"], relations=["r"], train=[])
        (tmp_path / "relations.tsv").unlink()
        with pytest.raises(DatasetError, match="relations.tsv"):
            kc.load_dataset(path)

    def test_save_rejects_labels_with_delimiters(self, tmp_path):
        kg = kc.KnowledgeGraph(["a\tb", "c"], ["r"], train=[(0, 0, 1)], dev=[], test=[])
        with pytest.raises(DatasetError, match="delimiter"):
            kc.save_dataset(kg, str(tmp_path / "bad"))

    def test_roundtrip_preserves_ids_and_triples(self, tmp_path):
        kg = random_kg(np.random.default_rng(3))
        out = tmp_path / "saved"
        kc.save_dataset(kg, str(out))
        back = kc.load_dataset(str(out))
        assert back.entity_labels == kg.entity_labels
        assert back.relation_labels == kg.relation_labels
        for split in ("train", "dev", "test"):
            assert back.split(split) == kg.split(split)


class TestBuildQueries:
    def test_two_queries_per_triple_in_order(self, toy_kg):
        queries = kc.build_queries(toy_kg, "train")
        assert queries == [
            kc.Query(TAIL, 0, 0, 1, "train"),
            kc.Query(HEAD, 1, 0, 0, "train"),
        ]

    def test_count_is_twice_split_size(self):
        kg = random_kg(np.random.default_rng(0), n_train=31, n_dev=7, n_test=5)
        for split in ("train", "dev", "test"):
            assert len(kc.build_queries(kg, split)) == 2 * len(kg.split(split))

    def test_empty_split_gives_empty_list(self, toy_kg):
        assert kc.build_queries(toy_kg, "test") == []

    def test_unknown_split_rejected(self, toy_kg):
        with pytest.raises(ValueError, match="unknown split"):
            kc.build_queries(toy_kg, "validation")


class TestFilterIndex:
    def test_collects_all_true_answers(self):
        kg = kc.KnowledgeGraph(
            entity_labels=["a", "b", "c"],
            relation_labels=["r"],
            train=[(0, 0, 1), (0, 0, 2)],
            dev=[],
            test=[],
        )
        fi = kc.build_filter_index(kg)
        assert fi.get(0, 0, TAIL).tolist() == [1, 2]
        assert fi.get(1, 0, HEAD).tolist() == [0]
        assert fi.get(2, 0, TAIL).tolist() == []

    def test_single_triple_gives_singletons(self, toy_kg):
        kg = kc.KnowledgeGraph(
            entity_labels=toy_kg.entity_labels,
            relation_labels=toy_kg.relation_labels,
            train=[(0, 0, 1)], dev=[], test=[],
        )
        fi = kc.build_filter_index(kg)
        assert fi.get(0, 0, TAIL).tolist() == [1]
        assert fi.get(1, 0, HEAD).tolist() == [0]

    def test_gold_always_in_own_filter_set(self):
        kg = random_kg(np.random.default_rng(11), n_train=34, n_dev=8, n_test=8)
        fi = kc.build_filter_index(kg)
        for split in ("train", "dev", "test"):
            for q in kc.build_queries(kg, split):
                assert q.gold in fi.get(q.anchor, q.relation, q.direction)


class TestValidation:
    def test_out_of_range_entity(self):
        kg = kc.KnowledgeGraph(["a"], ["r"], train=[(0, 0, 5)], dev=[], test=[])
        with pytest.raises(DatasetError, match="out of range"):
            kg.validate()

    def test_out_of_range_relation(self):
        kg = kc.KnowledgeGraph(["a", "b"], ["r"], train=[(0, 3, 1)], dev=[], test=[])
        with pytest.raises(DatasetError, match="relation id out of range"):
            kg.validate()
