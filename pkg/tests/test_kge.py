import cmath

import numpy as np
import pytest

import kgcascade as kc
from kgcascade.errors import FormatError, TrainingDivergedError
from kgcascade.kge import (
    ARCHITECTURES,
    batch_loss_and_grads,
    init_model,
    relation_param_dim,
)

from conftest import random_kg


def manual_model(arch, dim, entity, relation):
    return kc.KGEModel(arch, dim, np.asarray(entity, dtype=np.float64),
                       np.asarray(relation, dtype=np.float64))


def oracle_score(model, h, r, t):
    """Scalar reference scorer built on python complex numbers and loops."""
    e_h, e_t = model.entity[h], model.entity[t]
    rel = model.relation[r]
    d = model.dim
    if model.arch == "transe":
        return -sum(abs(e_h[k] + rel[k] - e_t[k]) for k in range(d))
    if model.arch == "complex":
        half = d // 2
        total = 0.0
        for k in range(half):
            hc = complex(e_h[k], e_h[half + k])
            rc = complex(rel[k], rel[half + k])
            tc = complex(e_t[k], e_t[half + k])
            total += (hc * rc * tc.conjugate()).real
        return total
    if model.arch == "rescal":
        w = rel.reshape(d, d)
        return sum(e_h[i] * w[i, j] * e_t[j] for i in range(d) for j in range(d))
    if model.arch == "rotate":
        half = d // 2
        total = 0.0
        for k in range(half):
            hc = complex(e_h[k], e_h[half + k])
            tc = complex(e_t[k], e_t[half + k])
            total += abs(hc * cmath.exp(1j * rel[k]) - tc)
        return -total
    raise AssertionError(model.arch)


class TestScoreTriple:
    def test_transe_exact_translation_scores_zero(self):
        model = manual_model("transe", 2, [[0.0, 0.0], [1.0, 1.0]], [[1.0, 1.0]])
        assert kc.score_triple(model, 0, 0, 1) == 0.0

    def test_transe_hand_value(self):
        model = manual_model("transe", 2, [[0.0, 0.0]], [[1.0, 1.0]])
        assert kc.score_triple(model, 0, 0, 0) == -2.0

    def test_rescal_identity_bilinear(self):
        e = [1.0, 0.0, 0.0]
        model = manual_model("rescal", 3, [e], [np.eye(3).ravel()])
        assert kc.score_triple(model, 0, 0, 0) == 1.0

    def test_rotate_zero_rotation_identical_vectors(self):
        # zero phase rotates nothing, so h == t scores 0 (the maximum)
        model = manual_model("rotate", 4, [[0.3, -0.2, 0.5, 0.1]], [[0.0, 0.0]])
        assert kc.score_triple(model, 0, 0, 0) == 0.0

    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_matches_scalar_oracle(self, arch):
        rng = np.random.default_rng(17)
        dim = 6
        model = manual_model(
            arch, dim,
            rng.normal(size=(7, dim)),
            rng.uniform(-np.pi, np.pi, size=(3, relation_param_dim(arch, dim))),
        )
        for _ in range(25):
            h, r, t = rng.integers(7), rng.integers(3), rng.integers(7)
            assert kc.score_triple(model, h, r, t) == pytest.approx(
                oracle_score(model, h, r, t), rel=1e-12, abs=1e-12
            )

    def test_id_out_of_range(self):
        model = init_model("transe", 4, 3, 2, seed=0)
        with pytest.raises(ValueError):
            kc.score_triple(model, 3, 0, 0)
        with pytest.raises(ValueError):
            kc.score_triple(model, 0, 2, 0)


class TestGradients:
    @pytest.mark.parametrize("arch", ARCHITECTURES)
    @pytest.mark.parametrize("loss", ["bce", "margin"])
    def test_analytic_matches_central_differences(self, arch, loss):
        rng = np.random.default_rng(23)
        dim = 4
        config = kc.TrainConfig(arch=arch, dim=dim, loss=loss, margin=1.5, l2=0.01, seed=0)
        model = manual_model(
            arch, dim,
            rng.normal(0, 0.5, size=(5, dim)),
            rng.uniform(-np.pi, np.pi, size=(2, relation_param_dim(arch, dim)))
            if arch == "rotate"
            else rng.normal(0, 0.5, size=(2, relation_param_dim(arch, dim))),
        )
        pos = np.array([[0, 0, 1], [2, 1, 3], [4, 0, 0]])
        neg_t = np.array([[2, 3], [0, 4], [1, 2]])
        neg_h = np.array([[3, 4], [1, 0], [2, 3]])
        _, g_ent, g_rel = batch_loss_and_grads(model, pos, neg_t, neg_h, config)

        eps = 1e-6

        def loss_at(entity, relation):
            probe = kc.KGEModel(arch, dim, entity, relation)
            return batch_loss_and_grads(probe, pos, neg_t, neg_h, config)[0]

        fd_ent = np.zeros_like(g_ent)
        for idx in np.ndindex(*g_ent.shape):
            up, down = model.entity.copy(), model.entity.copy()
            up[idx] += eps
            down[idx] -= eps
            fd_ent[idx] = (loss_at(up, model.relation) - loss_at(down, model.relation)) / (2 * eps)
        fd_rel = np.zeros_like(g_rel)
        for idx in np.ndindex(*g_rel.shape):
            up, down = model.relation.copy(), model.relation.copy()
            up[idx] += eps
            down[idx] -= eps
            fd_rel[idx] = (loss_at(model.entity, up) - loss_at(model.entity, down)) / (2 * eps)

        err_ent = np.linalg.norm(g_ent - fd_ent) / max(np.linalg.norm(g_ent), np.linalg.norm(fd_ent))
        err_rel = np.linalg.norm(g_rel - fd_rel) / max(np.linalg.norm(g_rel), np.linalg.norm(fd_rel))
        assert err_ent <= 1e-4
        assert err_rel <= 1e-4


class TestTrainConfig:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError, match="epochs"):
            kc.TrainConfig(epochs=0).validate()

    def test_odd_dim_rejected_for_complex_pairs(self):
        with pytest.raises(ValueError, match="even"):
            kc.TrainConfig(arch="complex", dim=5).validate()
        with pytest.raises(ValueError, match="even"):
            kc.TrainConfig(arch="rotate", dim=7).validate()

    def test_other_bounds(self):
        for bad in (
            dict(dim=1),
            dict(negatives=0),
            dict(batch_size=0),
            dict(lr=0.0),
            dict(loss="hinge"),
            dict(l2=-0.1),
            dict(arch="tucker"),
        ):
            with pytest.raises(ValueError):
                kc.TrainConfig(**bad).validate()


class TestTraining:
    def test_deterministic_given_seed(self):
        kg = random_kg(np.random.default_rng(2), n_entities=15, n_train=40, n_dev=6, n_test=6)
        config = kc.TrainConfig(arch="complex", dim=8, epochs=3, lr=0.5, negatives=2,
                                batch_size=16, seed=42)
        a = kc.train_kge(kg, config, eval_dev=False)
        b = kc.train_kge(kg, config, eval_dev=False)
        assert a.model.entity.tobytes() == b.model.entity.tobytes()
        assert a.model.relation.tobytes() == b.model.relation.tobytes()

    def test_learns_planted_structure(self):
        kg = kc.planted_kg(n_entities=200, n_groups=40, n_relations=4,
                           n_train=2000, n_dev=150, n_test=150, seed=5)
        config = kc.TrainConfig(arch="complex", dim=64, epochs=100, lr=2.0,
                                negatives=4, batch_size=256, seed=11)
        result = kc.train_kge(kg, config)
        baseline = kc.uniform_random_mrr(kg.n_entities)
        assert result.dev_report.mrr >= 10 * baseline

    def test_divergence_aborts_with_location(self):
        kg = random_kg(np.random.default_rng(3), n_entities=12, n_train=30, n_dev=4, n_test=4)
        config = kc.TrainConfig(arch="rescal", dim=8, epochs=50, lr=1e9,
                                negatives=2, batch_size=16, seed=1)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            kc.train_kge(kg, config, eval_dev=False)

    def test_rotate_phases_stay_wrapped(self):
        kg = random_kg(np.random.default_rng(4), n_entities=15, n_train=40, n_dev=4, n_test=4)
        config = kc.TrainConfig(arch="rotate", dim=8, epochs=5, lr=0.5,
                                negatives=2, batch_size=16, seed=3)
        result = kc.train_kge(kg, config, eval_dev=False)
        assert np.all(result.model.relation >= -np.pi)
        assert np.all(result.model.relation <= np.pi)

    def test_negative_sampler_avoids_the_answer(self):
        from kgcascade.kge import _sample_negatives

        rng = np.random.default_rng(0)
        forbidden = np.array([0, 1, 2] * 20)
        out = _sample_negatives(rng, forbidden, n=7, n_entities=3)
        assert not np.any(out == forbidden[:, None])


class TestScoreAll:
    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_consistent_with_score_triple(self, arch):
        rng = np.random.default_rng(31)
        kg = random_kg(rng, n_entities=12, n_train=30, n_dev=8, n_test=6)
        model = init_model(arch, 8, kg.n_entities, kg.n_relations, seed=9)
        queries = kc.build_queries(kg, "dev")
        matrix = kc.score_all(model, queries)
        for _ in range(100):
            i = int(rng.integers(len(queries)))
            j = int(rng.integers(kg.n_entities))
            q = queries[i]
            if q.direction == kc.TAIL:
                expected = kc.score_triple(model, q.anchor, q.relation, j)
            else:
                expected = kc.score_triple(model, j, q.relation, q.anchor)
            assert matrix.values[i, j] == pytest.approx(expected, rel=1e-5, abs=1e-5)

    def test_single_query_row(self):
        model = init_model("transe", 4, 3, 1, seed=1)
        queries = [kc.Query(kc.TAIL, 0, 0, 1)]
        matrix = kc.score_all(model, queries)
        assert matrix.values.shape == (1, 3)
        for j in range(3):
            assert matrix.values[0, j] == pytest.approx(
                kc.score_triple(model, 0, 0, j), rel=1e-6, abs=1e-6
            )

    def test_zero_queries(self):
        model = init_model("complex", 4, 5, 2, seed=1)
        matrix = kc.score_all(model, [])
        assert matrix.values.shape == (0, 5)

    def test_threads_do_not_change_results(self):
        rng = np.random.default_rng(5)
        kg = random_kg(rng, n_entities=20, n_train=50, n_dev=20, n_test=5)
        model = init_model("rotate", 8, kg.n_entities, kg.n_relations, seed=2)
        queries = kc.build_queries(kg, "dev")
        one = kc.score_all(model, queries, threads=1)
        four = kc.score_all(model, queries, threads=4)
        assert one.values.tobytes() == four.values.tobytes()


class TestCheckpoints:
    @pytest.mark.parametrize("arch", ARCHITECTURES)
    def test_file_roundtrip_is_bit_exact(self, arch, tmp_path):
        model = init_model(arch, 6, 9, 3, seed=13)
        p1 = str(tmp_path / "a.ckpt")
        p2 = str(tmp_path / "b.ckpt")
        kc.save_model(model, p1)
        loaded = kc.load_model(p1)
        kc.save_model(loaded, p2)
        assert open(p1, "rb").read() == open(p2, "rb").read()
        assert loaded.arch == arch and loaded.dim == 6
        assert loaded.n_entities == 9 and loaded.n_relations == 3

    def test_truncated_checkpoint_rejected(self, tmp_path):
        model = init_model("transe", 4, 5, 2, seed=0)
        path = str(tmp_path / "m.ckpt")
        kc.save_model(model, path)
        data = open(path, "rb").read()
        open(path, "wb").write(data[: len(data) // 2])
        with pytest.raises(FormatError, match="expected"):
            kc.load_model(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = str(tmp_path / "m.ckpt")
        open(path, "wb").write(b"NOPE" + b"\x00" * 60)
        with pytest.raises(FormatError, match="magic"):
            kc.load_model(path)
