"""Shallow knowledge-graph embedding scorers: the cascade's cheap first tier.

Four architectures are supported, all scoring a triple (h, r, t) so that a
higher value means a more plausible link:

* ``transe``:  -||e_h + w_r - e_t||_1
* ``complex``: Re<e_h, w_r, conj(e_t)>, embeddings split into real/imaginary
  halves of the d-dimensional vector
* ``rescal``:  e_h^T W_r e_t with a dense d x d matrix per relation
* ``rotate``:  -sum_k |h_k * exp(i theta_k) - t_k| over d/2 complex pairs,
  relation parameters are phases in [-pi, pi]

Training is plain minibatch SGD on either binary cross-entropy with uniform
negative sampling (default) or margin ranking loss. For each positive triple
the trainer corrupts the tail (for tail-prediction queries) and the head (for
head-prediction queries), never sampling the true answer itself. Everything is
deterministic given the config seed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .datasets import HEAD, TAIL, KnowledgeGraph, Query, build_filter_index, build_queries
from .errors import FormatError, TrainingDivergedError
from .scores import SCALE_RAW, ScoreMatrix, keys_from_queries

ARCHITECTURES = ("transe", "complex", "rescal", "rotate")
_ARCH_CODES = {name: i for i, name in enumerate(ARCHITECTURES)}

CHECKPOINT_MAGIC = b"CKGE"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    arch: str = "complex"
    dim: int = 64
    epochs: int = 50
    lr: float = 0.05
    negatives: int = 4
    batch_size: int = 256
    loss: str = "bce"  # "bce" or "margin"
    margin: float = 1.0
    l2: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.arch in ("complex", "rotate") and self.dim % 2:
            raise ValueError(f"{self.arch} needs an even embedding dimension")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.loss not in ("bce", "margin"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.l2 < 0:
            raise ValueError("l2 weight must be nonnegative")


@dataclass
class KGEModel:
    """Entity/relation parameters for one architecture (float64 in memory)."""

    arch: str
    dim: int
    entity: np.ndarray  # (n_entities, dim)
    relation: np.ndarray  # (n_relations, relation_param_dim(arch, dim))

    @property
    def n_entities(self) -> int:
        return self.entity.shape[0]

    @property
    def n_relations(self) -> int:
        return self.relation.shape[0]


def relation_param_dim(arch: str, dim: int) -> int:
    if arch == "rescal":
        return dim * dim
    if arch == "rotate":
        return dim // 2
    return dim


def init_model(arch: str, dim: int, n_entities: int, n_relations: int, seed: int) -> KGEModel:
    """Uniform init in [-1/sqrt(d), 1/sqrt(d)]; rotation phases in [-pi, pi].

    The init scale matters: an order of magnitude smaller leaves the
    multiplicative architectures stuck near the saddle at the origin under
    plain SGD (trilinear scores have vanishing gradients there).
    """
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(dim)
    entity = rng.uniform(-bound, bound, size=(n_entities, dim))
    p = relation_param_dim(arch, dim)
    if arch == "rotate":
        relation = rng.uniform(-np.pi, np.pi, size=(n_relations, p))
    else:
        relation = rng.uniform(-bound, bound, size=(n_relations, p))
    return KGEModel(arch, dim, entity, relation)


# ---------------------------------------------------------------------------
# scoring


def _split_complex(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    half = x.shape[-1] // 2
    return x[..., :half], x[..., half:]


def _scores_batch(arch, he, rp, te):
    """Triple scores for batches of gathered parameter rows."""
    if arch == "transe":
        return -np.abs(he + rp - te).sum(axis=-1)
    if arch == "complex":
        hr, hi = _split_complex(he)
        rr, ri = _split_complex(rp)
        tr, ti = _split_complex(te)
        return (hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr).sum(axis=-1)
    if arch == "rescal":
        d = he.shape[-1]
        w = rp.reshape(rp.shape[:-1] + (d, d))
        return np.einsum("...i,...ij,...j->...", he, w, te)
    if arch == "rotate":
        hr, hi = _split_complex(he)
        tr, ti = _split_complex(te)
        c, s = np.cos(rp), np.sin(rp)
        dr = hr * c - hi * s - tr
        di = hr * s + hi * c - ti
        return -np.sqrt(dr * dr + di * di).sum(axis=-1)
    raise ValueError(f"unknown architecture {arch!r}")


def score_triple(model: KGEModel, h: int, r: int, t: int) -> float:
    """Plausibility score of one triple; higher means more plausible."""
    for name, idx, limit in (("head", h, model.n_entities),
                             ("relation", r, model.n_relations),
                             ("tail", t, model.n_entities)):
        if not 0 <= idx < limit:
            raise ValueError(f"{name} id {idx} out of range")
    return float(
        _scores_batch(model.arch, model.entity[h], model.relation[r], model.entity[t])
    )


def _score_grads(arch, he, rp, te):
    """Scores plus per-sample gradients w.r.t. the gathered parameter rows.

    Returns (s, gh, gr, gt) where each gradient has the shape of its input
    block (rescal's gr is flattened to match the stored d^2 layout).
    """
    if arch == "transe":
        diff = he + rp - te
        s = -np.abs(diff).sum(axis=-1)
        sign = np.sign(diff)
        return s, -sign, -sign.copy(), sign
    if arch == "complex":
        hr, hi = _split_complex(he)
        rr, ri = _split_complex(rp)
        tr, ti = _split_complex(te)
        s = (hr * rr * tr + hi * rr * ti + hr * ri * ti - hi * ri * tr).sum(axis=-1)
        gh = np.concatenate([rr * tr + ri * ti, rr * ti - ri * tr], axis=-1)
        gr = np.concatenate([hr * tr + hi * ti, hr * ti - hi * tr], axis=-1)
        gt = np.concatenate([hr * rr - hi * ri, hi * rr + hr * ri], axis=-1)
        return s, gh, gr, gt
    if arch == "rescal":
        d = he.shape[-1]
        w = rp.reshape(rp.shape[:-1] + (d, d))
        s = np.einsum("...i,...ij,...j->...", he, w, te)
        gh = np.einsum("...ij,...j->...i", w, te)
        gt = np.einsum("...ij,...i->...j", w, he)
        gr = np.einsum("...i,...j->...ij", he, te).reshape(rp.shape)
        return s, gh, gr, gt
    if arch == "rotate":
        hr, hi = _split_complex(he)
        tr, ti = _split_complex(te)
        c, sn = np.cos(rp), np.sin(rp)
        ur = hr * c - hi * sn
        ui = hr * sn + hi * c
        dr = ur - tr
        di = ui - ti
        m = np.sqrt(dr * dr + di * di)
        s = -m.sum(axis=-1)
        safe = np.where(m > 0.0, m, 1.0)
        wr = np.where(m > 0.0, dr / safe, 0.0)
        wi = np.where(m > 0.0, di / safe, 0.0)
        gh = np.concatenate([-(wr * c + wi * sn), -(-wr * sn + wi * c)], axis=-1)
        gr = wr * ui - wi * ur
        gt = np.concatenate([wr, wi], axis=-1)
        return s, gh, gr, gt
    raise ValueError(f"unknown architecture {arch!r}")


# ---------------------------------------------------------------------------
# loss and gradients


def _sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.logaddexp(0.0, x)


def batch_loss_and_grads(
    model: KGEModel,
    positives: np.ndarray,
    neg_tails: np.ndarray,
    neg_heads: np.ndarray,
    config: TrainConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss and dense parameter gradients for one batch with fixed negatives.

    ``positives`` is (B, 3) int triples; ``neg_tails`` / ``neg_heads`` are
    (B, n) corrupted entity ids for the tail- and head-prediction directions.
    Exposed (rather than private) so the gradients can be checked against
    finite differences.
    """
    arch = config.arch
    h, r, t = positives[:, 0], positives[:, 1], positives[:, 2]
    bsz, n_neg = neg_tails.shape
    ent, rel = model.entity, model.relation

    s_pos, gh_pos, gr_pos, gt_pos = _score_grads(arch, ent[h], rel[r], ent[t])

    hh = np.repeat(h, n_neg)
    rr = np.repeat(r, n_neg)
    tt = np.repeat(t, n_neg)
    nt = neg_tails.ravel()
    nh = neg_heads.ravel()
    s_nt, gh_nt, gr_nt, gt_nt = _score_grads(arch, ent[hh], rel[rr], ent[nt])
    s_nh, gh_nh, gr_nh, gt_nh = _score_grads(arch, ent[nh], rel[rr], ent[tt])

    if config.loss == "bce":
        # positive counted once per query direction
        loss = (
            2.0 * _softplus(-s_pos).sum() + _softplus(s_nt).sum() + _softplus(s_nh).sum()
        ) / bsz
        c_pos = -2.0 * _sigmoid(-s_pos) / bsz
        c_nt = _sigmoid(s_nt) / bsz
        c_nh = _sigmoid(s_nh) / bsz
    else:
        gap_t = config.margin - s_pos[:, None] + s_nt.reshape(bsz, n_neg)
        gap_h = config.margin - s_pos[:, None] + s_nh.reshape(bsz, n_neg)
        loss = (np.maximum(gap_t, 0.0).sum() + np.maximum(gap_h, 0.0).sum()) / bsz
        act_t = (gap_t > 0.0).astype(np.float64)
        act_h = (gap_h > 0.0).astype(np.float64)
        c_pos = -(act_t.sum(axis=1) + act_h.sum(axis=1)) / bsz
        c_nt = act_t.ravel() / bsz
        c_nh = act_h.ravel() / bsz

    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    np.add.at(g_ent, h, c_pos[:, None] * gh_pos)
    np.add.at(g_ent, t, c_pos[:, None] * gt_pos)
    np.add.at(g_rel, r, c_pos[:, None] * gr_pos)
    np.add.at(g_ent, hh, c_nt[:, None] * gh_nt)
    np.add.at(g_ent, nt, c_nt[:, None] * gt_nt)
    np.add.at(g_rel, rr, c_nt[:, None] * gr_nt)
    np.add.at(g_ent, nh, c_nh[:, None] * gh_nh)
    np.add.at(g_ent, tt, c_nh[:, None] * gt_nh)
    np.add.at(g_rel, rr, c_nh[:, None] * gr_nh)

    if config.l2 > 0.0:
        he, re_, te = ent[h], rel[r], ent[t]
        loss += config.l2 * ((he * he).sum() + (re_ * re_).sum() + (te * te).sum()) / bsz
        coef = 2.0 * config.l2 / bsz
        np.add.at(g_ent, h, coef * he)
        np.add.at(g_ent, t, coef * te)
        np.add.at(g_rel, r, coef * re_)

    return float(loss), g_ent, g_rel


def _sample_negatives(rng: np.random.Generator, forbidden: np.ndarray, n: int, n_entities: int) -> np.ndarray:
    """(B, n) uniform entity ids, rejecting the true answer of each row."""
    out = rng.integers(0, n_entities, size=(forbidden.shape[0], n))
    mask = out == forbidden[:, None]
    while mask.any():
        out[mask] = rng.integers(0, n_entities, size=int(mask.sum()))
        mask = out == forbidden[:, None]
    return out


def _wrap_phases(x: np.ndarray) -> np.ndarray:
    return np.mod(x + np.pi, 2.0 * np.pi) - np.pi


@dataclass
class TrainResult:
    model: KGEModel
    epoch_losses: list[float] = field(default_factory=list)
    dev_report: "object | None" = None  # EvalReport when dev evaluation ran


def train_kge(kg: KnowledgeGraph, config: TrainConfig, eval_dev: bool = True) -> TrainResult:
    """SGD-train an embedding model on the train split.

    Deterministic given ``config.seed``. When ``eval_dev`` is set and the dev
    split is nonempty, the returned result carries the filtered dev
    :class:`~kgcascade.evaluation.EvalReport` of the trained model.
    """
    config.validate()
    model = init_model(config.arch, config.dim, kg.n_entities, kg.n_relations, config.seed)
    triples = np.asarray(kg.train, dtype=np.int64)
    rng = np.random.default_rng(config.seed + 1)
    epoch_losses: list[float] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(triples))
        batch_losses = []
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            batch = triples[order[start : start + config.batch_size]]
            neg_t = _sample_negatives(rng, batch[:, 2], config.negatives, kg.n_entities)
            neg_h = _sample_negatives(rng, batch[:, 0], config.negatives, kg.n_entities)
            # overflow here is not an error: it surfaces as a non-finite loss
            # and aborts through the divergence check below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, g_ent, g_rel = batch_loss_and_grads(model, batch, neg_t, neg_h, config)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {bi}", epoch=epoch, batch=bi
                )
            model.entity -= config.lr * g_ent
            model.relation -= config.lr * g_rel
            if config.arch == "rotate":
                model.relation = _wrap_phases(model.relation)
            batch_losses.append(loss)
        epoch_losses.append(float(np.mean(batch_losses)))

    result = TrainResult(model=model, epoch_losses=epoch_losses)
    if eval_dev and kg.dev:
        from .evaluation import evaluate

        dev_queries = build_queries(kg, "dev")
        matrix = score_all(model, dev_queries)
        result.dev_report = evaluate(matrix, dev_queries, build_filter_index(kg))
    return result


# ---------------------------------------------------------------------------
# full candidate scoring


def _rows_tail(model: KGEModel, anchors, rels) -> np.ndarray:
    """Scores of all entities as tails for (anchor, rel) query blocks."""
    arch, ent = model.arch, model.entity
    if arch == "complex":
        hr, hi = _split_complex(ent[anchors])
        rr, ri = _split_complex(model.relation[rels])
        er, ei = _split_complex(ent)
        wr = hr * rr - hi * ri
        wi = hr * ri + hi * rr
        return wr @ er.T + wi @ ei.T
    if arch == "rescal":
        d = model.dim
        w = model.relation[rels].reshape(-1, d, d)
        u = np.einsum("bi,bij->bj", ent[anchors], w)
        return u @ ent.T
    if arch == "transe":
        v = ent[anchors] + model.relation[rels]
        return _chunked_l1(v, ent)
    if arch == "rotate":
        hr, hi = _split_complex(ent[anchors])
        ph = model.relation[rels]
        c, s = np.cos(ph), np.sin(ph)
        u = np.concatenate([hr * c - hi * s, hr * s + hi * c], axis=-1)
        return _chunked_cmod(u, ent)
    raise ValueError(f"unknown architecture {arch!r}")


def _rows_head(model: KGEModel, anchors, rels) -> np.ndarray:
    """Scores of all entities as heads for (rel, anchor-as-tail) query blocks."""
    arch, ent = model.arch, model.entity
    if arch == "complex":
        tr, ti = _split_complex(ent[anchors])
        rr, ri = _split_complex(model.relation[rels])
        er, ei = _split_complex(ent)
        vr = rr * tr + ri * ti
        vi = ri * tr - rr * ti
        return vr @ er.T - vi @ ei.T
    if arch == "rescal":
        d = model.dim
        w = model.relation[rels].reshape(-1, d, d)
        u = np.einsum("bij,bj->bi", w, ent[anchors])
        return u @ ent.T
    if arch == "transe":
        # -||e_h + w_r - e_t||_1 over candidate heads: compare e_h to (t - r)
        v = ent[anchors] - model.relation[rels]
        return _chunked_l1(v, ent)
    if arch == "rotate":
        # |h*rot - t| == |h - t*conj(rot)| because |rot| = 1
        tr, ti = _split_complex(ent[anchors])
        ph = model.relation[rels]
        c, s = np.cos(ph), np.sin(ph)
        v = np.concatenate([tr * c + ti * s, ti * c - tr * s], axis=-1)
        return _chunked_cmod(v, ent)
    raise ValueError(f"unknown architecture {arch!r}")


def _chunked_l1(targets: np.ndarray, ent: np.ndarray) -> np.ndarray:
    out = np.empty((targets.shape[0], ent.shape[0]), dtype=np.float64)
    step = max(1, (1 << 22) // max(1, ent.size))
    for i in range(0, targets.shape[0], step):
        block = targets[i : i + step]
        out[i : i + step] = -np.abs(block[:, None, :] - ent[None, :, :]).sum(axis=-1)
    return out


def _chunked_cmod(targets: np.ndarray, ent: np.ndarray) -> np.ndarray:
    half = ent.shape[1] // 2
    out = np.empty((targets.shape[0], ent.shape[0]), dtype=np.float64)
    step = max(1, (1 << 22) // max(1, ent.size))
    for i in range(0, targets.shape[0], step):
        block = targets[i : i + step]
        dr = block[:, None, :half] - ent[None, :, :half]
        di = block[:, None, half:] - ent[None, :, half:]
        out[i : i + step] = -np.sqrt(dr * dr + di * di).sum(axis=-1)
    return out


def score_all(model: KGEModel, queries: list[Query], threads: int = 1) -> ScoreMatrix:
    """Full query-answer score matrix: one row per query, one column per entity.

    Row i, column j equals ``score_triple`` with entity j substituted into the
    open slot of query i. Rows are independent, so computation can be chunked
    across ``threads`` worker threads with disjoint output writes.
    """
    keys = keys_from_queries(queries)
    n = len(queries)
    values = np.empty((n, model.n_entities), dtype=np.float64)
    directions = keys[:, 0].astype(np.int64)
    anchors = keys[:, 1].astype(np.int64)
    rels = keys[:, 2].astype(np.int64)
    if n and (anchors.max() >= model.n_entities or rels.max() >= model.n_relations):
        raise ValueError("query references an entity or relation unknown to the model")

    def fill(lo: int, hi: int) -> None:
        d = directions[lo:hi]
        tail_rows = np.nonzero(d == TAIL)[0] + lo
        head_rows = np.nonzero(d == HEAD)[0] + lo
        if tail_rows.size:
            values[tail_rows] = _rows_tail(model, anchors[tail_rows], rels[tail_rows])
        if head_rows.size:
            values[head_rows] = _rows_head(model, anchors[head_rows], rels[head_rows])

    if threads <= 1 or n < 2 * threads:
        fill(0, n)
    else:
        from concurrent.futures import ThreadPoolExecutor

        bounds = np.linspace(0, n, threads + 1).astype(int)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda se: fill(*se), zip(bounds[:-1], bounds[1:])))

    return ScoreMatrix(values.astype(np.float32), keys, SCALE_RAW)


# ---------------------------------------------------------------------------
# checkpoints


def save_model(model: KGEModel, path: str) -> None:
    """Binary checkpoint: header plus float32 entity and relation blocks."""
    header = CHECKPOINT_MAGIC + struct.pack(
        "<IBIQQ",
        CHECKPOINT_VERSION,
        _ARCH_CODES[model.arch],
        model.dim,
        model.n_entities,
        model.n_relations,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.entity.astype("<f4").tobytes())
        fh.write(model.relation.astype("<f4").tobytes())


def load_model(path: str) -> KGEModel:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 29 or data[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a model checkpoint (bad magic)")
    version, arch_code, dim, n_ent, n_rel = struct.unpack_from("<IBIQQ", data, 4)
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    if arch_code >= len(ARCHITECTURES):
        raise FormatError(f"{path}: unknown architecture code {arch_code}")
    arch = ARCHITECTURES[arch_code]
    p = relation_param_dim(arch, dim)
    expected = 29 + (n_ent * dim + n_rel * p) * 4
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    ent = (
        np.frombuffer(data, dtype="<f4", count=n_ent * dim, offset=29)
        .reshape(n_ent, dim)
        .astype(np.float64)
    )
    rel = (
        np.frombuffer(data, dtype="<f4", count=n_rel * p, offset=29 + n_ent * dim * 4)
        .reshape(n_rel, p)
        .astype(np.float64)
    )
    if not (np.isfinite(ent).all() and np.isfinite(rel).all()):
        raise FormatError(f"{path}: checkpoint contains non-finite parameters")
    return KGEModel(arch, dim, ent, rel)
