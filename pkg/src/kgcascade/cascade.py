"""Tiered cascaded reranking: candidate pruning and boundary-wise reweighting.

A cascade is an ordered list of scorer tiers. The first tier scores every
query-candidate pair; at each boundary between tiers a pruning rule picks, per
query, the candidate subset worth rescoring, and the scores of progressed
candidates are replaced by the convex combination
``alpha * current + (1 - alpha) * next_tier`` while all other candidates keep
their current score untouched. Pruning rules:

* ``none``             -- progress every candidate
* ``static``           -- progress the global top-k per query
* ``static-quantile``  -- static, with k set to the nearest-rank q-quantile of
                          the gold-rank distribution of the supplied queries
* ``dynamic``          -- per-query depth k from a quantile regressor over the
                          query's sorted score row

Ties at a top-k boundary always resolve toward the lower entity id, so runs
are deterministic across platforms.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .datasets import HEAD, TAIL, FilterIndex, Query
from .ensemble import DEFAULT_ALPHA_GRID, combine_values
from .errors import AlignmentError, FormatError, TrainingDivergedError
from .scores import SCALE_NORMALIZED, CostModel, ScoreMatrix, cascade_cost

PRUNING_KINDS = ("none", "static", "static-quantile", "dynamic")

REGRESSOR_MAGIC = b"CQRG"
REGRESSOR_VERSION = 1

# Sorted score rows are fed to the regressor whole up to this width; larger
# rows are compressed to evenly spaced quantile samples.
FULL_FEATURE_LIMIT = 4096
COMPRESSED_FEATURES = 256


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PruningSpec:
    kind: str = "none"
    k: int | None = None
    q: float | None = None
    per_direction: bool = False
    # trained regressor(s) for dynamic pruning: a QuantileRegressor, or a
    # {TAIL: ..., HEAD: ...} dict when per_direction is set
    regressor: "QuantileRegressor | dict | None" = None

    def validate(self) -> None:
        if self.kind not in PRUNING_KINDS:
            raise ValueError(f"unknown pruning kind {self.kind!r}")
        if self.kind == "static":
            if self.k is None or self.k < 0:
                raise ValueError("static pruning needs k >= 0")
        if self.kind == "static-quantile":
            if self.q is None or not 0.0 < self.q <= 1.0:
                raise ValueError("static-quantile pruning needs q in (0, 1]")
        if self.kind == "dynamic":
            if self.q is None or not 0.0 < self.q < 1.0:
                raise ValueError("dynamic pruning needs q in (0, 1)")


@dataclass
class Boundary:
    pruning: PruningSpec = field(default_factory=PruningSpec)
    alpha: float | None = 0.5  # None means: tune on dev during preparation

    def validate(self) -> None:
        self.pruning.validate()
        if self.alpha is not None and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class CascadeConfig:
    tiers: list[str]
    boundaries: list[Boundary]
    cost_model: CostModel | None = None

    def validate(self) -> None:
        if len(self.tiers) < 1:
            raise ValueError("a cascade needs at least one tier")
        if len(self.boundaries) != len(self.tiers) - 1:
            raise ValueError(
                f"{len(self.tiers)} tiers need {len(self.tiers) - 1} boundaries, "
                f"got {len(self.boundaries)}"
            )
        for b in self.boundaries:
            b.validate()

    def to_dict(self) -> dict:
        out = {"tiers": list(self.tiers), "boundaries": []}
        for b in self.boundaries:
            pruning: dict = {"kind": b.pruning.kind}
            if b.pruning.k is not None:
                pruning["k"] = b.pruning.k
            if b.pruning.q is not None:
                pruning["q"] = b.pruning.q
            if b.pruning.per_direction:
                pruning["per_direction"] = True
            out["boundaries"].append({"pruning": pruning, "alpha": b.alpha})
        if self.cost_model is not None and self.cost_model.costs:
            out["cost_model"] = {
                name: {"per_pair": pp, "setup": su}
                for name, (pp, su) in self.cost_model.costs.items()
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CascadeConfig":
        boundaries = []
        for bd in data.get("boundaries", []):
            pd = bd.get("pruning", {})
            boundaries.append(
                Boundary(
                    pruning=PruningSpec(
                        kind=pd.get("kind", "none"),
                        k=pd.get("k"),
                        q=pd.get("q"),
                        per_direction=bool(pd.get("per_direction", False)),
                    ),
                    alpha=bd.get("alpha"),
                )
            )
        cost_model = None
        if "cost_model" in data:
            cost_model = CostModel(
                {
                    name: (float(c.get("per_pair", 1.0)), float(c.get("setup", 0.0)))
                    for name, c in data["cost_model"].items()
                }
            )
        config = cls(tiers=list(data["tiers"]), boundaries=boundaries, cost_model=cost_model)
        config.validate()
        return config


@dataclass
class CandidateSets:
    """Per-query ordered candidate subsets progressed to the next tier."""

    sets: list[np.ndarray]
    n_entities: int

    @property
    def total_selected(self) -> int:
        return int(sum(s.size for s in self.sets))


# ---------------------------------------------------------------------------
# pruning primitives


def _descending_order(values: np.ndarray) -> np.ndarray:
    """Per-row candidate order: score descending, entity id ascending on ties."""
    return np.argsort(-values, axis=1, kind="stable")


def static_prune(matrix: ScoreMatrix, k: int) -> CandidateSets:
    """Top-k candidates per query, boundary ties broken toward lower entity id."""
    if not 0 <= k <= matrix.n_entities:
        raise ValueError(f"k must be in [0, {matrix.n_entities}], got {k}")
    order = _descending_order(matrix.values)
    sets = [order[i, :k].copy() for i in range(matrix.n_queries)]
    return CandidateSets(sets=sets, n_entities=matrix.n_entities)


def select_k_from_quantile(dev_ranks, q: float) -> int:
    """Nearest-rank empirical q-quantile of a gold-rank sample, ceiled to >= 1."""
    ranks = np.asarray(dev_ranks, dtype=np.float64)
    if ranks.size == 0:
        raise ValueError("cannot take a quantile of an empty rank sample")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    ranks = np.sort(ranks)
    # guard against float noise pushing q*n just past an integer boundary
    idx = int(math.ceil(q * ranks.size - 1e-9))
    idx = min(max(idx, 1), ranks.size)
    return max(1, int(math.ceil(ranks[idx - 1])))


def pinball_loss(pred, target, q: float):
    """Quantile-regression check loss; zero only when pred equals target."""
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")
    diff = np.asarray(target, dtype=np.float64) - np.asarray(pred, dtype=np.float64)
    out = np.maximum(q * diff, (q - 1.0) * diff)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# quantile regressor


@dataclass
class RegressorConfig:
    # full-batch training: small steps over many epochs; larger rates make
    # Adam oscillate into the constant-quantile solution without using the
    # score-distribution features at all
    hidden: int = 64
    lr: float = 0.01
    epochs: int = 5000
    seed: int = 0


@dataclass
class QuantileRegressor:
    """One-hidden-layer rectifier MLP predicting per-query progression depth.

    The input is the query's sorted (descending) score row, compressed to
    evenly spaced quantile samples for very wide rows. Outputs are in rank
    units; applied predictions are ceiled and clamped to [1, n_entities].
    A ``hidden`` width of 0 degenerates to a constant predictor, which is the
    reference case for the pinball-minimizer property.
    """

    q: float
    n_entities: int
    input_dim: int
    hidden: int
    w1: np.ndarray  # (hidden, input_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden,)
    b2: float
    lr: float = 0.03
    epochs: int = 400
    seed: int = 0
    val_loss: float = float("nan")
    # seeded half/half split used at training time (not persisted)
    train_indices: np.ndarray | None = None
    val_indices: np.ndarray | None = None

    def featurize(self, sorted_rows: np.ndarray) -> np.ndarray:
        if sorted_rows.ndim != 2 or sorted_rows.shape[1] != self.n_entities:
            raise ValueError(
                f"expected sorted rows of width {self.n_entities}, "
                f"got shape {sorted_rows.shape}"
            )
        return _compress_features(sorted_rows, self.n_entities)

    def forward(self, features: np.ndarray) -> np.ndarray:
        """Raw depth predictions in rank units."""
        if features.shape[1] != self.input_dim:
            raise ValueError(
                f"feature dimension {features.shape[1]} does not match "
                f"regressor input dimension {self.input_dim}"
            )
        if self.hidden == 0:
            return np.full(features.shape[0], self.b2, dtype=np.float64)
        z = features @ self.w1.T + self.b1
        h = np.maximum(z, 0.0)
        return h @ self.w2 + self.b2

    def predict_depth(self, sorted_rows: np.ndarray) -> np.ndarray:
        return self.forward(self.featurize(sorted_rows))

    def predict_k(self, sorted_rows: np.ndarray) -> np.ndarray:
        raw = np.ceil(self.predict_depth(sorted_rows))
        return np.clip(raw, 1, self.n_entities).astype(np.int64)


def _compress_features(sorted_rows: np.ndarray, n_entities: int) -> np.ndarray:
    if n_entities <= FULL_FEATURE_LIMIT:
        return np.asarray(sorted_rows, dtype=np.float64)
    idx = np.round(np.linspace(0, n_entities - 1, COMPRESSED_FEATURES)).astype(int)
    return np.asarray(sorted_rows[:, idx], dtype=np.float64)


def sort_rows_descending(values: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.sort(values, axis=1)[:, ::-1])


def train_rank_regressor(
    features: np.ndarray,
    gold_ranks: np.ndarray,
    q: float,
    config: RegressorConfig | None = None,
) -> QuantileRegressor:
    """Fit the depth regressor by full-batch Adam on the pinball loss.

    ``features`` are sorted (descending) score rows aligned with
    ``gold_ranks``. The supplied queries are split into a seeded random
    half for fitting and a half for validation; the achieved validation
    pinball loss (in rank units) is stored on the returned regressor.
    Internally targets are scaled by 1/n_entities (the pinball minimizer is
    scale-equivariant) and the output layer is rescaled back after training.
    """
    if config is None:
        config = RegressorConfig()
    features = np.asarray(features, dtype=np.float64)
    ranks = np.asarray(gold_ranks, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != ranks.shape[0]:
        raise ValueError("features and gold_ranks are not row-aligned")
    if features.shape[0] < 2:
        raise ValueError("need at least 2 queries to split into train/validation halves")
    if np.any(features[:, 1:] > features[:, :-1] + 1e-9):
        raise ValueError("feature rows must be sorted in descending order")
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must be in (0, 1), got {q}")

    n, n_entities = features.shape
    x = _compress_features(features, n_entities)
    y = ranks / n_entities

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    train_idx, val_idx = perm[: n // 2], perm[n // 2 :]
    xt, yt = x[train_idx], y[train_idx]

    f_dim = x.shape[1]
    hidden = config.hidden
    if hidden > 0:
        w1 = rng.uniform(-1.0, 1.0, size=(hidden, f_dim)) / np.sqrt(f_dim)
        b1 = np.zeros(hidden)
        w2 = rng.uniform(-1.0, 1.0, size=hidden) / np.sqrt(hidden)
    else:
        w1 = np.zeros((0, f_dim))
        b1 = np.zeros(0)
        w2 = np.zeros(0)
    b2 = float(np.mean(yt))

    params = [w1, b1, w2, np.array([b2])]
    adam_m = [np.zeros_like(p) for p in params]
    adam_v = [np.zeros_like(p) for p in params]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n_train = len(train_idx)

    for step in range(1, config.epochs + 1):
        w1, b1, w2, b2a = params
        # overflow surfaces as a non-finite loss and aborts just below
        with np.errstate(over="ignore", invalid="ignore"):
            if hidden > 0:
                z = xt @ w1.T + b1
                h = np.maximum(z, 0.0)
                pred = h @ w2 + b2a[0]
            else:
                pred = np.full(n_train, b2a[0])
            diff = yt - pred
            loss = float(np.mean(np.maximum(q * diff, (q - 1.0) * diff)))
        if not np.isfinite(loss):
            raise TrainingDivergedError(f"non-finite regressor loss at epoch {step}")
        dpred = np.where(diff > 0, -q, np.where(diff < 0, 1.0 - q, 0.0)) / n_train
        if hidden > 0:
            dh = dpred[:, None] * w2[None, :]
            dz = dh * (z > 0.0)
            grads = [dz.T @ xt, dz.sum(axis=0), h.T @ dpred, np.array([dpred.sum()])]
        else:
            grads = [np.zeros_like(w1), np.zeros_like(b1), np.zeros_like(w2), np.array([dpred.sum()])]
        t_corr1 = 1.0 - beta1**step
        t_corr2 = 1.0 - beta2**step
        for p, g, m, v in zip(params, grads, adam_m, adam_v):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * g * g
            p -= config.lr * (m / t_corr1) / (np.sqrt(v / t_corr2) + eps)

    w1, b1, w2, b2a = params
    reg = QuantileRegressor(
        q=q,
        n_entities=n_entities,
        input_dim=f_dim,
        hidden=hidden,
        w1=w1,
        b1=b1,
        w2=w2 * n_entities,
        b2=float(b2a[0]) * n_entities,
        lr=config.lr,
        epochs=config.epochs,
        seed=config.seed,
        train_indices=train_idx,
        val_indices=val_idx,
    )
    if val_idx.size:
        val_pred = reg.forward(x[val_idx])
        reg.val_loss = float(np.mean(pinball_loss(val_pred, ranks[val_idx], q)))
    return reg


def dynamic_prune(matrix: ScoreMatrix, regressor) -> CandidateSets:
    """Per-query top-k-hat candidates, k-hat from the depth regressor.

    ``regressor`` is a :class:`QuantileRegressor`, or a ``{direction: regressor}``
    dict when separate regressors were trained per query direction.
    """
    sorted_rows = sort_rows_descending(matrix.values)
    if isinstance(regressor, dict):
        k_hat = np.empty(matrix.n_queries, dtype=np.int64)
        directions = matrix.query_keys[:, 0].astype(np.int64)
        covered = np.zeros(matrix.n_queries, dtype=bool)
        for direction, reg in regressor.items():
            rows = np.nonzero(directions == direction)[0]
            if rows.size:
                k_hat[rows] = reg.predict_k(sorted_rows[rows])
                covered[rows] = True
        if not covered.all():
            missing = sorted(set(directions[~covered].tolist()))
            raise ValueError(f"no regressor for query direction(s) {missing}")
    else:
        k_hat = regressor.predict_k(sorted_rows)
    order = _descending_order(matrix.values)
    sets = [order[i, : k_hat[i]].copy() for i in range(matrix.n_queries)]
    return CandidateSets(sets=sets, n_entities=matrix.n_entities)


# ---------------------------------------------------------------------------
# regressor checkpoints


def save_regressor(reg: QuantileRegressor, path: str) -> None:
    header = REGRESSOR_MAGIC + struct.pack(
        "<IdQIIdIQd",
        REGRESSOR_VERSION,
        reg.q,
        reg.n_entities,
        reg.input_dim,
        reg.hidden,
        reg.lr,
        reg.epochs,
        reg.seed,
        reg.val_loss,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(reg.w1.astype("<f4").tobytes())
        fh.write(reg.b1.astype("<f4").tobytes())
        fh.write(reg.w2.astype("<f4").tobytes())
        fh.write(np.array([reg.b2], dtype="<f4").tobytes())


def load_regressor(path: str) -> QuantileRegressor:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != REGRESSOR_MAGIC:
        raise FormatError(f"{path}: not a regressor checkpoint (bad magic)")
    version, q, n_entities, input_dim, hidden, lr, epochs, seed, val_loss = struct.unpack_from(
        "<IdQIIdIQd", data, 4
    )
    if version != REGRESSOR_VERSION:
        raise FormatError(f"{path}: unsupported regressor version {version}")
    offset = 4 + struct.calcsize("<IdQIIdIQd")
    counts = [hidden * input_dim, hidden, hidden, 1]
    expected = offset + sum(counts) * 4
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    blocks = []
    for count in counts:
        blocks.append(np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64))
        offset += count * 4
    return QuantileRegressor(
        q=q,
        n_entities=int(n_entities),
        input_dim=int(input_dim),
        hidden=int(hidden),
        w1=blocks[0].reshape(hidden, input_dim),
        b1=blocks[1],
        w2=blocks[2],
        b2=float(blocks[3][0]),
        lr=lr,
        epochs=int(epochs),
        seed=int(seed),
        val_loss=float(val_loss),
    )


# ---------------------------------------------------------------------------
# running a cascade


@dataclass
class TierCost:
    scorer: str
    pairs: int
    cost: float


@dataclass
class CostReport:
    tiers: list[TierCost]
    total_pairs: int
    total_cost: float

    def to_dict(self) -> dict:
        return {
            "tiers": [
                {"scorer": t.scorer, "pairs": t.pairs, "cost": t.cost} for t in self.tiers
            ],
            "total_pairs": self.total_pairs,
            "total_cost": self.total_cost,
        }


@dataclass
class CascadeResult:
    matrix: ScoreMatrix
    cost: CostReport
    candidate_sets: list[CandidateSets]
    # per boundary: queries where a progressed candidate's combined score fell
    # below the best untouched score, i.e. reordering across the pruning cut
    boundary_crossings: list[int]
    boundary_summaries: list[dict] = field(default_factory=list)


def _resolve_candidates(
    matrix: ScoreMatrix,
    pruning: PruningSpec,
    queries: list[Query],
    filter_index: FilterIndex,
) -> CandidateSets:
    from .evaluation import gold_ranks  # deferred: evaluation imports scores

    if pruning.kind == "none":
        return static_prune(matrix, matrix.n_entities)
    if pruning.kind == "static":
        return static_prune(matrix, min(pruning.k, matrix.n_entities))
    if pruning.kind == "static-quantile":
        ranks = gold_ranks(matrix, queries, filter_index)
        k = select_k_from_quantile(ranks, pruning.q)
        return static_prune(matrix, min(k, matrix.n_entities))
    if pruning.kind == "dynamic":
        if pruning.regressor is None:
            raise ValueError("dynamic pruning requires a trained regressor")
        return dynamic_prune(matrix, pruning.regressor)
    raise ValueError(f"unknown pruning kind {pruning.kind!r}")


def _apply_boundary(
    current: np.ndarray,
    next_tier: np.ndarray,
    sets: CandidateSets,
    alpha: float,
) -> tuple[np.ndarray, int]:
    """Reweight progressed candidates in place; return (values, crossing count)."""
    n, n_entities = current.shape
    crossings = 0
    if all(s.size == n_entities for s in sets.sets):
        # full progression: identical elementwise result, done in one shot
        return combine_values(current, next_tier, alpha), 0
    for i, cand in enumerate(sets.sets):
        if cand.size == 0:
            continue
        combined = combine_values(current[i, cand], next_tier[i, cand], alpha)
        if cand.size < n_entities:
            mask = np.ones(n_entities, dtype=bool)
            mask[cand] = False
            untouched_max = current[i, mask].max()
            if combined.min() < untouched_max:
                crossings += 1
        current[i, cand] = combined
    return current, crossings


def run_cascade(
    config: CascadeConfig,
    tier_matrices: list[ScoreMatrix],
    queries: list[Query],
    filter_index: FilterIndex,
) -> CascadeResult:
    """Run the full tiered reranking over precomputed, normalized tier matrices.

    Tier 1 is charged for all N x n_entities pairs; tier t+1 only for the
    candidates progressed across boundary t. Alphas must be concrete (tune
    with :func:`prepare_cascade` first) and dynamic boundaries need their
    trained regressor attached.
    """
    config.validate()
    if len(tier_matrices) != len(config.tiers):
        raise AlignmentError(
            f"{len(config.tiers)} tiers configured but {len(tier_matrices)} matrices given"
        )
    base = tier_matrices[0]
    for m in tier_matrices:
        if m.scale != SCALE_NORMALIZED:
            raise ValueError("cascade tiers must be per-query normalized matrices")
        if m.values.shape != base.values.shape or not np.array_equal(
            m.query_keys, base.query_keys
        ):
            raise AlignmentError("tier matrices are not key-aligned")
    if len(queries) != base.n_queries:
        raise AlignmentError("query list does not match matrix rows")

    values = base.values.copy()
    n, n_entities = values.shape
    pairs: list[tuple[str, int]] = [(config.tiers[0], n * n_entities)]
    all_sets: list[CandidateSets] = []
    crossings: list[int] = []
    summaries: list[dict] = []

    for t, boundary in enumerate(config.boundaries):
        if boundary.alpha is None:
            raise ValueError(
                f"boundary {t} has no concrete alpha; run prepare_cascade first"
            )
        current = ScoreMatrix(values, base.query_keys, SCALE_NORMALIZED)
        sets = _resolve_candidates(current, boundary.pruning, queries, filter_index)
        values, crossed = _apply_boundary(
            values, tier_matrices[t + 1].values, sets, boundary.alpha
        )
        sizes = np.array([s.size for s in sets.sets], dtype=np.int64)
        pairs.append((config.tiers[t + 1], sets.total_selected))
        all_sets.append(sets)
        crossings.append(crossed)
        summaries.append(
            {
                "boundary": t,
                "pruning": boundary.pruning.kind,
                "alpha": boundary.alpha,
                "pairs": int(sizes.sum()),
                "k_min": int(sizes.min()) if n else 0,
                "k_median": float(np.median(sizes)) if n else 0.0,
                "k_max": int(sizes.max()) if n else 0,
                "crossings": crossed,
            }
        )

    cost_model = config.cost_model or CostModel()
    tier_costs = [
        TierCost(scorer, count, cascade_cost(cost_model, [(scorer, count)]))
        for scorer, count in pairs
    ]
    report = CostReport(
        tiers=tier_costs,
        total_pairs=int(sum(p for _, p in pairs)),
        total_cost=cascade_cost(cost_model, pairs),
    )
    out = ScoreMatrix(values, base.query_keys.copy(), SCALE_NORMALIZED)
    return CascadeResult(
        matrix=out,
        cost=report,
        candidate_sets=all_sets,
        boundary_crossings=crossings,
        boundary_summaries=summaries,
    )


# ---------------------------------------------------------------------------
# dev-side preparation


def prepare_cascade(
    config: CascadeConfig,
    dev_matrices: list[ScoreMatrix],
    dev_queries: list[Query],
    filter_index: FilterIndex,
    alpha_grid: list[float] | None = None,
    regressor_config: RegressorConfig | None = None,
) -> CascadeConfig:
    """Resolve a cascade against dev data so it can run on any other split.

    Greedily per boundary, in tier order: static-quantile cuts become concrete
    static k values from the current dev gold-rank distribution, dynamic
    boundaries get their regressor trained on the current dev matrix, and a
    ``None`` alpha is grid-tuned to maximize filtered dev MRR (ties toward the
    smallest alpha). The dev matrix is then advanced through the boundary with
    the resolved settings before the next boundary is considered.
    """
    from .evaluation import evaluate, gold_ranks

    config.validate()
    if len(dev_matrices) != len(config.tiers):
        raise AlignmentError("need one dev matrix per tier")
    if alpha_grid is None:
        alpha_grid = DEFAULT_ALPHA_GRID
    base_reg_config = regressor_config or RegressorConfig()

    resolved: list[Boundary] = []
    values = dev_matrices[0].values.copy()
    keys = dev_matrices[0].query_keys

    for t, boundary in enumerate(config.boundaries):
        current = ScoreMatrix(values, keys, SCALE_NORMALIZED)
        pruning = boundary.pruning
        if pruning.kind == "static-quantile":
            ranks = gold_ranks(current, dev_queries, filter_index)
            k = select_k_from_quantile(ranks, pruning.q)
            spec = PruningSpec(kind="static", k=min(k, current.n_entities))
        elif pruning.kind == "dynamic":
            spec = _fit_dynamic_spec(
                current, dev_queries, filter_index, pruning, base_reg_config, t
            )
        else:
            spec = PruningSpec(kind=pruning.kind, k=pruning.k, q=pruning.q)
        sets = _resolve_candidates(current, spec, dev_queries, filter_index)

        alpha = boundary.alpha
        if alpha is None:
            best_alpha, best_mrr = None, -1.0
            for a in sorted(alpha_grid):
                trial, _ = _apply_boundary(
                    values.copy(), dev_matrices[t + 1].values, sets, a
                )
                mrr = evaluate(
                    ScoreMatrix(trial, keys, SCALE_NORMALIZED), dev_queries, filter_index
                ).mrr
                if mrr > best_mrr:
                    best_alpha, best_mrr = a, mrr
            alpha = float(best_alpha)

        values, _ = _apply_boundary(values, dev_matrices[t + 1].values, sets, alpha)
        resolved.append(Boundary(pruning=spec, alpha=alpha))

    return CascadeConfig(
        tiers=list(config.tiers), boundaries=resolved, cost_model=config.cost_model
    )


def _fit_dynamic_spec(
    current: ScoreMatrix,
    dev_queries: list[Query],
    filter_index: FilterIndex,
    pruning: PruningSpec,
    base_config: RegressorConfig,
    boundary_index: int,
) -> PruningSpec:
    from .evaluation import gold_ranks

    reg_config = RegressorConfig(
        hidden=base_config.hidden,
        lr=base_config.lr,
        epochs=base_config.epochs,
        seed=base_config.seed + boundary_index,
    )
    ranks = gold_ranks(current, dev_queries, filter_index)
    sorted_rows = sort_rows_descending(current.values)
    if pruning.per_direction:
        directions = current.query_keys[:, 0].astype(np.int64)
        regressor: QuantileRegressor | dict = {}
        for direction in (TAIL, HEAD):
            rows = np.nonzero(directions == direction)[0]
            if rows.size:
                regressor[direction] = train_rank_regressor(
                    sorted_rows[rows], ranks[rows], pruning.q, reg_config
                )
    else:
        regressor = train_rank_regressor(sorted_rows, ranks, pruning.q, reg_config)
    return PruningSpec(
        kind="dynamic",
        q=pruning.q,
        per_direction=pruning.per_direction,
        regressor=regressor,
    )
