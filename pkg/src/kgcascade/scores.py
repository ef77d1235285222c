"""Dense query-answer score matrices: the interchange unit between scorer tiers.

A :class:`ScoreMatrix` holds one float32 row per query over all candidate
entities, plus the key block identifying each row. Matrices are the output of
every scorer (trained embedding models, synthetic stand-ins, or externally
computed files ingested through :func:`load_matrix`) and the input of
ensembling, cascading, evaluation, and analysis.

Binary file layout (little-endian throughout):

========  ========================================================
bytes     content
========  ========================================================
4         magic ``CSCM``
4         format version, u32 (currently 1)
8         row count N, u64
8         entity count, u64
1         scale tag: 0 = raw, 1 = normalized to [0, 1]
N*E*4     row-major float32 score values
N*13      query keys: direction byte (0 tail, 1 head), then
          anchor, relation, gold ids as u32
========  ========================================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .datasets import KnowledgeGraph, Query
from .errors import AlignmentError, FormatError

MAGIC = b"CSCM"
FORMAT_VERSION = 1

SCALE_RAW = "raw"
SCALE_NORMALIZED = "normalized"
_SCALE_BYTES = {SCALE_RAW: 0, SCALE_NORMALIZED: 1}
_SCALE_NAMES = {v: k for k, v in _SCALE_BYTES.items()}

_KEY_DTYPE = np.dtype([("d", "u1"), ("a", "<u4"), ("r", "<u4"), ("g", "<u4")])

# Latent-utility seed shared by every synthetic scorer, so that scorers built
# over the same query set agree on which candidates look plausible and only
# their noise components differ.
_LATENT_SEED = 0x5CAC5EED


def keys_from_queries(queries: list[Query]) -> np.ndarray:
    """(N, 4) uint32 key array with columns direction, anchor, relation, gold."""
    keys = np.empty((len(queries), 4), dtype=np.uint32)
    for i, q in enumerate(queries):
        keys[i] = (q.direction, q.anchor, q.relation, q.gold)
    return keys


def queries_from_keys(keys: np.ndarray, source_split: str = "unknown") -> list[Query]:
    """Rebuild Query objects from a key block (the split tag is not stored)."""
    return [
        Query(int(d), int(a), int(r), int(g), source_split)
        for d, a, r, g in keys.astype(np.int64)
    ]


@dataclass
class ScoreMatrix:
    """N_queries x n_entities float32 score matrix with per-row query keys."""

    values: np.ndarray
    query_keys: np.ndarray
    scale: str = SCALE_RAW

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        self.query_keys = np.ascontiguousarray(self.query_keys, dtype=np.uint32)
        if self.values.ndim != 2:
            raise ValueError("score values must be a 2-D array")
        if self.query_keys.shape != (self.values.shape[0], 4):
            raise ValueError(
                f"query key block of shape {self.query_keys.shape} does not match "
                f"{self.values.shape[0]} score rows"
            )
        if self.scale not in _SCALE_BYTES:
            raise ValueError(f"unknown scale tag {self.scale!r}")
        if not np.isfinite(self.values).all():
            raise ValueError("score matrix contains non-finite values")

    @property
    def n_queries(self) -> int:
        return self.values.shape[0]

    @property
    def n_entities(self) -> int:
        return self.values.shape[1]

    def take_rows(self, indices: np.ndarray) -> "ScoreMatrix":
        """Row-subset view copy (same scale tag, keys subset alongside)."""
        idx = np.asarray(indices)
        return ScoreMatrix(self.values[idx].copy(), self.query_keys[idx].copy(), self.scale)


def save_matrix(matrix: ScoreMatrix, path: str) -> None:
    """Write the binary score-matrix format; rejects non-finite values."""
    if not np.isfinite(matrix.values).all():
        raise FormatError("refusing to save a score matrix with non-finite values")
    n, e = matrix.values.shape
    header = MAGIC + struct.pack(
        "<IQQB", FORMAT_VERSION, n, e, _SCALE_BYTES[matrix.scale]
    )
    keys = np.empty(n, dtype=_KEY_DTYPE)
    keys["d"] = matrix.query_keys[:, 0].astype(np.uint8)
    keys["a"] = matrix.query_keys[:, 1]
    keys["r"] = matrix.query_keys[:, 2]
    keys["g"] = matrix.query_keys[:, 3]
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(matrix.values.astype("<f4", copy=False).tobytes())
        fh.write(keys.tobytes())


def load_matrix(path: str, expected_queries: list[Query] | None = None) -> ScoreMatrix:
    """Read a score matrix; optionally validate its keys against a query list."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 25 or data[:4] != MAGIC:
        raise FormatError(f"{path}: not a score-matrix file (bad magic)")
    version, n, e, scale_byte = struct.unpack_from("<IQQB", data, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if scale_byte not in _SCALE_NAMES:
        raise FormatError(f"{path}: unknown scale tag byte {scale_byte}")
    expected_len = 25 + n * e * 4 + n * _KEY_DTYPE.itemsize
    if len(data) != expected_len:
        raise FormatError(
            f"{path}: expected {expected_len} bytes for a {n}x{e} matrix, got {len(data)}"
        )
    values = (
        np.frombuffer(data, dtype="<f4", count=n * e, offset=25)
        .reshape(n, e)
        .astype(np.float32)
    )
    raw_keys = np.frombuffer(data, dtype=_KEY_DTYPE, count=n, offset=25 + n * e * 4)
    keys = np.empty((n, 4), dtype=np.uint32)
    keys[:, 0] = raw_keys["d"]
    keys[:, 1] = raw_keys["a"]
    keys[:, 2] = raw_keys["r"]
    keys[:, 3] = raw_keys["g"]
    matrix = ScoreMatrix(values, keys, _SCALE_NAMES[scale_byte])
    if expected_queries is not None:
        expected = keys_from_queries(expected_queries)
        if expected.shape != keys.shape or not np.array_equal(expected, keys):
            raise AlignmentError(f"{path}: stored query keys do not match the given query list")
    return matrix


def normalize_per_query(matrix: ScoreMatrix) -> ScoreMatrix:
    """Min-max scale each row to [0, 1]; constant rows map to all 0.5.

    Rankings within non-constant rows are preserved (the map is strictly
    increasing), and re-normalizing a normalized matrix is a no-op on
    non-constant rows.
    """
    v = matrix.values.astype(np.float64)
    lo = v.min(axis=1, keepdims=True)
    hi = v.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span == 0.0
    span[flat] = 1.0
    out = (v - lo) / span
    out[flat.ravel(), :] = 0.5
    return ScoreMatrix(out.astype(np.float32), matrix.query_keys.copy(), SCALE_NORMALIZED)


def synthesize_scorer(
    kg: KnowledgeGraph,
    queries: list[Query],
    rank_fidelity: float,
    seed: int,
) -> ScoreMatrix:
    """Simulated higher-tier scorer with controllable agreement with the truth.

    Scores are ``fidelity * latent + (1 - fidelity) * noise`` where the latent
    utility gives every gold answer the strictly highest value and is shared by
    all synthetic scorers over the same query set, while the noise is drawn
    from ``seed``. The latent carries a per-query difficulty factor (how close
    the strongest distractors come to the gold answer), so two high-fidelity
    scorers agree on which queries are hard and their gold ranks correlate;
    the correlation decays as the fidelities diverge. Fidelity 1 ranks gold
    first in every row; fidelity 0 is pure noise.
    """
    if not 0.0 <= rank_fidelity <= 1.0:
        raise ValueError(f"rank_fidelity must be in [0, 1], got {rank_fidelity}")
    n, e = len(queries), kg.n_entities
    lat_rng = np.random.default_rng(_LATENT_SEED)
    latent = lat_rng.random((n, e)) * 0.999
    difficulty = lat_rng.uniform(0.5, 1.0, size=(n, 1))
    latent *= difficulty
    golds = np.fromiter((q.gold for q in queries), dtype=np.int64, count=n)
    latent[np.arange(n), golds] = 1.0
    noise = np.random.default_rng(seed).random((n, e))
    values = rank_fidelity * latent + (1.0 - rank_fidelity) * noise
    return ScoreMatrix(values.astype(np.float32), keys_from_queries(queries), SCALE_RAW)


@dataclass
class CostModel:
    """Abstract per-scorer inference costs, in arbitrary units.

    ``costs`` maps scorer id to (cost per query-candidate pair, fixed setup
    cost). Scorers absent from the map default to unit pair cost and zero
    setup, so pair counts double as costs out of the box.
    """

    costs: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for scorer, (per_pair, setup) in self.costs.items():
            if per_pair < 0 or setup < 0:
                raise ValueError(f"negative cost for scorer {scorer!r}")

    def for_scorer(self, scorer: str) -> tuple[float, float]:
        return self.costs.get(scorer, (1.0, 0.0))


def cascade_cost(cost_model: CostModel, tiers: list[tuple[str, int]]) -> float:
    """Total modeled cost of a cascade run given (scorer id, pairs scored) per tier."""
    total = 0.0
    for scorer, pairs in tiers:
        if pairs < 0:
            raise ValueError(f"negative pair count for scorer {scorer!r}")
        per_pair, setup = cost_model.for_scorer(scorer)
        total += setup + per_pair * pairs
    return total
