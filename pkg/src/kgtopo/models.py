"""Embedding tables and the four shallow scoring functions.

Scores (higher = more plausible), with h, t entity rows and r a relation
row, p in {1, 2}:

    transe    -|| h + r - t ||_p
    rotate    -|| h o e^{i r} - t ||_p     entities as d/2 complex numbers
    distmult  <r, h, t> = sum_k r_k h_k t_k
    triplere  -|| h o r_h + r_m - t o r_t ||_p

Conventions fixed here and used everywhere:

* Tables are float32; all arithmetic upcasts gathered rows to float64, so
  norms and inner products accumulate in 64-bit with a fixed order.
* RotatE entity rows store the d/2 real parts first, then the d/2
  imaginary parts; the relation table holds d/2 phases (radians, read
  modulo 2 pi). The p-norm is taken over the element moduli.
* TripleRE relation rows are the concatenation [r_h | r_m | r_t], width 3d.
* DistMult products associate as (r * h) * t.

``score_tails`` broadcasts a single (h, r) query against many candidate
tails using the same elementwise kernels as the scalar path, so its output
is bit-identical to a Python loop over ``score``.

Checkpoint container format (documented for cross-implementation loading):
an 8-byte little-endian unsigned header length, a UTF-8 JSON header with
the config and table shapes, then the entity table and the relation table
as row-major little-endian float32.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

SCORERS = ("transe", "distmult", "rotate", "triplere")

# Shared default margin; also anchors the default init scale (margin / dim).
DEFAULT_MARGIN = 12.0

_CHECKPOINT_MAGIC = "kgtopo-checkpoint"


@dataclass
class ModelConfig:
    scorer: str = "distmult"
    dim: int = 64
    norm: int = 2
    init_scale: float | None = None  # None -> DEFAULT_MARGIN / dim
    seed: int = 0

    def __post_init__(self):
        if self.scorer not in SCORERS:
            raise ValueError(f"unknown scorer {self.scorer!r}; expected one of {SCORERS}")
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.scorer == "rotate" and self.dim % 2:
            raise ValueError("rotate requires an even dim")
        if self.norm not in (1, 2):
            raise ValueError("norm must be 1 or 2")

    @property
    def relation_width(self) -> int:
        if self.scorer == "rotate":
            return self.dim // 2
        if self.scorer == "triplere":
            return 3 * self.dim
        return self.dim

    def resolved_init_scale(self) -> float:
        return DEFAULT_MARGIN / self.dim if self.init_scale is None else self.init_scale


@dataclass
class EmbeddingModel:
    config: ModelConfig
    entity_table: np.ndarray  # (E, d) float32
    relation_table: np.ndarray  # (R, k) float32

    @property
    def num_entities(self) -> int:
        return self.entity_table.shape[0]

    @property
    def num_relations(self) -> int:
        return self.relation_table.shape[0]

    @property
    def dim(self) -> int:
        return self.config.dim

    def check_finite(self) -> None:
        if not np.isfinite(self.entity_table).all() or not np.isfinite(self.relation_table).all():
            raise FloatingPointError("non-finite entries in embedding tables")

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.config, self.entity_table.copy(), self.relation_table.copy())


def init_model(config: ModelConfig, num_entities: int, num_relations: int) -> EmbeddingModel:
    """Uniform init in [-init_scale, init_scale]; RotatE phases in [-pi, pi]."""
    if num_entities < 1 or num_relations < 1:
        raise ValueError("need at least one entity and one relation")
    if config.scorer == "distmult" and config.norm != 2:
        warnings.warn("distmult has no norm parameter; 'norm' is ignored", stacklevel=2)
    rng = np.random.default_rng(config.seed)
    scale = config.resolved_init_scale()
    ent = rng.uniform(-scale, scale, size=(num_entities, config.dim))
    if config.scorer == "rotate":
        rel = rng.uniform(-np.pi, np.pi, size=(num_relations, config.relation_width))
    else:
        rel = rng.uniform(-scale, scale, size=(num_relations, config.relation_width))
    return EmbeddingModel(config, ent.astype(np.float32), rel.astype(np.float32))


def _check_ids(ids, n: int, kind: str) -> np.ndarray:
    arr = np.asarray(ids)
    if arr.size and (arr.min() < 0 or arr.max() >= n):
        raise IndexError(f"{kind} id out of range [0, {n})")
    return arr


# ---------------------------------------------------------------------------
# Scoring kernels on embedding rows (broadcastable, float64 in, scores out)
# ---------------------------------------------------------------------------


def _pnorm(u: np.ndarray, p: int) -> np.ndarray:
    if p == 1:
        return np.abs(u).sum(axis=-1)
    return np.sqrt((u * u).sum(axis=-1))


def _transe(h, r, t, p):
    return -_pnorm((h + r) - t, p)


def _distmult(h, r, t, p):
    return ((r * h) * t).sum(axis=-1)


def _rotate_parts(h, phases):
    d2 = phases.shape[-1]
    hr, hi = h[..., :d2], h[..., d2:]
    c, s = np.cos(phases), np.sin(phases)
    return hr * c - hi * s, hr * s + hi * c


def _rotate(h, r, t, p):
    d2 = r.shape[-1]
    vr, vi = _rotate_parts(h, r)
    ur = vr - t[..., :d2]
    ui = vi - t[..., d2:]
    mod = np.sqrt(ur * ur + ui * ui)
    if p == 1:
        return -mod.sum(axis=-1)
    return -np.sqrt((mod * mod).sum(axis=-1))


def _triplere_parts(r):
    d = r.shape[-1] // 3
    return r[..., :d], r[..., d : 2 * d], r[..., 2 * d :]


def _triplere(h, r, t, p):
    rh, rm, rt = _triplere_parts(r)
    return -_pnorm((h * rh + rm) - t * rt, p)


_KERNELS = {"transe": _transe, "distmult": _distmult, "rotate": _rotate, "triplere": _triplere}


def score_embeddings(scorer: str, h_emb, r_emb, t_emb, p: int) -> np.ndarray:
    """Score broadcastable float arrays of embedding rows (upcast to float64)."""
    return _KERNELS[scorer](
        np.asarray(h_emb, dtype=np.float64),
        np.asarray(r_emb, dtype=np.float64),
        np.asarray(t_emb, dtype=np.float64),
        p,
    )


def score(model: EmbeddingModel, h: int, r: int, t: int) -> float:
    """Score one (h, r, t) triple."""
    _check_ids([h, t], model.num_entities, "entity")
    _check_ids([r], model.num_relations, "relation")
    return float(
        score_embeddings(
            model.config.scorer,
            model.entity_table[h],
            model.relation_table[r],
            model.entity_table[t],
            model.config.norm,
        )
    )


def score_tails(model: EmbeddingModel, h: int, r: int, candidates) -> np.ndarray:
    """Score (h, r, c) for every candidate tail c; bit-identical to a scalar loop."""
    cand = np.asarray(candidates)
    if cand.size == 0:
        raise ValueError("candidates must be non-empty")
    _check_ids([h], model.num_entities, "entity")
    _check_ids([r], model.num_relations, "relation")
    _check_ids(cand, model.num_entities, "entity")
    return score_embeddings(
        model.config.scorer,
        model.entity_table[h][None, :],
        model.relation_table[r][None, :],
        model.entity_table[cand],
        model.config.norm,
    )


def score_triples(model: EmbeddingModel, triples: np.ndarray) -> np.ndarray:
    """Row-wise scores of an (n, 3) id array."""
    t = np.asarray(triples)
    _check_ids(t[:, [0, 2]], model.num_entities, "entity")
    _check_ids(t[:, 1], model.num_relations, "relation")
    return score_embeddings(
        model.config.scorer,
        model.entity_table[t[:, 0]],
        model.relation_table[t[:, 1]],
        model.entity_table[t[:, 2]],
        model.config.norm,
    )


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------


def save_checkpoint(model: EmbeddingModel, path: str | Path) -> None:
    header = {
        "format": _CHECKPOINT_MAGIC,
        "version": 1,
        "config": asdict(model.config),
        "num_entities": model.num_entities,
        "num_relations": model.num_relations,
        "dim": model.dim,
        "relation_width": model.config.relation_width,
        "scorer": model.config.scorer,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(len(blob).to_bytes(8, "little"))
        fh.write(blob)
        fh.write(np.ascontiguousarray(model.entity_table, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(model.relation_table, dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format") != _CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a recognized checkpoint file")
        config = ModelConfig(**header["config"])
        e, r = header["num_entities"], header["num_relations"]
        d, k = header["dim"], header["relation_width"]
        ent = np.frombuffer(fh.read(4 * e * d), dtype="<f4").reshape(e, d).copy()
        rel = np.frombuffer(fh.read(4 * r * k), dtype="<f4").reshape(r, k).copy()
    return EmbeddingModel(config, ent, rel)
