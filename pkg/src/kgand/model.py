"""Bilinear triple scoring with optional literal fusion.

The base scorer is the diagonal bilinear form

    score(h, r, t) = sum_i h_i * r_i * t_i

Entity vectors can be refined with literal features before scoring:

* ``glin``: a linear projection of the concatenation [e; l] back to the
  entity dimension.
* ``ggru``: a gated unit mixing a tanh candidate built from [e; l; n]
  with the raw entity vector, where the gate is
  sigmoid(We e + Wc [e; l] + Wy n + b).

The same fusion is applied to both the head and the tail of a triple.
Entities without literals fuse zero vectors, which reduces to a learned
affine transform of the raw embedding.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import NumericFeatureTable, TextFeatureTable

VARIANTS = ("unimodal", "glin", "ggru")

CHECKPOINT_MAGIC = "kgand-checkpoint/1"


def sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


@dataclass
class ModelParams:
    """Embedding matrices plus the fusion parameters of the active variant."""

    variant: str
    entity_emb: np.ndarray          # (num_entities, h)
    relation_emb: np.ndarray        # (num_relations, h)
    literal_dim: int = 0
    # glin
    combine_w: np.ndarray | None = None      # (h, h + d)
    # ggru
    gate_entity_w: np.ndarray | None = None  # (h, h)
    gate_concat_w: np.ndarray | None = None  # (h, h + d)
    gate_year_w: np.ndarray | None = None    # (h,)
    gate_bias: np.ndarray | None = None      # (h,)
    candidate_w: np.ndarray | None = None    # (h, h + d + 1)
    index_ref: str = ""
    _fusion_cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.entity_emb.shape[1]

    def named_arrays(self) -> dict[str, np.ndarray]:
        """Trainable tensors active for this variant, by name."""
        arrays = {"entity_emb": self.entity_emb, "relation_emb": self.relation_emb}
        if self.variant == "glin":
            arrays["combine_w"] = self.combine_w
        elif self.variant == "ggru":
            arrays.update(
                gate_entity_w=self.gate_entity_w,
                gate_concat_w=self.gate_concat_w,
                gate_year_w=self.gate_year_w,
                gate_bias=self.gate_bias,
                candidate_w=self.candidate_w,
            )
        return arrays

    def copy(self) -> "ModelParams":
        def dup(a):
            return None if a is None else a.copy()

        return ModelParams(
            variant=self.variant,
            entity_emb=self.entity_emb.copy(),
            relation_emb=self.relation_emb.copy(),
            literal_dim=self.literal_dim,
            combine_w=dup(self.combine_w),
            gate_entity_w=dup(self.gate_entity_w),
            gate_concat_w=dup(self.gate_concat_w),
            gate_year_w=dup(self.gate_year_w),
            gate_bias=dup(self.gate_bias),
            candidate_w=dup(self.candidate_w),
            index_ref=self.index_ref,
        )

    def invalidate_cache(self) -> None:
        self._fusion_cache = None

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.named_arrays().values())


def init_params(
    variant: str,
    num_entities: int,
    num_relations: int,
    dim: int,
    literal_dim: int = 0,
    seed: int = 0,
) -> ModelParams:
    """Uniform initialization scaled by 1/sqrt(dim); gate bias starts at 0."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(dim)

    def uniform(*shape):
        return rng.uniform(-scale, scale, size=shape)

    params = ModelParams(
        variant=variant,
        entity_emb=uniform(num_entities, dim),
        relation_emb=uniform(num_relations, dim),
        literal_dim=literal_dim if variant != "unimodal" else 0,
    )
    if variant == "glin":
        params.combine_w = uniform(dim, dim + literal_dim)
    elif variant == "ggru":
        params.gate_entity_w = uniform(dim, dim)
        params.gate_concat_w = uniform(dim, dim + literal_dim)
        params.gate_year_w = uniform(dim)
        params.gate_bias = np.zeros(dim)
        params.candidate_w = uniform(dim, dim + literal_dim + 1)
    return params


def distmult_score(head_vec: np.ndarray, rel_vec: np.ndarray, tail_vec: np.ndarray) -> float:
    """Diagonal bilinear score: sum_i h_i * r_i * t_i."""
    if not (len(head_vec) == len(rel_vec) == len(tail_vec)):
        raise ValueError(
            f"vector lengths differ: {len(head_vec)}, {len(rel_vec)}, {len(tail_vec)}"
        )
    return float(np.sum(np.asarray(head_vec) * np.asarray(rel_vec) * np.asarray(tail_vec)))


def linear_fusion(entity_vec: np.ndarray, literal_vec: np.ndarray, combine_w: np.ndarray) -> np.ndarray:
    """Project the concatenation [e; l] back to the entity dimension."""
    concat = np.concatenate([entity_vec, literal_vec])
    if combine_w.shape[1] != concat.shape[0]:
        raise ValueError(
            f"combine matrix expects width {combine_w.shape[1]}, got {concat.shape[0]}"
        )
    return combine_w @ concat


def gated_fusion(
    entity_vec: np.ndarray,
    literal_vec: np.ndarray,
    year_value: float,
    gate_entity_w: np.ndarray,
    gate_concat_w: np.ndarray,
    gate_year_w: np.ndarray,
    gate_bias: np.ndarray,
    candidate_w: np.ndarray,
) -> np.ndarray:
    """Gated mix of a tanh candidate with the raw entity vector.

    gate = sigmoid(We e + Wc [e; l] + Wy n + b)
    cand = tanh(Wh [e; l; n])
    out  = gate * cand + (1 - gate) * e
    """
    concat = np.concatenate([entity_vec, literal_vec])
    if gate_concat_w.shape[1] != concat.shape[0]:
        raise ValueError(
            f"gate concat matrix expects width {gate_concat_w.shape[1]}, got {concat.shape[0]}"
        )
    full = np.concatenate([concat, [year_value]])
    gate = sigmoid(gate_entity_w @ entity_vec + gate_concat_w @ concat + gate_year_w * year_value + gate_bias)
    candidate = np.tanh(candidate_w @ full)
    return gate * candidate + (1.0 - gate) * entity_vec


def entity_representation(
    model: ModelParams,
    entity: int,
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
) -> np.ndarray:
    """Scoring-time vector for one entity under the active variant."""
    raw = model.entity_emb[entity]
    if model.variant == "unimodal":
        return raw
    literal = text.lookup(entity) if text is not None else np.zeros(model.literal_dim)
    if model.variant == "glin":
        return linear_fusion(raw, literal, model.combine_w)
    year = numeric.lookup(entity) if numeric is not None else 0.0
    return gated_fusion(
        raw,
        literal,
        year,
        model.gate_entity_w,
        model.gate_concat_w,
        model.gate_year_w,
        model.gate_bias,
        model.candidate_w,
    )


def score_triple(
    model: ModelParams,
    triple: tuple[int, int, int],
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
) -> float:
    """Score one (head, relation, tail) index triple; fusion on both ends."""
    head, rel, tail = triple
    num_entities = model.entity_emb.shape[0]
    if not (0 <= head < num_entities and 0 <= tail < num_entities):
        raise IndexError(f"entity index out of range in triple {triple}")
    if not 0 <= rel < model.relation_emb.shape[0]:
        raise IndexError(f"relation index out of range in triple {triple}")
    return distmult_score(
        entity_representation(model, head, text, numeric),
        model.relation_emb[rel],
        entity_representation(model, tail, text, numeric),
    )


def fuse_batch(
    model: ModelParams,
    entity_vecs: np.ndarray,
    literal_vecs: np.ndarray,
    year_values: np.ndarray,
) -> np.ndarray:
    """Vectorized fusion over a (batch, h) block of entity vectors."""
    if model.variant == "unimodal":
        return entity_vecs
    concat = np.concatenate([entity_vecs, literal_vecs], axis=1)
    if model.variant == "glin":
        return concat @ model.combine_w.T
    full = np.concatenate([concat, year_values[:, None]], axis=1)
    gate = sigmoid(
        entity_vecs @ model.gate_entity_w.T
        + concat @ model.gate_concat_w.T
        + year_values[:, None] * model.gate_year_w[None, :]
        + model.gate_bias[None, :]
    )
    candidate = np.tanh(full @ model.candidate_w.T)
    return gate * candidate + (1.0 - gate) * entity_vecs


def score_batch(
    model: ModelParams,
    triples: np.ndarray,
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
) -> np.ndarray:
    """Vectorized scores for an (n, 3) array of index triples."""
    triples = np.asarray(triples)
    reps = representation_matrix(model, text, numeric, cache=False)
    heads = reps[triples[:, 0]]
    rels = model.relation_emb[triples[:, 1]]
    tails = reps[triples[:, 2]]
    return np.sum(heads * rels * tails, axis=1)


def representation_matrix(
    model: ModelParams,
    text: TextFeatureTable | None = None,
    numeric: NumericFeatureTable | None = None,
    cache: bool = True,
) -> np.ndarray:
    """Materialize every entity's scoring-time vector as one matrix.

    Used by ranking evaluation and clustering-time export where the
    per-triple recomputation would dominate.  The cache is invalidated
    by the trainer after every parameter update.
    """
    if cache and model._fusion_cache is not None:
        return model._fusion_cache
    if model.variant == "unimodal":
        reps = model.entity_emb
    else:
        num_entities = model.entity_emb.shape[0]
        literals = (
            text.matrix(num_entities) if text is not None
            else np.zeros((num_entities, model.literal_dim))
        )
        years = numeric.array(num_entities) if numeric is not None else np.zeros(num_entities)
        reps = fuse_batch(model, model.entity_emb, literals, years)
    if cache:
        model._fusion_cache = reps
    return reps


def save_checkpoint(model: ModelParams, path: str | Path) -> None:
    """Write a versioned npz container with all active tensors."""
    meta = {
        "magic": CHECKPOINT_MAGIC,
        "variant": model.variant,
        "dim": model.dim,
        "literal_dim": model.literal_dim,
        "index_ref": model.index_ref,
    }
    arrays = {name: arr for name, arr in model.named_arrays().items()}
    np.savez_compressed(path, meta=json.dumps(meta), **arrays)


def load_checkpoint(path: str | Path) -> ModelParams:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("magic") != CHECKPOINT_MAGIC:
            raise ValueError(f"not a recognized checkpoint file: {path}")
        variant = meta["variant"]
        params = ModelParams(
            variant=variant,
            entity_emb=data["entity_emb"],
            relation_emb=data["relation_emb"],
            literal_dim=int(meta["literal_dim"]),
            index_ref=meta.get("index_ref", ""),
        )
        if variant == "glin":
            params.combine_w = data["combine_w"]
        elif variant == "ggru":
            params.gate_entity_w = data["gate_entity_w"]
            params.gate_concat_w = data["gate_concat_w"]
            params.gate_year_w = data["gate_year_w"]
            params.gate_bias = data["gate_bias"]
            params.candidate_w = data["candidate_w"]
    return params
