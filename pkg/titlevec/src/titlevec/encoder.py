"""Title encoders: a pre-trained transformer and an offline hash encoder.

The transformer path embeds each title with a scientific-document
language model (768-dimensional CLS pooling, deterministic in inference
mode).  The ``hash`` encoder is a self-contained character-trigram
hashing embedder for environments without model access; it needs no
download and is bit-for-bit reproducible.
"""

from __future__ import annotations

import hashlib

import numpy as np

DEFAULT_MODEL = "allenai/specter"
TRANSFORMER_DIM = 768


class EncoderUnavailable(RuntimeError):
    """The requested encoder cannot be loaded in this environment."""


class HashEncoder:
    """Deterministic trigram-hashing encoder (no model required)."""

    def __init__(self, dim: int = TRANSFORMER_DIM, seed: int = 0):
        if dim < 8:
            raise ValueError(f"dim must be >= 8, got {dim}")
        self.dim = dim
        self._key = seed.to_bytes(8, "little", signed=True)

    def encode(self, titles: list[str]) -> np.ndarray:
        out = np.zeros((len(titles), self.dim))
        for row, title in enumerate(titles):
            if not title:
                continue
            padded = f"\x02{title}\x03"
            for pos in range(max(1, len(padded) - 2)):
                trigram = padded[pos : pos + 3].encode("utf-8")
                digest = hashlib.blake2b(trigram, digest_size=8, key=self._key).digest()
                value = int.from_bytes(digest, "little")
                sign = 1.0 if (value >> 32) & 1 else -1.0
                out[row, value % self.dim] += sign
            norm = np.linalg.norm(out[row])
            if norm == 0.0:
                out[row, 0] = 1.0
                norm = 1.0
            out[row] /= norm
        return out


class TransformerEncoder:
    """CLS-pooled sentence vectors from a pre-trained language model."""

    def __init__(self, model_id: str = DEFAULT_MODEL, max_length: int = 512):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderUnavailable(
                f"transformers/torch not installed ({exc}); install the [transformer] "
                "extra, or use '--model hash' for the offline hashing encoder "
                "(the pipeline's built-in fallback embedder covers the same case)"
            ) from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_id)
            self.model = AutoModel.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderUnavailable(
                f"could not load encoder {model_id!r} ({exc}); if the model hub is "
                "unreachable, use '--model hash' for the offline hashing encoder "
                "(the pipeline's built-in fallback embedder covers the same case)"
            ) from exc
        self.model.eval()
        self.max_length = max_length
        self.dim = int(self.model.config.hidden_size)
        self._torch = torch

    def encode(self, titles: list[str]) -> np.ndarray:
        if not titles:
            return np.zeros((0, self.dim))
        tokens = self.tokenizer(
            titles, padding=True, truncation=True,
            max_length=self.max_length, return_tensors="pt",
        )
        with self._torch.no_grad():
            output = self.model(**tokens)
        return output.last_hidden_state[:, 0, :].numpy().astype(float)


def make_encoder(model_id: str, dim: int = TRANSFORMER_DIM, seed: int = 0):
    if model_id == "hash":
        return HashEncoder(dim=dim, seed=seed)
    return TransformerEncoder(model_id)
