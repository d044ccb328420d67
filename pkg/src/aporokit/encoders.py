"""Pluggable text encoders producing unit-normalized document vectors.

The default encoder is a deterministic hashed bag-of-words projection: it
needs no model download, is stable across runs and platforms, and keeps
lexically similar texts close in cosine space, which is all the clustering
stage requires at desk scale. A sentence-transformers adapter is provided
for running with a real pretrained encoder; the encoder id travels with
every embedding matrix so caches are never mixed.
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EncoderError(Exception):
    pass


@dataclass
class EmbeddingMatrix:
    doc_ids: list[str]
    vectors: np.ndarray  # [n_docs, d], unit rows
    encoder_id: str

    def __post_init__(self) -> None:
        if len(self.doc_ids) != self.vectors.shape[0]:
            raise EncoderError("doc_ids/vectors row count mismatch")
        if self.vectors.size:
            norms = np.linalg.norm(self.vectors, axis=1)
            if not np.allclose(norms, 1.0, atol=1e-6):
                raise EncoderError("embedding rows must be unit-normalized")


_WORD_RE = re.compile(r"[a-z0-9]+")


def _stable_bucket(token: str, dim: int) -> tuple[int, float]:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(digest, "big")
    sign = 1.0 if value & 1 else -1.0
    return (value >> 1) % dim, sign


class HashedNgramEncoder:
    """Feature-hashed unigram+bigram encoder, fully deterministic."""

    def __init__(self, dim: int = 256):
        self.dim = dim
        self.encoder_id = f"hashed-ngram-v1-d{dim}"

    def encode(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            words = _WORD_RE.findall(text.casefold())
            grams = words + [f"{a}_{b}" for a, b in zip(words, words[1:])]
            for gram in grams:
                idx, sign = _stable_bucket(gram, self.dim)
                out[row, idx] += sign
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        # texts with no recognizable tokens get a fixed unit vector
        empty = norms[:, 0] == 0
        if empty.any():
            out[empty, 0] = 1.0
            norms = np.linalg.norm(out, axis=1, keepdims=True)
        return out / norms


class SentenceTransformerEncoder:
    """Adapter over sentence-transformers; import deferred until first use."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        self.model_name = model_name
        self.encoder_id = f"sentence-transformers/{model_name}"
        self._model = None

    def encode(self, texts: list[str]) -> np.ndarray:
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
            except ImportError as exc:
                raise EncoderError("sentence-transformers is not installed") from exc
            self._model = SentenceTransformer(self.model_name)
        vectors = np.asarray(self._model.encode(list(texts), show_progress_bar=False), dtype=np.float64)
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return vectors / norms


def get_encoder(encoder_id: str):
    """Resolve an encoder by id: 'hashed-ngram-v1[-dN]' or 'sentence-transformers/<model>'."""
    if encoder_id.startswith("hashed-ngram-v1"):
        m = re.search(r"-d(\d+)$", encoder_id)
        return HashedNgramEncoder(dim=int(m.group(1)) if m else 256)
    if encoder_id.startswith("sentence-transformers/"):
        return SentenceTransformerEncoder(encoder_id.split("/", 1)[1])
    raise EncoderError(f"unknown encoder id {encoder_id!r}")


def embed_documents(texts: list[str], doc_ids: list[str], encoder) -> EmbeddingMatrix:
    """One unit vector per text; deterministic for a fixed encoder."""
    if len(texts) != len(doc_ids):
        raise EncoderError("texts and doc_ids must align")
    if not texts:
        return EmbeddingMatrix(doc_ids=[], vectors=np.zeros((0, 0)), encoder_id=encoder.encoder_id)
    try:
        vectors = encoder.encode(texts)
    except EncoderError:
        raise
    except Exception as exc:
        raise EncoderError(f"encoder {encoder.encoder_id} failed on batch of {len(texts)}: {exc}") from exc
    return EmbeddingMatrix(doc_ids=list(doc_ids), vectors=vectors, encoder_id=encoder.encoder_id)


_CACHE_MAGIC = b"APOROEMB1\n"


def save_embedding_cache(emb: EmbeddingMatrix, path: str | Path) -> None:
    """Binary cache: magic, JSON header (encoder id, shape), ids, float32 data."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = emb.vectors.astype(np.float32)
    header = json.dumps(
        {"encoder_id": emb.encoder_id, "n": int(data.shape[0]), "d": int(data.shape[1] if data.size else 0)},
        sort_keys=True,
    ).encode("utf-8")
    ids_blob = json.dumps(emb.doc_ids).encode("utf-8")
    with path.open("wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(struct.pack("<I", len(ids_blob)))
        fh.write(ids_blob)
        fh.write(data.tobytes(order="C"))


def load_embedding_cache(path: str | Path) -> EmbeddingMatrix:
    with Path(path).open("rb") as fh:
        if fh.read(len(_CACHE_MAGIC)) != _CACHE_MAGIC:
            raise EncoderError(f"{path}: not an embedding cache file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen))
        (ilen,) = struct.unpack("<I", fh.read(4))
        doc_ids = json.loads(fh.read(ilen))
        raw = fh.read()
    n, d = header["n"], header["d"]
    vectors = np.frombuffer(raw, dtype=np.float32).reshape(n, d).astype(np.float64)
    if n:
        norms = np.linalg.norm(vectors, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        vectors = vectors / norms  # re-normalize float32 rounding
    return EmbeddingMatrix(doc_ids=doc_ids, vectors=vectors, encoder_id=header["encoder_id"])
