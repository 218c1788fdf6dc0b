"""Deterministic per-chunk random generator derivation.

Every randomized step in the pipeline draws from a generator seeded by
(global_seed, doc_id, chunk_index), so output is identical no matter how
work is sharded across workers. SHA-256 keeps the derivation stable
across platforms and Python versions (unlike hash()).
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEED_BYTES = 8  # 64-bit seeds keep the JSON wire format interoperable


def derive_seed(global_seed: int, doc_id: str, chunk_index: int) -> int:
    """Map (global_seed, doc_id, chunk_index) to a stable 64-bit seed."""
    key = f"{global_seed}:{doc_id}:{chunk_index}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:_SEED_BYTES], "big")


def derive_rng(global_seed: int, doc_id: str, chunk_index: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(global_seed, doc_id, chunk_index))
