"""Deterministic seed derivation.

A derived seed is the first 8 bytes (little-endian) of
``blake2b(pack('<Qqq', master, round, client) + purpose.encode(), digest_size=8)``.
Distinct ``(round, client, purpose)`` triples therefore give independent
64-bit seeds, and the same inputs always give the same seed.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, round_: int, client_id: int, purpose: str) -> int:
    payload = struct.pack("<Qqq", master_seed & MASK64, round_, client_id) + purpose.encode()
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def rng_for(master_seed: int, round_: int, client_id: int, purpose: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master_seed, round_, client_id, purpose))
