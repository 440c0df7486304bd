"""Deterministic random-stream splitting keyed by (component, purpose)."""

from __future__ import annotations

import zlib

import numpy as np


def _key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


class SeedBank:
    """Derives independent generators from one master seed.

    Two banks with the same master seed hand out identical streams for the
    same ``(component, purpose)`` key regardless of request order.
    """

    def __init__(self, master_seed: int = 0) -> None:
        self.master_seed = int(master_seed) & 0xFFFFFFFFFFFFFFFF

    def generator(self, component: str, purpose: str) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(_key(component), _key(purpose)))
        return np.random.Generator(np.random.PCG64(seq))


def seed_all(master_seed: int) -> SeedBank:
    return SeedBank(master_seed)
