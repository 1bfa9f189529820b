"""Deterministic random-number streams derived from a single master seed.

Every stochastic component takes a labelled child stream so that one master
seed reproduces a full run, while independent stages never share state.
"""

from __future__ import annotations

import hashlib

import numpy as np


def label_entropy(label: str) -> int:
    """Stable 64-bit integer derived from a stream label (hash() is salted)."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def child_seed_sequence(master_seed: int, label: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=[int(master_seed) & (2**64 - 1), label_entropy(label)])


def child_rng(master_seed: int, label: str) -> np.random.Generator:
    """Generator for the stream `label` under `master_seed`."""
    return np.random.default_rng(child_seed_sequence(master_seed, label))


def spawn_rngs(master_seed: int, label: str, n: int) -> list[np.random.Generator]:
    """n generators for parallel tasks, independent of execution order."""
    children = child_seed_sequence(master_seed, label).spawn(n)
    return [np.random.default_rng(c) for c in children]
