"""Deterministic random-stream handles.

All randomness in wrckit flows through :class:`RngHandle`, a value object
identified by a 64-bit seed and a 64-bit stream id. The same (seed, stream)
pair reproduces the identical sample sequence on every run and platform
(numpy's PCG64 guarantees stream stability for a fixed numpy major line).

Child streams are derived by hashing the parent stream id together with a
sequence of tags (ints or strings) via BLAKE2b, so independent parts of a
pipeline (per instance, per sample, per search step) get decorrelated,
reproducible streams without any shared mutable state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_stream(stream: int, *tags) -> int:
    """Hash a parent stream id and tags into a new 64-bit stream id."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(stream & _MASK64).to_bytes(8, "little"))
    for tag in tags:
        if isinstance(tag, (int, np.integer)):
            h.update(b"i")
            h.update(int(tag).to_bytes(8, "little", signed=True))
        elif isinstance(tag, str):
            h.update(b"s")
            h.update(tag.encode("utf-8"))
        else:
            raise TypeError(f"unsupported stream tag type: {type(tag)!r}")
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngHandle:
    """Immutable (seed, stream) pair naming one reproducible random stream."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must fit in 64 bits")

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        ss = np.random.SeedSequence(entropy=int(self.seed),
                                    spawn_key=(int(self.stream) & _MASK64,))
        return np.random.default_rng(ss)

    def child(self, *tags) -> "RngHandle":
        """Derive a child handle; tags may be ints or strings."""
        return RngHandle(self.seed, derive_stream(self.stream, *tags))
