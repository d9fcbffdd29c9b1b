"""Bundled synthetic tabular datasets for desk-scale experiments.

Three 2-feature binary problems of increasing boundary complexity, generated
deterministically from a seed. Features come out roughly in the unit square
but are meant to go through evalharness.normalize like any ingested data.
"""

from __future__ import annotations

import numpy as np

from .rng import RngHandle

SYNTHETIC_NAMES = ("two-blobs", "two-moons", "two-rings")


def synthetic_dataset(name: str, n: int = 600, seed: int = 0):
    """Build one of the bundled datasets; returns an evalharness.Dataset."""
    from .evalharness import Dataset

    if name not in SYNTHETIC_NAMES:
        raise ValueError(f"unknown synthetic dataset {name!r}; "
                         f"choose from {SYNTHETIC_NAMES}")
    gen = RngHandle(seed).child("synthetic", name).generator()
    half = n // 2
    rest = n - half
    if name == "two-blobs":
        a = gen.normal([0.32, 0.36], 0.10, size=(half, 2))
        b = gen.normal([0.68, 0.64], 0.10, size=(rest, 2))
    elif name == "two-moons":
        t1 = np.pi * gen.random(half)
        t2 = np.pi * gen.random(rest)
        a = np.column_stack([np.cos(t1), np.sin(t1)])
        b = np.column_stack([1.0 - np.cos(t2), 0.5 - np.sin(t2)])
        a += gen.normal(0.0, 0.08, size=a.shape)
        b += gen.normal(0.0, 0.08, size=b.shape)
        a = np.column_stack([(a[:, 0] + 1.2) / 3.4, (a[:, 1] + 0.8) / 2.6])
        b = np.column_stack([(b[:, 0] + 1.2) / 3.4, (b[:, 1] + 0.8) / 2.6])
    else:  # two-rings
        r1 = 0.16 * np.sqrt(gen.random(half))
        r2 = gen.uniform(0.27, 0.42, size=rest)
        t1 = 2.0 * np.pi * gen.random(half)
        t2 = 2.0 * np.pi * gen.random(rest)
        a = 0.5 + np.column_stack([r1 * np.cos(t1), r1 * np.sin(t1)])
        b = 0.5 + np.column_stack([r2 * np.cos(t2), r2 * np.sin(t2)])
    X = np.vstack([a, b])
    y = np.concatenate([np.full(half, 1, dtype=np.int64),
                        np.full(rest, -1, dtype=np.int64)])
    order = gen.permutation(n)
    return Dataset(name=name, X=np.clip(X[order], 0.0, 1.0), y=y[order],
                   feature_names=("f0", "f1"))
