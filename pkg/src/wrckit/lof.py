"""Local Outlier Factor, built from scratch on numpy.

Conventions (shared by the fast path and the direct-definition oracle so the
two are comparable to float precision):

* exactly `k` neighbors per point, ties broken by lower row index;
* a reference point is never its own neighbor; query points are scored
  against the reference set only;
* reachability distance reach(p, o) = max(kdist(o), d(p, o));
* local reachability density lrd(p) = 1 / mean(reach(p, o) over neighbors),
  floored at 1e-12 when duplicate-heavy data drives the mean to zero
  (reported via the `floored` flag);
* LOF(p) = mean(lrd(o) over neighbors) / lrd(p).

Scores near 1 mean density-homogeneous; materially above 1 means outlier.
The inlier fraction counts scores <= `inlier_threshold` (default 1.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_DENSITY_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class LofResult:
    scores: np.ndarray
    inlier_fraction: float
    threshold: float
    floored: bool


def _as_matrix(data) -> np.ndarray:
    X = np.asarray(getattr(data, "X", data), dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("expected an (n, K) matrix")
    return X


def _pairwise(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # explicit differences (not the a^2+b^2-2ab identity) so distances are
    # bit-identical to the oracle's np.sum((a-b)**2) and tie order matches
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def _fit_reference(R: np.ndarray, k: int):
    n = R.shape[0]
    D = _pairwise(R, R)
    np.fill_diagonal(D, np.inf)
    nn = np.argsort(D, axis=1, kind="stable")[:, :k]
    kdist = D[np.arange(n), nn[:, -1]]
    reach = np.maximum(kdist[nn], D[np.arange(n)[:, None], nn])
    mean_reach = np.mean(reach, axis=1)
    floored = bool(np.any(mean_reach < _DENSITY_FLOOR))
    lrd = 1.0 / np.maximum(mean_reach, _DENSITY_FLOOR)
    return nn, kdist, lrd, floored


def lof_scores(reference, points, k_neighbors: int = 10,
               inlier_threshold: float = 1.5) -> LofResult:
    """Score query points against a reference dataset.

    Parameters
    ----------
    reference : Dataset or (n, K) array
        Must have more than `k_neighbors` rows.
    points : (m, K) array
        Points to score (typically generated counterfactuals).
    """
    R = _as_matrix(reference)
    Q = np.asarray(points, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[1] != R.shape[1]:
        raise ValueError("points must be (m, K) matching the reference width")
    if R.shape[0] <= k_neighbors:
        raise ValueError("reference needs more than k_neighbors rows")

    _, kdist, lrd, floored = _fit_reference(R, k_neighbors)
    Dq = _pairwise(Q, R)
    nn = np.argsort(Dq, axis=1, kind="stable")[:, :k_neighbors]
    reach = np.maximum(kdist[nn], Dq[np.arange(Q.shape[0])[:, None], nn])
    mean_reach = np.mean(reach, axis=1)
    floored = floored or bool(np.any(mean_reach < _DENSITY_FLOOR))
    lrd_q = 1.0 / np.maximum(mean_reach, _DENSITY_FLOOR)
    scores = np.mean(lrd[nn], axis=1) / lrd_q
    return LofResult(
        scores=scores,
        inlier_fraction=float(np.mean(scores <= inlier_threshold)),
        threshold=inlier_threshold,
        floored=floored,
    )


def lof_scores_bruteforce(reference, points, k_neighbors: int = 10,
                          inlier_threshold: float = 1.5) -> LofResult:
    """O(n^2) direct-definition LOF used as the independent oracle.

    Deliberately written with explicit loops over the textbook formulas;
    keep it independent of lof_scores.
    """
    R = _as_matrix(reference)
    Q = np.asarray(points, dtype=np.float64)
    n = R.shape[0]
    if n <= k_neighbors:
        raise ValueError("reference needs more than k_neighbors rows")

    def dist(a, b):
        return float(np.sqrt(np.sum((a - b) ** 2)))

    neighbors = []
    kdist = []
    for i in range(n):
        ranked = sorted((j for j in range(n) if j != i),
                        key=lambda j: (dist(R[i], R[j]), j))
        nn = ranked[:k_neighbors]
        neighbors.append(nn)
        kdist.append(dist(R[i], R[nn[-1]]))

    floored = False
    lrd = []
    for i in range(n):
        total = 0.0
        for o in neighbors[i]:
            total += max(kdist[o], dist(R[i], R[o]))
        mean_reach = total / k_neighbors
        if mean_reach < _DENSITY_FLOOR:
            floored = True
            mean_reach = _DENSITY_FLOOR
        lrd.append(1.0 / mean_reach)

    scores = []
    for q in Q:
        ranked = sorted(range(n), key=lambda j: (dist(q, R[j]), j))
        nn = ranked[:k_neighbors]
        total = 0.0
        for o in nn:
            total += max(kdist[o], dist(q, R[o]))
        mean_reach = total / k_neighbors
        if mean_reach < _DENSITY_FLOOR:
            floored = True
            mean_reach = _DENSITY_FLOOR
        lrd_q = 1.0 / mean_reach
        scores.append(sum(lrd[o] for o in nn) / k_neighbors / lrd_q)

    scores = np.asarray(scores)
    return LofResult(
        scores=scores,
        inlier_fraction=float(np.mean(scores <= inlier_threshold)),
        threshold=inlier_threshold,
        floored=floored,
    )
