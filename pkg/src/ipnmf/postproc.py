"""Spectral-angle k-means over the extracted per-pixel spectra."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import ShapeError, ZeroSpectrumError


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray  # (N,) cluster index in 0..K-1
    centers: np.ndarray  # (K, L) unit-norm rows
    inertia: float  # summed angular distance (radians) to the assigned centres
    seeding_inertia: float


def _unit_rows(S):
    S = np.atleast_2d(np.asarray(S, dtype=float))
    norms = np.linalg.norm(S, axis=1)
    if np.any(norms == 0):
        raise ZeroSpectrumError("k-means input has a zero spectrum")
    return S / norms[:, None]


def _angles(U, centers):
    # chord form between unit vectors; arccos of the dot product is inaccurate near 0
    return 2.0 * np.arcsin(np.clip(cdist(U, centers) / 2.0, 0.0, 1.0))


def _seed_centers(U, K, rng):
    """k-means++ seeding with the angular distance."""
    N = U.shape[0]
    chosen = [int(rng.integers(N))]
    d = _angles(U, U[chosen])[:, 0]
    for _ in range(1, K):
        w = d**2
        w[chosen] = 0.0
        total = w.sum()
        if total > 0:
            nxt = int(rng.choice(N, p=w / total))
        else:
            nxt = int(np.flatnonzero(~np.isin(np.arange(N), chosen))[0])
        chosen.append(nxt)
        d = np.minimum(d, _angles(U, U[[nxt]])[:, 0])
    return U[chosen].copy()


def _assign(U, centers):
    """Nearest-centre labels with every cluster kept nonempty."""
    K = centers.shape[0]
    D = _angles(U, centers)
    labels = np.argmin(D, axis=1)
    for k in range(K):
        if np.any(labels == k):
            continue
        # move the point farthest from its centre, taken from a cluster that can spare one
        dist = D[np.arange(len(labels)), labels]
        counts = np.bincount(labels, minlength=K)
        dist = np.where(counts[labels] > 1, dist, -np.inf)
        j = int(np.argmax(dist))
        labels[j] = k
        centers[k] = U[j]
        D = _angles(U, centers)
    inertia = float(np.sum(D[np.arange(len(labels)), labels]))
    return labels, inertia


def _update_centers(U, labels, K, centers):
    new = centers.copy()
    for k in range(K):
        s = U[labels == k].sum(axis=0)
        n = np.linalg.norm(s)
        if n > 0:
            new[k] = s / n
    return new


def _lloyd(U, K, rng, max_iters):
    centers = _seed_centers(U, K, rng)
    labels, inertia = _assign(U, centers)
    seeding = inertia
    best = (inertia, labels.copy(), centers.copy())
    for _ in range(max_iters):
        centers = _update_centers(U, labels, K, centers)
        new_labels, inertia = _assign(U, centers)
        if inertia < best[0]:
            best = (inertia, new_labels.copy(), centers.copy())
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return best, seeding


def kmeans_sam(spectra, K: int, seed=0, restarts: int = 10, max_iters: int = 100) -> Clustering:
    """k-means under the spectral angle ``arccos(<a, b> / (|a| |b|))``.

    Rows are normalized before clustering, so the result is invariant to
    positive rescaling of any spectrum. Centres are normalized means of
    their members. The run with the lowest summed angle among ``restarts``
    k-means++ initializations is returned; ties go to the earlier restart.
    Clusters are numbered in order of first appearance among the rows.
    """
    U = _unit_rows(spectra)
    N = U.shape[0]
    if not 1 <= K <= N:
        raise ValueError(f"K={K} must lie in 1..{N}")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    # inertia differences below this are rounding noise and count as ties
    tie = 1e-9 * N
    winner = None
    for child in np.random.SeedSequence(seed).spawn(restarts):
        (inertia, labels, centers), seeding = _lloyd(U, K, np.random.default_rng(child), max_iters)
        if winner is None or inertia < winner.inertia - tie:
            winner = Clustering(labels=labels, centers=centers, inertia=inertia, seeding_inertia=seeding)
    return _canonical(winner)


def _canonical(clustering):
    """Number clusters by first appearance in the input order."""
    labels = clustering.labels
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    relabel = np.empty_like(order)
    relabel[order] = np.arange(order.size)
    return Clustering(
        labels=relabel[labels],
        centers=clustering.centers[order],
        inertia=clustering.inertia,
        seeding_inertia=clustering.seeding_inertia,
    )


def cluster_abundance_maps(labels, C, K: int) -> np.ndarray:
    """Sum each pixel's abundances over the classes that share a cluster.

    ``labels`` indexes the stacked rows, pixel-major.
    """
    C = np.asarray(C, dtype=float)
    labels = np.asarray(labels)
    P, M = C.shape
    if labels.shape != (P * M,):
        raise ShapeError(f"expected {P * M} labels, got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ShapeError(f"labels must lie in 0..{K - 1}")
    out = np.zeros((P, K))
    np.add.at(out, (np.repeat(np.arange(P), M), labels), C.ravel())
    return out
