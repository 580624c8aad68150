"""Initial spectra and abundances, plus the geometric baselines.

Spectra scenarios: random observed pixels, N-FINDR, VCA, per-class means of
the ground truth, or a user-supplied matrix. Abundance scenarios: constant
``1/M`` or FCLS regression on the initial spectra.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .core import (
    ConvergenceError,
    DegenerateDataError,
    ShapeError,
    ZeroSpectrumError,
    as_observations,
    replicate_to_stacked,
    split_stacked,
)

SPECTRA_MODES = ("random_pixels", "nfindr", "vca", "class_means", "manual")
COEFF_MODES = ("uniform", "fcls")


@dataclass(frozen=True)
class InitSpec:
    spectra_mode: str = "vca"
    coeff_mode: str = "uniform"
    seed: int = 0
    manual_spectra: np.ndarray | None = None

    def __post_init__(self):
        if self.spectra_mode not in SPECTRA_MODES:
            raise ValueError(f"unknown spectra mode {self.spectra_mode!r}")
        if self.coeff_mode not in COEFF_MODES:
            raise ValueError(f"unknown coefficient mode {self.coeff_mode!r}")
        if self.spectra_mode == "manual" and self.manual_spectra is None:
            raise ValueError("manual mode requires an explicit (M, L) matrix")


def _check_M(X, M, minimum=1):
    P = X.shape[0]
    if M < minimum:
        raise ValueError(f"M must be >= {minimum}")
    if M > P:
        raise ValueError(f"cannot select M={M} pixels out of P={P}")


def init_random_pixels(X, M: int, seed: int = 0) -> np.ndarray:
    X = as_observations(X)
    _check_M(X, M)
    rng = np.random.default_rng(seed)
    return X[rng.choice(X.shape[0], size=M, replace=False)].copy()


def _pca_reduce(X, dim):
    Z = X - X.mean(axis=0)
    if not np.any(np.abs(Z) > 0):
        raise DegenerateDataError("all pixels are identical")
    if dim == 0:
        return np.zeros((X.shape[0], 0)), Z
    U, s, Vt = np.linalg.svd(Z, full_matrices=False)
    return Z @ Vt[:dim].T, Z


def _simplex_volumes(Y, vertices, position):
    """|det| of the augmented vertex matrix with ``position`` replaced by every pixel."""
    M = vertices.size
    E = np.ones((Y.shape[0], M, M))
    E[:, 1:, :] = Y[vertices].T[None, :, :]
    E[:, 1:, position] = Y
    return np.abs(np.linalg.det(E))


def nfindr(X, M: int, seed: int = 0, restarts: int = 5, max_sweeps: int = 100):
    """N-FINDR endmember extraction.

    The data are reduced to M-1 principal components; starting from random
    vertex sets, single pixel swaps are applied greedily while they increase
    the simplex volume. The best of ``restarts`` local optima is kept.

    Returns
    -------
    endmembers : (M, L) rows of ``X``
    indices : (M,) selected pixel indices
    """
    X = as_observations(X)
    _check_M(X, M, minimum=2)
    Y, _ = _pca_reduce(X, M - 1)
    P = X.shape[0]
    rng = np.random.default_rng(seed)

    best_vol, best_idx = -1.0, None
    for _ in range(restarts):
        idx = rng.choice(P, size=M, replace=False)
        vol = _simplex_volumes(Y, idx, 0)[idx[0]]
        for _sweep in range(max_sweeps):
            improved = False
            for pos in range(M):
                vols = _simplex_volumes(Y, idx, pos)
                j = int(np.argmax(vols))
                if vols[j] > vol * (1 + 1e-12) and j not in idx:
                    idx[pos] = j
                    vol = vols[j]
                    improved = True
            if not improved:
                break
        if vol > best_vol:
            best_vol, best_idx = vol, idx.copy()

    if not best_vol > 0:
        raise DegenerateDataError("data span fewer than M-1 dimensions; simplex volume is zero")
    return X[best_idx].copy(), best_idx


def vca(X, M: int, seed: int = 0):
    """Vertex component analysis, projection-to-(M-1)-subspace branch.

    Returns
    -------
    endmembers : (M, L) rows of ``X``
    indices : (M,) selected pixel indices
    """
    X = as_observations(X)
    _check_M(X, M, minimum=2)
    x, _ = _pca_reduce(X, M - 1)  # (P, M-1)
    c = np.sqrt(np.max(np.sum(x**2, axis=1)))
    y = np.vstack([x.T, np.full(X.shape[0], c)])  # (M, P)

    rng = np.random.default_rng(seed)
    A = np.zeros((M, M))
    A[-1, 0] = 1.0
    indices = np.zeros(M, dtype=int)
    for i in range(M):
        w = rng.random(M)
        f = w - A @ (np.linalg.pinv(A) @ w)
        nf = np.linalg.norm(f)
        if nf == 0:
            raise DegenerateDataError("VCA projection direction vanished")
        v = (f / nf) @ y
        indices[i] = int(np.argmax(np.abs(v)))
        A[:, i] = y[:, indices[i]]
    if len(set(indices.tolist())) < M:
        raise DegenerateDataError("VCA selected the same pixel twice; data are degenerate")
    return X[indices].copy(), indices


def class_means(R_true_stacked, M: int) -> np.ndarray:
    return split_stacked(R_true_stacked, M).mean(axis=0)


def uniform_coefficients(P: int, M: int) -> np.ndarray:
    if P < 1 or M < 1:
        raise ValueError("P and M must be >= 1")
    return np.full((P, M), 1.0 / M)


def fcls(X, R, delta: float = 1e3, max_iter: int | None = None) -> np.ndarray:
    """Fully constrained least squares abundances.

    Each pixel solves a nonnegative least squares problem on the system
    augmented with a row ``delta * [1, ..., 1] = delta``. The result is
    renormalized so the sum-to-one constraint holds to rounding.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    M, L = R.shape
    if X.shape[1] != L:
        raise ShapeError(f"observations have {X.shape[1]} bands, endmembers {L}")
    if np.any(np.linalg.norm(R, axis=1) == 0):
        raise ZeroSpectrumError("endmember matrix has a zero row")
    if M > L + 1:
        raise ShapeError(f"M={M} exceeds L+1={L + 1}")
    max_iter = 30 * M if max_iter is None else max_iter

    A = np.vstack([R.T, np.full((1, M), delta)])
    C = np.empty((X.shape[0], M))
    b = np.empty(L + 1)
    b[-1] = delta
    for p, x in enumerate(X):
        b[:L] = x
        try:
            C[p], _ = nnls(A, b, maxiter=max_iter)
        except RuntimeError as exc:
            raise ConvergenceError(f"NNLS did not converge for pixel {p}") from exc
    sums = C.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ConvergenceError("FCLS returned an all-zero abundance vector")
    return C / sums


def initialize(X, M: int, spec: InitSpec, R_true_stacked=None):
    """Build ``(R0, C0)`` for the given scenario; R0 is (M, L)."""
    X = as_observations(X)
    mode = spec.spectra_mode
    if mode == "random_pixels":
        R0 = init_random_pixels(X, M, spec.seed)
    elif mode == "nfindr":
        R0, _ = nfindr(X, M, spec.seed)
    elif mode == "vca":
        R0, _ = vca(X, M, spec.seed)
    elif mode == "class_means":
        if R_true_stacked is None:
            raise ValueError("class_means initialization requires ground-truth sources")
        R0 = class_means(R_true_stacked, M)
    else:
        R0 = np.atleast_2d(np.asarray(spec.manual_spectra, dtype=float))
        if R0.shape != (M, X.shape[1]):
            raise ShapeError(f"manual spectra must be {(M, X.shape[1])}, got {R0.shape}")
    if spec.coeff_mode == "uniform":
        C0 = uniform_coefficients(X.shape[0], M)
    else:
        C0 = fcls(X, R0)
    return R0, C0


__all__ = [
    "InitSpec",
    "init_random_pixels",
    "nfindr",
    "vca",
    "class_means",
    "uniform_coefficients",
    "fcls",
    "replicate_to_stacked",
    "initialize",
]
