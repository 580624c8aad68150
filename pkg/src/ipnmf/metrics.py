"""Evaluation criteria and variability-analysis tools.

Per-pixel criteria
------------------
SAM(p) : mean spectral angle (degrees) between the true and estimated
         sources of pixel ``p``, classes paired by index.
RE(p)  : ``||x_p - c_p^T R(p)|| / L``.
CE(p)  : ``||c_p - c_hat_p|| / M``.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import ShapeError, ZeroSpectrumError, ZeroVarianceError, mix_forward, split_stacked


@dataclass(frozen=True)
class MetricReport:
    metric_name: str
    units: str
    per_pixel: np.ndarray
    mean: float

    @classmethod
    def from_values(cls, name, units, values):
        values = np.asarray(values, dtype=float)
        return cls(name, units, values, math.fsum(values) / values.size)


@dataclass(frozen=True)
class PcaModel:
    mean_spectrum: np.ndarray
    axes: np.ndarray  # (K, L), rows orthonormal
    eigenvalues: np.ndarray

    def transform(self, Y):
        return (np.asarray(Y, dtype=float) - self.mean_spectrum) @ self.axes.T

    def inverse_transform(self, scores):
        return np.asarray(scores, dtype=float) @ self.axes + self.mean_spectrum


def _angles_deg(A, B):
    """Row-wise spectral angle in degrees between broadcastable (..., L) arrays."""
    na = np.linalg.norm(A, axis=-1)
    nb = np.linalg.norm(B, axis=-1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ZeroSpectrumError("spectral angle undefined for a zero spectrum")
    # chord form: arccos loses half the digits near zero angle
    chord = np.linalg.norm(A / na[..., None] - B / nb[..., None], axis=-1)
    return np.degrees(2.0 * np.arcsin(np.clip(chord / 2.0, 0.0, 1.0)))


def spectral_angle(a, b) -> float:
    """Angle in degrees between two spectra."""
    return float(_angles_deg(np.asarray(a, dtype=float), np.asarray(b, dtype=float)))


def sam_per_pixel(R_true, R_est) -> float:
    """Mean angle (degrees) between paired rows of two (M, L) source sets."""
    R_true = np.atleast_2d(np.asarray(R_true, dtype=float))
    R_est = np.atleast_2d(np.asarray(R_est, dtype=float))
    if R_true.shape != R_est.shape:
        raise ShapeError(f"shape mismatch {R_true.shape} vs {R_est.shape}")
    return float(np.mean(_angles_deg(R_true, R_est)))


def reconstruction_error_per_pixel(x, c, R) -> float:
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if R.shape != (c.size, x.size):
        raise ShapeError(f"expected R of shape {(c.size, x.size)}, got {R.shape}")
    return float(np.linalg.norm(x - c @ R) / x.size)


def coefficient_error_per_pixel(c, c_hat) -> float:
    c = np.asarray(c, dtype=float)
    c_hat = np.asarray(c_hat, dtype=float)
    if c.shape != c_hat.shape:
        raise ShapeError(f"length mismatch {c.shape} vs {c_hat.shape}")
    return float(np.linalg.norm(c - c_hat) / c.size)


def _as_per_pixel_sources(R, P, M):
    R = np.asarray(R, dtype=float)
    if R.shape[0] == M and P != 1:
        return np.broadcast_to(R, (P,) + R.shape)
    R3 = split_stacked(R, M)
    if R3.shape[0] != P:
        raise ShapeError(f"sources describe {R3.shape[0]} pixels, expected {P}")
    return R3


def sam_matrix(R_true_stacked, R_est, M):
    """(P, M) spectral angles; ``R_est`` may be stacked or a single (M, L) set."""
    T = split_stacked(R_true_stacked, M)
    E = _as_per_pixel_sources(R_est, T.shape[0], M)
    if E.shape[-1] != T.shape[-1]:
        raise ShapeError("band counts differ")
    return _angles_deg(T, E)


def best_class_permutation(R_true_stacked, R_est, M):
    """Permutation ``perm`` minimizing mean SAM when estimated class ``perm[m]``
    is paired with true class ``m``. Exhaustive over M! orderings."""
    if M > 8:
        raise ValueError("permutation matching is limited to M <= 8")
    T = split_stacked(R_true_stacked, M)
    E = _as_per_pixel_sources(R_est, T.shape[0], M)
    # cost[m, k]: mean angle pairing true class m with estimated class k
    cost = np.empty((M, M))
    for k in range(M):
        cost[:, k] = _angles_deg(T, E[:, k : k + 1, :]).mean(axis=0)
    best = min(itertools.permutations(range(M)), key=lambda perm: sum(cost[m, perm[m]] for m in range(M)))
    return np.array(best)


def permute_classes(R, C, perm, M):
    """Reorder the classes of an estimate (R stacked or (M, L), C (P, M))."""
    perm = np.asarray(perm)
    C = np.asarray(C)[:, perm]
    R = np.asarray(R)
    if R.shape[0] == M:
        return R[perm], C
    R3 = split_stacked(R, M)[:, perm, :]
    return R3.reshape(-1, R3.shape[-1]), C


def sam_report(R_true_stacked, R_est, M) -> MetricReport:
    return MetricReport.from_values("SAM", "degrees", sam_matrix(R_true_stacked, R_est, M).mean(axis=1))


def re_report(X, C_est, R_est) -> MetricReport:
    X = np.asarray(X, dtype=float)
    C_est = np.asarray(C_est, dtype=float)
    P, M = C_est.shape
    R_est = np.asarray(R_est, dtype=float)
    if R_est.shape[0] == M and P != 1:
        Xhat = C_est @ R_est
    else:
        Xhat = mix_forward(C_est, R_est)
    if Xhat.shape != X.shape:
        raise ShapeError(f"reconstruction shape {Xhat.shape} differs from observations {X.shape}")
    return MetricReport.from_values("RE", "reflectance", np.linalg.norm(X - Xhat, axis=1) / X.shape[1])


def ce_report(C_true, C_est) -> MetricReport:
    C_true = np.asarray(C_true, dtype=float)
    C_est = np.asarray(C_est, dtype=float)
    if C_true.shape != C_est.shape:
        raise ShapeError(f"shape mismatch {C_true.shape} vs {C_est.shape}")
    return MetricReport.from_values("CE", "fraction", np.linalg.norm(C_true - C_est, axis=1) / C_true.shape[1])


def correlation_matrix(Y) -> np.ndarray:
    """Pearson correlation between every pair of spectra (rows of ``Y``)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    Z = Y - Y.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(Z, axis=1)
    flat = np.flatnonzero(norms <= 1e-14 * np.maximum(np.abs(Y).max(axis=1), 1e-300))
    if flat.size:
        raise ZeroVarianceError(f"spectra {flat[:5].tolist()} are constant")
    Z /= norms[:, None]
    corr = np.clip(Z @ Z.T, -1.0, 1.0)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    return corr


def pca_fit_project(Y, K: int):
    """Fit PCA on the rows of ``Y`` and project them on the first K axes.

    Axes come from the eigendecomposition of the (L, L) sample covariance
    and are signed so that their first nonzero coordinate is positive.

    Returns
    -------
    model : PcaModel
    scores : (N, K) array
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < 2:
        raise ShapeError("PCA needs at least two spectra")
    N, L = Y.shape
    if not 1 <= K <= min(N, L):
        raise ValueError(f"K={K} outside 1..{min(N, L)}")
    mean = Y.mean(axis=0)
    Z = Y - mean
    cov = Z.T @ Z / (N - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:K]
    evals = np.clip(evals[order], 0.0, None)
    axes = evecs[:, order].T.copy()
    for axis in axes:
        nz = np.flatnonzero(np.abs(axis) > 1e-12)
        if nz.size and axis[nz[0]] < 0:
            axis *= -1
    model = PcaModel(mean_spectrum=mean, axes=axes, eigenvalues=evals)
    return model, Z @ axes.T
