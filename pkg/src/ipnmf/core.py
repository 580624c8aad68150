"""Mixing-model primitives shared by every solver.

Conventions
-----------
X : (P, L) observations, one spectrum per row.
C : (P, M) abundances; row ``p`` holds the nonzero block ``c_p`` of the
    block-diagonal mixing matrix, which is never materialized.
R_stacked : (P*M, L) per-pixel sources, pixel-major: the source of class
    ``m`` in pixel ``p`` sits at row ``p*M + m`` (0-based), i.e.
    ``row_of(p, m, M)`` in 1-based terms.
"""

import numpy as np

EPSILON_FLOOR = 1e-9


class UnmixingError(Exception):
    """Base class for data-level errors raised by this package."""


class ShapeError(UnmixingError, ValueError):
    pass


class DegenerateRowError(UnmixingError, ValueError):
    pass


class ZeroSpectrumError(UnmixingError, ValueError):
    pass


class ZeroVarianceError(UnmixingError, ValueError):
    pass


class DegenerateDataError(UnmixingError, ValueError):
    pass


class ConvergenceError(UnmixingError, RuntimeError):
    pass


class DivergenceError(UnmixingError, RuntimeError):
    """A solver produced a non-finite cost."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite cost at iteration {iteration}")


def row_of(p: int, m: int, M: int) -> int:
    """1-based row of the source of class ``m`` in pixel ``p``.

    >>> row_of(2, 3, 3)
    6
    """
    if M < 1 or not 1 <= m <= M:
        raise IndexError(f"class index {m} outside 1..{M}")
    if p < 1:
        raise IndexError(f"pixel index {p} must be >= 1")
    return (p - 1) * M + m


def as_observations(X) -> np.ndarray:
    """Validate an observation matrix and return it as a float array."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
        raise ShapeError(f"observations must be a non-empty 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise UnmixingError("observations contain non-finite values")
    if np.any(X < 0):
        raise UnmixingError("observations must be nonnegative")
    return X


def split_stacked(R_stacked, M: int) -> np.ndarray:
    """View a stacked (P*M, L) source matrix as a (P, M, L) array."""
    R_stacked = np.asarray(R_stacked, dtype=float)
    if R_stacked.ndim != 2:
        raise ShapeError("stacked sources must be 2-D")
    if M < 1 or R_stacked.shape[0] % M:
        raise ShapeError(f"{R_stacked.shape[0]} stacked rows not divisible by M={M}")
    return R_stacked.reshape(R_stacked.shape[0] // M, M, R_stacked.shape[1])


def class_slice(R_stacked, m: int, M: int) -> np.ndarray:
    """(P, L) estimates of class ``m`` (0-based) across all pixels."""
    return split_stacked(R_stacked, M)[:, m, :]


def mix_forward(C, R_stacked) -> np.ndarray:
    """Per-pixel linear mixing: ``x_p = sum_m c_pm r_m(p)``.

    Parameters
    ----------
    C : (P, M) array
    R_stacked : (P*M, L) array

    Returns
    -------
    (P, L) array
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ShapeError("abundances must be 2-D")
    P, M = C.shape
    R3 = split_stacked(R_stacked, M)
    if R3.shape[0] != P:
        raise ShapeError(f"abundances have {P} pixels but sources have {R3.shape[0]}")
    return np.einsum("pm,pml->pl", C, R3)


def project_positive(A, epsilon_floor: float = EPSILON_FLOOR) -> np.ndarray:
    """Entrywise ``max(a, epsilon_floor)``."""
    if not epsilon_floor > 0:
        raise ValueError("epsilon_floor must be positive")
    return np.maximum(np.asarray(A, dtype=float), epsilon_floor)


def normalize_sum_to_one(C) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.ndim != 2:
        raise ShapeError("abundances must be 2-D")
    sums = C.sum(axis=1, keepdims=True)
    bad = np.flatnonzero(~(sums[:, 0] > 0))
    if bad.size:
        raise DegenerateRowError(f"rows {bad[:5].tolist()} have nonpositive sum")
    return C / sums


def project_simplex(C, epsilon_floor: float = EPSILON_FLOOR) -> np.ndarray:
    """Euclidean projection of each row onto ``{c : c >= eps, sum(c) = 1}``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    M = C.shape[1]
    budget = 1.0 - M * epsilon_floor
    if budget <= 0:
        raise ValueError(f"epsilon_floor={epsilon_floor} too large for M={M}")
    V = C - epsilon_floor
    U = np.sort(V, axis=1)[:, ::-1]
    css = np.cumsum(U, axis=1) - budget
    k = np.arange(1, M + 1)
    rho = np.sum(U - css / k > 0, axis=1)
    theta = css[np.arange(C.shape[0]), rho - 1] / rho
    return np.maximum(V - theta[:, None], 0.0) + epsilon_floor


def replicate_to_stacked(R, P: int) -> np.ndarray:
    """Copy the M rows of ``R`` into every pixel block of a stacked matrix."""
    R = np.asarray(R, dtype=float)
    if R.ndim != 2:
        raise ShapeError("endmembers must be 2-D")
    return np.tile(R, (P, 1))
