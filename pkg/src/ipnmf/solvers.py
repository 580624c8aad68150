"""Projected-gradient solvers: standard NMF, UP-NMF and IP-NMF.

All three share one iteration skeleton:

1. gradient step on the spectra, projected onto ``[eps, inf)``;
2. gradient step on each pixel's abundance vector, projected onto the
   floored simplex ``{c >= eps, sum(c) = 1}``;
3. per-pixel sum-to-one normalization of the abundances (a rounding
   clean-up after step 2).

With ``coeff_update="normalize"`` step 2 clamps at ``eps`` instead and step
3 does the real work (plain clamp-and-rescale). That variant is
not a descent method once the sources cannot absorb every per-pixel scale
(standard NMF, IP-NMF with large ``mu``): the renormalization undoes the
abundance step and the cost can creep upward over iterations.

Standard NMF estimates one (M, L) endmember matrix for the whole image.
UP-NMF estimates a stacked (P*M, L) matrix with one source set per pixel
and minimizes ``J_RE = 0.5 * ||X - C~ R~||_F^2``. IP-NMF adds
``mu * J_I`` with ``J_I = sum_m Tr(Cov(R~_Cm))``, the summed inertia of the
per-class slices (population covariance).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    EPSILON_FLOOR,
    DivergenceError,
    ShapeError,
    as_observations,
    mix_forward,
    normalize_sum_to_one,
    project_positive,
    project_simplex,
    split_stacked,
)

STOP_REASONS = ("max_iters", "tol_reached", "step_stalled")


@dataclass(frozen=True)
class SolverOptions:
    mu: float = 0.0
    max_iters: int = 500
    step_R: float = 1.0
    step_C: float = 1.0
    epsilon_floor: float = EPSILON_FLOOR
    tol_rel: float = 1e-6
    patience: int = 10
    armijo: bool = True
    armijo_beta: float = 0.5
    armijo_sigma: float = 0.01
    armijo_max_halvings: int = 20
    # "simplex": project each c_p onto {c >= eps, sum(c) = 1};
    # "normalize": clamp at eps, then divide by the row sum.
    coeff_update: str = "simplex"

    def __post_init__(self):
        if self.coeff_update not in ("normalize", "simplex"):
            raise ValueError(f"unknown coeff_update {self.coeff_update!r}")
        if not self.mu >= 0:
            raise ValueError("mu must be >= 0")
        if self.max_iters < 1 or self.patience < 1:
            raise ValueError("max_iters and patience must be positive")
        for name in ("step_R", "step_C", "epsilon_floor", "tol_rel"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.armijo_beta < 1 and 0 < self.armijo_sigma < 1):
            raise ValueError("armijo_beta and armijo_sigma must lie in (0, 1)")


@dataclass(frozen=True)
class TraceRecord:
    """Costs of one iteration, measured after the abundance step and before
    normalization. ``j_start`` and ``j_after_R`` allow checking that each
    accepted step is a descent step."""

    iteration: int
    J_RE: float
    J_I: float
    J_total: float
    j_start: float
    j_after_R: float
    step_R: float
    step_C: float
    R_accepted: bool
    C_accepted_fraction: float


@dataclass
class SolverTrace:
    records: list = field(default_factory=list)
    stop_reason: str = "max_iters"
    iterations_run: int = 0
    wall_time: float = 0.0

    @property
    def costs(self):
        return [(r.iteration, r.J_RE, r.J_I, r.J_total) for r in self.records]

    def cost_array(self):
        """(n_iterations, 4) array of iteration, J_RE, J_I, J_total."""
        return np.array(self.costs, dtype=float).reshape(-1, 4)


@dataclass
class UnmixResult:
    endmembers: np.ndarray  # (P*M, L) stacked, or (M, L) for standard NMF
    abundances: np.ndarray  # (P, M)
    trace: SolverTrace


# ---------------------------------------------------------------------------
# costs and gradients


def _pixel_residuals(X, C, R3):
    return X - np.einsum("pm,pml->pl", C, R3)


def cost_upnmf(X, C, R_stacked) -> float:
    """``0.5 * ||X - C~ R~||_F^2``."""
    X = np.asarray(X, dtype=float)
    Xhat = mix_forward(C, R_stacked)
    if Xhat.shape != X.shape:
        raise ShapeError(f"reconstruction shape {Xhat.shape} differs from observations {X.shape}")
    return 0.5 * float(np.sum((X - Xhat) ** 2))


def cost_nmf(X, C, R) -> float:
    return 0.5 * float(np.sum((np.asarray(X) - np.asarray(C) @ np.asarray(R)) ** 2))


def inertia_penalty(R_stacked, M: int, P: int | None = None) -> float:
    """Summed class inertia ``sum_m Tr(Cov(R~_Cm))`` (1/P normalization).

    Evaluated through the expansion
    ``(1/P) Tr(R~^T R~) - (1/P^2) sum_m ||sum_p r_m(p)||^2``.
    """
    R3 = split_stacked(R_stacked, M)
    if P is not None and R3.shape[0] != P:
        raise ShapeError(f"expected {P * M} stacked rows, got {R3.shape[0] * M}")
    P = R3.shape[0]
    total = float(np.sum(R3 * R3)) / P
    class_sums = R3.sum(axis=0)  # (M, L)
    value = total - float(np.sum(class_sums * class_sums)) / P**2
    return max(value, 0.0)


def class_spread(R_stacked, M: int) -> float:
    """Summed class inertia from the centred slices; numerically robust twin
    of :func:`inertia_penalty` used for reporting."""
    R3 = split_stacked(R_stacked, M)
    D = R3 - R3.mean(axis=0, keepdims=True)
    return float(np.sum(D * D)) / R3.shape[0]


def inertia_gradient(R_stacked, M: int, P: int | None = None) -> np.ndarray:
    """``(2/P) (Id - U/P) R~`` computed as ``(2/P) (r_m(p) - mean_q r_m(q))``."""
    R3 = split_stacked(R_stacked, M)
    if P is not None and R3.shape[0] != P:
        raise ShapeError(f"expected {P * M} stacked rows, got {R3.shape[0] * M}")
    P = R3.shape[0]
    G = (2.0 / P) * (R3 - R3.mean(axis=0, keepdims=True))
    return G.reshape(-1, R3.shape[-1])


def gradients_upnmf(X, C, R_stacked):
    """Gradients of ``J_RE`` with respect to the stacked sources and to C.

    Returns
    -------
    grad_R : (P*M, L)   row (p, m) is ``-c_pm * e_p``
    grad_C : (P, M)     row p is ``-R(p) e_p``
    where ``e_p = x_p - c_p^T R(p)``.
    """
    X = np.asarray(X, dtype=float)
    C = np.asarray(C, dtype=float)
    R3 = split_stacked(R_stacked, C.shape[1])
    if R3.shape[0] != X.shape[0] or R3.shape[2] != X.shape[1] or C.shape[0] != X.shape[0]:
        raise ShapeError("inconsistent shapes for X, C and stacked sources")
    E = _pixel_residuals(X, C, R3)
    grad_R = -(C[:, :, None] * E[:, None, :]).reshape(-1, X.shape[1])
    grad_C = -np.einsum("pml,pl->pm", R3, E)
    return grad_R, grad_C


def gradients_nmf(X, C, R):
    E = np.asarray(X) - C @ R
    return -C.T @ E, -E @ R.T


# ---------------------------------------------------------------------------
# solver skeleton


class _PixelwiseModel:
    """UP-NMF / IP-NMF cost pieces on the (P, M, L) view of the sources."""

    def __init__(self, X, M, mu):
        self.X = X
        self.M = M
        self.mu = mu

    def residuals(self, R, C):
        return _pixel_residuals(self.X, C, R)

    def j_i(self, R):
        if self.mu == 0:
            return 0.0
        return class_spread(R.reshape(-1, R.shape[-1]), self.M)

    def pixel_costs(self, R, C):
        E = self.residuals(R, C)
        return 0.5 * np.sum(E * E, axis=1)

    def cost_R(self, R, C):
        j_re = 0.5 * float(np.sum(self.residuals(R, C) ** 2))
        return j_re + self.mu * self.j_i(R)

    def grad_R(self, R, C):
        E = self.residuals(R, C)
        G = -C[:, :, None] * E[:, None, :]
        if self.mu != 0:
            P = R.shape[0]
            G = G + self.mu * (2.0 / P) * (R - R.mean(axis=0, keepdims=True))
        return G

    def grad_C(self, R, C):
        return -np.einsum("pml,pl->pm", R, self.residuals(R, C))

    def costs(self, R, C):
        j_re = 0.5 * float(np.sum(self.residuals(R, C) ** 2))
        j_i = self.j_i(R)
        return j_re, j_i, j_re + self.mu * j_i


class _SharedModel:
    """Standard NMF: a single (M, L) endmember matrix for every pixel."""

    mu = 0.0

    def __init__(self, X):
        self.X = X

    def residuals(self, R, C):
        return self.X - C @ R

    def pixel_costs(self, R, C):
        E = self.residuals(R, C)
        return 0.5 * np.sum(E * E, axis=1)

    def cost_R(self, R, C):
        return 0.5 * float(np.sum(self.residuals(R, C) ** 2))

    def grad_R(self, R, C):
        return -C.T @ self.residuals(R, C)

    def grad_C(self, R, C):
        return -self.residuals(R, C) @ R.T

    def costs(self, R, C):
        j_re = self.cost_R(R, C)
        return j_re, 0.0, j_re


def _step_R(model, R, C, j_now, opts):
    """Projected gradient step on the spectra (one global step length)."""
    eps = opts.epsilon_floor
    G = model.grad_R(R, C)
    if not opts.armijo:
        return project_positive(R - opts.step_R * G, eps), opts.step_R, True
    t = opts.step_R
    for _ in range(opts.armijo_max_halvings + 1):
        R_new = project_positive(R - t * G, eps)
        j_new = model.cost_R(R_new, C)
        if j_new - j_now <= opts.armijo_sigma * float(np.sum(G * (R_new - R))):
            return R_new, t, True
        t *= opts.armijo_beta
    return R, 0.0, False


def _step_C(model, R, C, opts, project):
    """Projected gradient step on every abundance vector.

    The reconstruction cost separates over pixels, so each pixel runs its
    own backtracking search; all pixels are processed together.
    """
    eps = opts.epsilon_floor
    G = model.grad_C(R, C)
    P = C.shape[0]
    if not opts.armijo:
        return project(C - opts.step_C * G, eps), np.full(P, opts.step_C), np.ones(P, bool)
    f0 = model.pixel_costs(R, C)
    t = np.full(P, opts.step_C)
    C_out = C.copy()
    accepted = np.zeros(P, dtype=bool)
    pending = np.arange(P)
    for _ in range(opts.armijo_max_halvings + 1):
        C_try = project(C[pending] - t[pending, None] * G[pending], eps)
        C_full = C_out.copy()
        C_full[pending] = C_try
        f_new = model.pixel_costs(R, C_full)[pending]
        decrease = np.sum(G[pending] * (C_try - C[pending]), axis=1)
        ok = f_new - f0[pending] <= opts.armijo_sigma * decrease
        C_out[pending[ok]] = C_try[ok]
        accepted[pending[ok]] = True
        pending = pending[~ok]
        if pending.size == 0:
            break
        t[pending] *= opts.armijo_beta
    t[~accepted] = 0.0
    return C_out, t, accepted


def _run(model, R, C, opts, reshape_out):
    eps = opts.epsilon_floor
    project = project_simplex if opts.coeff_update == "simplex" else project_positive
    trace = SolverTrace()
    start = time.perf_counter()
    R = project_positive(R, eps)
    C = normalize_sum_to_one(project(C, eps))
    previous = None
    calm = 0
    # overflow is caught by the finiteness checks and reported as divergence
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for it in range(1, opts.max_iters + 1):
            j_start = model.cost_R(R, C)
            if not np.isfinite(j_start):
                raise DivergenceError(it)
            R, t_R, ok_R = _step_R(model, R, C, j_start, opts)
            j_after_R = model.cost_R(R, C)
            C, t_C, ok_C = _step_C(model, R, C, opts, project)
            j_re, j_i, j_total = model.costs(R, C)
            if not (np.isfinite(j_total) and np.isfinite(j_after_R)):
                raise DivergenceError(it)
            C = normalize_sum_to_one(C)
            trace.records.append(
                TraceRecord(
                    iteration=it,
                    J_RE=j_re,
                    J_I=j_i,
                    J_total=j_total,
                    j_start=j_start,
                    j_after_R=j_after_R,
                    step_R=float(t_R),
                    step_C=float(np.mean(t_C)),
                    R_accepted=bool(ok_R),
                    C_accepted_fraction=float(np.mean(ok_C)),
                )
            )
            trace.iterations_run = it
            if opts.armijo and not ok_R and not np.any(ok_C):
                trace.stop_reason = "step_stalled"
                break
            if previous is not None:
                rel = abs(j_total - previous) / max(previous, 1e-30)
                calm = calm + 1 if rel < opts.tol_rel else 0
                if calm >= opts.patience:
                    trace.stop_reason = "tol_reached"
                    break
            previous = j_total
        else:
            trace.stop_reason = "max_iters"
    trace.wall_time = time.perf_counter() - start
    return UnmixResult(endmembers=reshape_out(R), abundances=C, trace=trace)


def _check_init(X, R0, C0, stacked):
    X = as_observations(X)
    C0 = np.asarray(C0, dtype=float)
    R0 = np.asarray(R0, dtype=float)
    if C0.ndim != 2 or C0.shape[0] != X.shape[0]:
        raise ShapeError(f"abundances must have {X.shape[0]} rows, got shape {C0.shape}")
    M = C0.shape[1]
    expected = (X.shape[0] * M, X.shape[1]) if stacked else (M, X.shape[1])
    if R0.shape != expected:
        raise ShapeError(f"initial spectra must have shape {expected}, got {R0.shape}")
    return X, R0, C0, M


def solve_nmf(X, R0, C0, opts: SolverOptions = SolverOptions()) -> UnmixResult:
    """Standard sum-to-one NMF by alternating projected gradient.

    ``opts.mu`` is ignored. Returns an (M, L) endmember matrix.
    """
    X, R0, C0, M = _check_init(X, R0, C0, stacked=False)
    return _run(_SharedModel(X), R0.copy(), C0.copy(), opts, lambda R: R)


def solve_ipnmf(X, R0_stacked, C0, opts: SolverOptions = SolverOptions()) -> UnmixResult:
    """Inertia-constrained pixel-by-pixel NMF.

    Parameters
    ----------
    X : (P, L) observations
    R0_stacked : (P*M, L) initial per-pixel sources, usually
        ``replicate_to_stacked(R0, P)``
    C0 : (P, M) initial abundances
    opts : SolverOptions, ``opts.mu`` weights the inertia penalty
    """
    X, R0, C0, M = _check_init(X, R0_stacked, C0, stacked=True)
    P, L = X.shape
    model = _PixelwiseModel(X, M, float(opts.mu))
    return _run(model, R0.reshape(P, M, L).copy(), C0.copy(), opts, lambda R: R.reshape(P * M, L))


def solve_upnmf(X, R0_stacked, C0, opts: SolverOptions = SolverOptions()) -> UnmixResult:
    """Pixel-by-pixel NMF without inertia penalty (``opts.mu`` is ignored)."""
    X, R0, C0, M = _check_init(X, R0_stacked, C0, stacked=True)
    P, L = X.shape
    model = _PixelwiseModel(X, M, 0.0)
    return _run(model, R0.reshape(P, M, L).copy(), C0.copy(), opts, lambda R: R.reshape(P * M, L))
