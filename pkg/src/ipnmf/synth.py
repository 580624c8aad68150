"""Semi-synthetic mixtures with intra-class variability.

Every pixel receives its own source set: a base spectrum drawn from the
class pool, scaled by a random factor and perturbed by a smooth random
curve. Abundances are uniform on the simplex.
"""

from dataclasses import dataclass

import numpy as np

from .core import mix_forward

DEFAULT_BANDS = 214


@dataclass(frozen=True)
class ClassPool:
    spectra: np.ndarray  # (N_m, L)
    class_label: str = ""

    def __post_init__(self):
        spectra = np.atleast_2d(np.asarray(self.spectra, dtype=float))
        if spectra.shape[0] < 1 or spectra.shape[1] < 1:
            raise ValueError(f"pool {self.class_label!r} is empty")
        if np.any(spectra < 0):
            raise ValueError(f"pool {self.class_label!r} has negative entries")
        object.__setattr__(self, "spectra", spectra)

    @property
    def n_bands(self):
        return self.spectra.shape[1]


@dataclass(frozen=True)
class VariabilityModel:
    scale_range: tuple = (1.0, 1.0)
    perturb_sigma: float = 0.0
    smoothness: int = 4

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < min <= max")
        if self.perturb_sigma < 0:
            raise ValueError("perturb_sigma must be >= 0")
        if self.smoothness < 1:
            raise ValueError("smoothness must be >= 1")


@dataclass(frozen=True)
class GroundTruth:
    abundances: np.ndarray  # (P, M)
    sources: np.ndarray  # (P*M, L) stacked

    @property
    def M(self):
        return self.abundances.shape[1]


def random_simplex_abundances(P: int, M: int, seed=0) -> np.ndarray:
    """Rows drawn uniformly on the (M-1)-simplex."""
    if P < 1 or M < 1:
        raise ValueError("P and M must be >= 1")
    rng = np.random.default_rng(seed)
    C = rng.dirichlet(np.ones(M), size=P)
    return C / C.sum(axis=1, keepdims=True)


def cosine_basis(L: int, n: int) -> np.ndarray:
    """(n, L) low-frequency cosine functions over the band axis, unit RMS."""
    grid = (np.arange(L) + 0.5) / L
    B = np.cos(np.pi * np.arange(n)[:, None] * grid[None, :])
    return B / np.sqrt(np.mean(B * B, axis=1, keepdims=True))


def draw_pixel_sources(pools, model: VariabilityModel, P: int, seed=0) -> np.ndarray:
    """Stacked (P*M, L) sources, one set per pixel.

    For pixel ``p`` and class ``m``::

        r_m(p) = max(g * b + sigma * g * rms(b) * sum_k a_k phi_k, 0)

    with ``b`` drawn uniformly from pool ``m``, ``g`` uniform on the scale
    range, ``a_k ~ N(0, 1/K)`` and ``phi_k`` the first K cosine functions.
    """
    pools = list(pools)
    if not pools:
        raise ValueError("at least one class pool is required")
    L = pools[0].n_bands
    if any(pool.n_bands != L for pool in pools):
        raise ValueError("all pools must share the same band count")
    if P < 1:
        raise ValueError("P must be >= 1")
    M = len(pools)
    rng = np.random.default_rng(seed)
    basis = cosine_basis(L, model.smoothness)
    lo, hi = model.scale_range
    out = np.empty((P, M, L))
    for p in range(P):
        for m, pool in enumerate(pools):
            base = pool.spectra[rng.integers(pool.spectra.shape[0])]
            gamma = rng.uniform(lo, hi)
            coeffs = rng.normal(0.0, 1.0 / np.sqrt(model.smoothness), model.smoothness)
            if model.perturb_sigma > 0:
                rms = np.sqrt(np.mean(base * base))
                curve = model.perturb_sigma * rms * (coeffs @ basis)
                out[p, m] = np.maximum(gamma * (base + curve), 0.0)
            else:
                out[p, m] = gamma * base
    return out.reshape(P * M, L)


def generate_experiment(pools, model: VariabilityModel, P: int, seed=0):
    """Mix per-pixel sources with random simplex abundances.

    Returns
    -------
    X : (P, L) observations
    truth : GroundTruth
    """
    pools = list(pools)
    abundance_seed, source_seed = np.random.SeedSequence(seed).spawn(2)
    C = random_simplex_abundances(P, len(pools), abundance_seed)
    R = draw_pixel_sources(pools, model, P, source_seed)
    return mix_forward(C, R), GroundTruth(abundances=C, sources=R)


def wavelengths(L: int = DEFAULT_BANDS) -> np.ndarray:
    """Band centres in micrometres, evenly spread over 0.4-2.5 um."""
    return np.linspace(0.4, 2.5, L)


def _gauss(w, centre, width):
    return np.exp(-0.5 * ((w - centre) / width) ** 2)


def _vegetation(w):
    red_edge = 1.0 / (1.0 + np.exp(-(w - 0.715) / 0.018))
    r = 0.04 + 0.06 * _gauss(w, 0.55, 0.03) + 0.42 * red_edge
    r -= red_edge * (0.18 * _gauss(w, 1.45, 0.08) + 0.25 * _gauss(w, 1.95, 0.1))
    r -= 0.12 * red_edge * np.clip(w - 1.3, 0, None)
    return np.clip(r, 0.02, None)


def _asphalt(w):
    return 0.06 + 0.05 * (w - 0.4) / 2.1 + 0.01 * _gauss(w, 1.7, 0.3) - 0.01 * _gauss(w, 2.3, 0.05)


def _tile(w):
    r = 0.08 + 0.22 / (1.0 + np.exp(-(w - 0.58) / 0.03))
    r += 0.08 * np.clip(w - 0.8, 0, None) ** 0.5
    r -= 0.06 * _gauss(w, 0.9, 0.08) + 0.04 * _gauss(w, 1.9, 0.08) + 0.03 * _gauss(w, 2.2, 0.04)
    return r


PRESETS = {
    "three-class": (("vegetation", _vegetation), ("asphalt", _asphalt), ("tile", _tile)),
}


def preset_pools(name: str = "three-class", L: int = DEFAULT_BANDS):
    """Analytic reflectance-like spectra, one singleton pool per class."""
    try:
        members = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    w = wavelengths(L)
    return [ClassPool(spectra=fn(w)[None, :], class_label=label) for label, fn in members]
