import numpy as np
import pytest

from ipnmf.core import replicate_to_stacked
from ipnmf.metrics import _angles_deg, re_report
from ipnmf.synth import (
    ClassPool,
    VariabilityModel,
    cosine_basis,
    draw_pixel_sources,
    generate_experiment,
    preset_pools,
    random_simplex_abundances,
    wavelengths,
)

# measured once on the seeded generation below; guards against silent drift
SIGMA_005_MEAN_SAM = 2.287211270416313


def test_abundances_single_class():
    np.testing.assert_array_equal(random_simplex_abundances(5, 1, seed=0), np.ones((5, 1)))


def test_abundances_feasible():
    C = random_simplex_abundances(500, 4, seed=1)
    assert np.all(C >= 0)
    assert np.max(np.abs(C.sum(axis=1) - 1)) < 1e-12


def test_abundances_uniform_mean():
    C = random_simplex_abundances(100_000, 3, seed=2)
    np.testing.assert_allclose(C.mean(axis=0), 1 / 3, atol=0.01)


def test_cosine_basis():
    B = cosine_basis(50, 4)
    np.testing.assert_allclose(np.sqrt(np.mean(B * B, axis=1)), 1.0)
    np.testing.assert_allclose(B[0], 1.0)
    # discrete cosines on the midpoint grid are mutually orthogonal
    G = B @ B.T
    np.testing.assert_allclose(G - np.diag(np.diag(G)), 0.0, atol=1e-10)


def test_variability_off_replicates_pool():
    pools = preset_pools(L=20)
    R = draw_pixel_sources(pools, VariabilityModel((1, 1), 0.0, 3), 7, seed=0)
    base = np.vstack([p.spectra[0] for p in pools])
    np.testing.assert_array_equal(R, replicate_to_stacked(base, 7))


def test_pure_scale_keeps_direction():
    pools = preset_pools(L=30)
    P = 40
    R = draw_pixel_sources(pools, VariabilityModel((0.5, 2.0), 0.0), P, seed=4)
    base = np.tile(np.vstack([p.spectra[0] for p in pools]), (P, 1))
    np.testing.assert_allclose(_angles_deg(R, base), 0.0, atol=1e-6)
    ratio = R.sum(axis=1) / base.sum(axis=1)
    assert np.all((ratio >= 0.5) & (ratio <= 2.0))


def test_smooth_perturbation_constant():
    pools = preset_pools(L=64)
    P = 200
    R = draw_pixel_sources(pools, VariabilityModel((1, 1), 0.05, 4), P, seed=11)
    base = np.tile(np.vstack([p.spectra[0] for p in pools]), (P, 1))
    mean_sam = float(np.mean(_angles_deg(R, base)))
    assert 0 < mean_sam <= 5
    assert mean_sam == pytest.approx(SIGMA_005_MEAN_SAM, rel=1e-9)


def test_bases_drawn_from_pool_members():
    rng = np.random.default_rng(0)
    members = rng.random((3, 12)) + 0.1
    pools = [ClassPool(members, "a")]
    R = draw_pixel_sources(pools, VariabilityModel(), 30, seed=5)
    for r in R:
        assert any(np.array_equal(r, m) for m in members)
    assert len({tuple(r) for r in R}) == 3


def test_generate_experiment_exact_and_deterministic():
    model = VariabilityModel((0.8, 1.2), 0.03, 4)
    X, truth = generate_experiment(preset_pools(L=40), model, 25, seed=9)
    X2, truth2 = generate_experiment(preset_pools(L=40), model, 25, seed=9)
    np.testing.assert_array_equal(X, X2)
    np.testing.assert_array_equal(truth.sources, truth2.sources)
    assert np.all(X >= 0) and truth.M == 3
    assert X.shape == (25, 40) and truth.sources.shape == (75, 40)
    np.testing.assert_array_equal(re_report(X, truth.abundances, truth.sources).per_pixel, 0.0)
    X3, _ = generate_experiment(preset_pools(L=40), model, 25, seed=10)
    assert not np.array_equal(X, X3)


def test_no_variability_is_classic_mixing():
    pools = preset_pools(L=30)
    X, truth = generate_experiment(pools, VariabilityModel(), 12, seed=0)
    R = np.vstack([p.spectra[0] for p in pools])
    np.testing.assert_allclose(X, truth.abundances @ R, rtol=1e-14)


def test_preset_shape():
    pools = preset_pools()
    assert [p.class_label for p in pools] == ["vegetation", "asphalt", "tile"]
    assert all(p.spectra.shape == (1, 214) for p in pools)
    w = wavelengths()
    assert w[0] == pytest.approx(0.4) and w[-1] == pytest.approx(2.5)
    with pytest.raises(ValueError):
        preset_pools("urban")


def test_validation():
    with pytest.raises(ValueError):
        VariabilityModel((0.0, 1.0))
    with pytest.raises(ValueError):
        VariabilityModel((1.2, 1.0))
    with pytest.raises(ValueError):
        VariabilityModel(perturb_sigma=-0.1)
    with pytest.raises(ValueError):
        ClassPool(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        ClassPool(-np.ones((1, 4)))
    with pytest.raises(ValueError):
        draw_pixel_sources([], VariabilityModel(), 3)
    with pytest.raises(ValueError):
        draw_pixel_sources([ClassPool(np.ones((1, 3))), ClassPool(np.ones((1, 4)))], VariabilityModel(), 3)
