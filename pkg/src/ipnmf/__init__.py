"""Hyperspectral unmixing with per-pixel endmember variability.

Standard NMF, UP-NMF (one source set per pixel) and IP-NMF (UP-NMF with a
class-inertia penalty), plus initializers, metrics, a semi-synthetic data
generator and spectral-angle clustering.
"""

__version__ = "0.1.0"

from .core import (
    EPSILON_FLOOR,
    ConvergenceError,
    DegenerateDataError,
    DegenerateRowError,
    DivergenceError,
    ShapeError,
    UnmixingError,
    ZeroSpectrumError,
    ZeroVarianceError,
    class_slice,
    mix_forward,
    normalize_sum_to_one,
    project_positive,
    project_simplex,
    replicate_to_stacked,
    row_of,
    split_stacked,
)
from .initializers import (
    InitSpec,
    class_means,
    fcls,
    init_random_pixels,
    initialize,
    nfindr,
    uniform_coefficients,
    vca,
)
from .metrics import (
    MetricReport,
    PcaModel,
    best_class_permutation,
    ce_report,
    coefficient_error_per_pixel,
    correlation_matrix,
    pca_fit_project,
    permute_classes,
    re_report,
    reconstruction_error_per_pixel,
    sam_per_pixel,
    sam_report,
)
from .postproc import Clustering, cluster_abundance_maps, kmeans_sam
from .solvers import (
    SolverOptions,
    SolverTrace,
    UnmixResult,
    class_spread,
    cost_upnmf,
    gradients_upnmf,
    inertia_gradient,
    inertia_penalty,
    solve_ipnmf,
    solve_nmf,
    solve_upnmf,
)
from .synth import (
    ClassPool,
    GroundTruth,
    VariabilityModel,
    draw_pixel_sources,
    generate_experiment,
    preset_pools,
    random_simplex_abundances,
)
