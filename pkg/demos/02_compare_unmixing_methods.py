"""
Standard NMF, UP-NMF and IP-NMF on one scene
============================================

All three solvers start from the same VCA spectra and uniform abundances.
UP-NMF fits every pixel almost exactly but lets each class drift; the
inertia penalty of IP-NMF pulls the per-pixel spectra of a class together.
"""

import numpy as np

from ipnmf import (
    InitSpec,
    SolverOptions,
    VariabilityModel,
    best_class_permutation,
    ce_report,
    generate_experiment,
    initialize,
    permute_classes,
    preset_pools,
    re_report,
    replicate_to_stacked,
    sam_report,
    solve_ipnmf,
    solve_nmf,
    solve_upnmf,
)
from ipnmf.initializers import fcls, nfindr, vca

X, truth = generate_experiment(preset_pools(), VariabilityModel((0.8, 1.2), 0.03, 4), 100, seed=0)
P, M = truth.abundances.shape
R0, C0 = initialize(X, M, InitSpec("vca", "uniform", seed=0))

runs = {}
res = solve_nmf(X, R0, C0)
runs["NMF"] = (np.tile(res.endmembers, (P, 1)), res.abundances)
res = solve_upnmf(X, replicate_to_stacked(R0, P), C0)
runs["UP-NMF"] = (res.endmembers, res.abundances)
res = solve_ipnmf(X, replicate_to_stacked(R0, P), C0, SolverOptions(mu=30))
runs["IP-NMF mu=30"] = (res.endmembers, res.abundances)
print("IP-NMF stopped after", res.trace.iterations_run, "iterations:", res.trace.stop_reason)

# geometric baselines: one spectrum per class, FCLS abundances
for name, extract in (("N-FINDR+FCLS", nfindr), ("VCA+FCLS", vca)):
    R, _ = extract(X, M, 0)
    runs[name] = (np.tile(R, (P, 1)), fcls(X, R))

print(f"{'method':<14}{'SAM (deg)':>10}{'RE':>12}{'CE':>12}")
for name, (R, C) in runs.items():
    perm = best_class_permutation(truth.sources, R, M)
    R, C = permute_classes(R, C, perm, M)
    sam = sam_report(truth.sources, R, M).mean
    re = re_report(X, C, R).mean
    ce = ce_report(truth.abundances, C).mean
    print(f"{name:<14}{sam:>10.3f}{re:>12.2e}{ce:>12.2e}")
