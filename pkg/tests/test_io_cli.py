import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ipnmf.cli import main
from ipnmf.io import STACKED_ORDER, read_header, read_matrix, read_pool, write_matrix, write_pool
from ipnmf.metrics import ce_report, correlation_matrix, re_report, sam_report
from ipnmf.synth import ClassPool

# mean SAM of standard NMF on noiseless, variability-free data (P=300, seed 0, VCA + FCLS init)
NMF_NOISELESS_SAM = 0.361


def run(*argv):
    return main([str(a) for a in argv])


def data_files(path):
    return sorted(f for f in os.listdir(path) if f != "manifest.json")


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert run("synth", "-P", 30, "--bands", 24, "--seed", 7, "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def unmix_dir(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("unmix")
    assert run("unmix", synth_dir / "X.csv", "--method", "ipnmf", "-M", 3, "--max-iters", 60, "--out", out) == 0
    return out


# ---------------------------------------------------------------------------
# file formats


def test_matrix_round_trip(tmp_path):
    A = np.random.default_rng(0).random((4, 3)) * 10.0 ** np.arange(-5, 7, 4)
    path = tmp_path / "a.csv"
    write_matrix(path, A, [STACKED_ORDER, "P=4"])
    np.testing.assert_array_equal(read_matrix(path), A)
    assert read_header(path)["P"] == "4"
    write_matrix(path, np.array([1.5, 2.5]))
    assert read_matrix(path).shape == (1, 2)


def test_matrix_read_errors(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        read_matrix(path)
    path.write_text("# only a header\n")
    with pytest.raises(ValueError):
        read_matrix(path)


def test_pool_round_trip(tmp_path):
    pool = ClassPool(np.random.default_rng(1).random((3, 6)), "roof")
    path = tmp_path / "roof.csv"
    write_pool(path, pool)
    assert path.read_text().startswith("# class=roof bands=6\n")
    back = read_pool(path)
    assert back.class_label == "roof"
    np.testing.assert_array_equal(back.spectra, pool.spectra)


# ---------------------------------------------------------------------------
# commands


def test_synth_outputs(synth_dir):
    X = read_matrix(synth_dir / "X.csv")
    C = read_matrix(synth_dir / "C_true.csv")
    R = read_matrix(synth_dir / "R_true.csv")
    assert X.shape == (30, 24) and C.shape == (30, 3) and R.shape == (90, 24)
    assert STACKED_ORDER in (synth_dir / "R_true.csv").read_text()
    manifest = json.loads((synth_dir / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["outputs"] == ["C_true.csv", "R_true.csv", "X.csv"]


def test_synth_default_preset_shape(tmp_path):
    assert run("synth", "--preset", "three-class", "-P", 100, "--seed", 7, "--out", tmp_path) == 0
    assert read_matrix(tmp_path / "X.csv").shape == (100, 214)


def test_synth_from_pool_files(tmp_path):
    rng = np.random.default_rng(0)
    pools = []
    for name in ("a", "b"):
        path = tmp_path / f"{name}.csv"
        write_pool(path, ClassPool(rng.random((2, 8)) + 0.1, name))
        pools += ["--pool", path]
    out = tmp_path / "out"
    assert run("synth", *pools, "-P", 5, "--out", out) == 0
    assert read_matrix(out / "R_true.csv").shape == (10, 8)
    assert run("synth", "--pool", tmp_path / "missing.csv", "--out", tmp_path / "x") == 3


def test_synth_rejects_zero_pixels(tmp_path):
    assert run("synth", "-P", 0, "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists()


def test_unmix_outputs(unmix_dir):
    R = read_matrix(unmix_dir / "R_est.csv")
    C = read_matrix(unmix_dir / "C_est.csv")
    trace = read_matrix(unmix_dir / "trace.csv")
    assert R.shape == (90, 24) and C.shape == (30, 3)
    np.testing.assert_allclose(C.sum(axis=1), 1.0, atol=1e-9)
    assert trace.shape[1] == 6 and trace[0, 0] == 1
    manifest = json.loads((unmix_dir / "manifest.json").read_text())
    assert manifest["stop_reason"] in ("max_iters", "tol_reached", "step_stalled")
    assert manifest["options"]["mu"] == 30.0


@pytest.mark.parametrize("method, rows", [("nmf", 3), ("nfindr-fcls", 3), ("vca-fcls", 3), ("upnmf", 90)])
def test_unmix_methods(synth_dir, tmp_path, method, rows):
    assert run("unmix", synth_dir / "X.csv", "--method", method, "-M", 3, "--max-iters", 20, "--out", tmp_path) == 0
    assert read_matrix(tmp_path / "R_est.csv").shape == (rows, 24)


def test_unmix_mu_zero_equals_upnmf(synth_dir, tmp_path):
    common = ("-M", 3, "--max-iters", 40, "--seed", 1)
    run("unmix", synth_dir / "X.csv", "--method", "ipnmf", "--mu", 0, *common, "--out", tmp_path / "a")
    run("unmix", synth_dir / "X.csv", "--method", "upnmf", *common, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "R_est.csv").read_bytes() == (tmp_path / "b" / "R_est.csv").read_bytes()


def test_unmix_manual_and_class_means(synth_dir, tmp_path):
    manual = tmp_path / "manual.csv"
    write_matrix(manual, read_matrix(synth_dir / "R_true.csv")[:3])
    X = synth_dir / "X.csv"
    assert run("unmix", X, "-M", 3, "--init-spectra", "manual", "--manual-spectra", manual, "--max-iters", 5, "--out", tmp_path / "m") == 0
    assert run("unmix", X, "-M", 3, "--init-spectra", "class_means", "--truth-sources", synth_dir / "R_true.csv", "--max-iters", 5, "--out", tmp_path / "c") == 0
    assert run("unmix", X, "-M", 3, "--init-spectra", "manual", "--out", tmp_path / "x") == 2
    assert run("unmix", X, "-M", 31, "--out", tmp_path / "x") == 2


def test_unmix_divergence_exit_code(synth_dir, tmp_path):
    code = run(
        "unmix", synth_dir / "X.csv", "--method", "upnmf", "-M", 3, "--no-armijo",
        "--step-r", 1e150, "--step-c", 1e150, "--out", tmp_path / "d",
    )
    assert code == 4
    assert not (tmp_path / "d").exists()


def test_nmf_noiseless_recovery(tmp_path):
    truth, est, ev = tmp_path / "t", tmp_path / "e", tmp_path / "v"
    assert run("synth", "-P", 300, "--scale-min", 1, "--scale-max", 1, "--sigma", 0, "--seed", 0, "--out", truth) == 0
    assert run("unmix", truth / "X.csv", "--method", "nmf", "-M", 3, "--init-coeffs", "fcls", "--out", est) == 0
    assert run("eval", est, truth, "--match-permutation", "--out", ev) == 0
    sam = json.loads((ev / "summary.json").read_text())["mean"]["SAM_deg"]
    assert sam < 1.0
    assert sam == pytest.approx(NMF_NOISELESS_SAM, abs=1e-3)


def test_eval_truth_against_itself(synth_dir, tmp_path):
    est = tmp_path / "est"
    est.mkdir()
    (est / "R_est.csv").write_bytes((synth_dir / "R_true.csv").read_bytes())
    (est / "C_est.csv").write_bytes((synth_dir / "C_true.csv").read_bytes())
    assert run("eval", est, synth_dir, "--out", tmp_path / "ev") == 0
    summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
    assert summary["mean"]["SAM_deg"] == pytest.approx(0.0, abs=1e-6)
    assert summary["mean"]["RE"] == pytest.approx(0.0, abs=1e-15)
    assert summary["mean"]["CE"] == 0.0


def test_eval_matches_metric_module(synth_dir, unmix_dir, tmp_path):
    assert run("eval", unmix_dir, synth_dir, "--out", tmp_path) == 0
    metrics = read_matrix(tmp_path / "metrics.csv")
    X = read_matrix(synth_dir / "X.csv")
    R_true, C_true = read_matrix(synth_dir / "R_true.csv"), read_matrix(synth_dir / "C_true.csv")
    R_est, C_est = read_matrix(unmix_dir / "R_est.csv"), read_matrix(unmix_dir / "C_est.csv")
    np.testing.assert_array_equal(metrics[:, 0], np.arange(1, 31))
    np.testing.assert_allclose(metrics[:, 1], sam_report(R_true, R_est, 3).per_pixel, rtol=1e-12)
    np.testing.assert_allclose(metrics[:, 2], re_report(X, C_est, R_est).per_pixel, rtol=1e-12)
    np.testing.assert_allclose(metrics[:, 3], ce_report(C_true, C_est).per_pixel, rtol=1e-12)


def test_eval_missing_file_writes_nothing(synth_dir, tmp_path):
    out = tmp_path / "ev"
    assert run("eval", tmp_path / "nowhere", synth_dir, "--out", out) == 3
    assert not out.exists()
    assert not any(p.name.startswith(".ipnmf-stage") for p in tmp_path.iterdir())


def test_analyze(tmp_path):
    rng = np.random.default_rng(0)
    Y = rng.random((6, 10))
    write_matrix(tmp_path / "Y.csv", Y)
    assert run("analyze", tmp_path / "Y.csv", "-K", 3, "--out", tmp_path / "a") == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "a" / "correlation.csv"), correlation_matrix(Y), rtol=1e-15)
    assert read_matrix(tmp_path / "a" / "pca_scores.csv").shape == (6, 3)

    family = np.linspace(0.5, 2, 5)[:, None] * rng.random(8)
    write_matrix(tmp_path / "F.csv", family)
    assert run("analyze", tmp_path / "F.csv", "--out", tmp_path / "f") == 0
    assert np.max(np.abs(read_matrix(tmp_path / "f" / "pca_scores.csv")[:, 1])) < 1e-9

    write_matrix(tmp_path / "same.csv", np.tile(Y[0], (2, 1)))
    assert run("analyze", tmp_path / "same.csv", "--out", tmp_path / "s") == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "s" / "correlation.csv"), 1.0)

    write_matrix(tmp_path / "flat.csv", np.vstack([Y[0], np.full(10, 0.3)]))
    assert run("analyze", tmp_path / "flat.csv", "--out", tmp_path / "z") == 3


def test_cluster(unmix_dir, tmp_path):
    assert run("cluster", unmix_dir / "R_est.csv", unmix_dir / "C_est.csv", "-K", 3, "--seed", 4, "--out", tmp_path) == 0
    labels = read_matrix(tmp_path / "labels.csv")
    maps = read_matrix(tmp_path / "cluster_abundances.csv")
    assert labels.shape == (90, 1) and set(np.unique(labels)) <= {1.0, 2.0, 3.0}
    np.testing.assert_allclose(maps.sum(axis=1), 1.0, atol=1e-9)
    assert run("cluster", unmix_dir / "R_est.csv", unmix_dir / "C_est.csv", "-K", 91, "--out", tmp_path / "k") == 2


@pytest.mark.parametrize("command", ["synth", "unmix", "eval", "analyze", "cluster"])
def test_commands_are_byte_reproducible(command, synth_dir, unmix_dir, tmp_path):
    args = {
        "synth": ("synth", "-P", 12, "--bands", 16, "--seed", 3),
        "unmix": ("unmix", synth_dir / "X.csv", "-M", 3, "--max-iters", 25),
        "eval": ("eval", unmix_dir, synth_dir, "--match-permutation"),
        "analyze": ("analyze", synth_dir / "X.csv", "-K", 3),
        "cluster": ("cluster", unmix_dir / "R_est.csv", unmix_dir / "C_est.csv", "-K", 3),
    }[command]
    assert run(*args, "--out", tmp_path / "a") == 0
    assert run(*args, "--out", tmp_path / "b") == 0
    names = data_files(tmp_path / "a")
    assert names == data_files(tmp_path / "b") and names
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_thread_limit_env(synth_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("UNMIX_THREADS", "1")
    assert run("unmix", synth_dir / "X.csv", "-M", 3, "--max-iters", 10, "--out", tmp_path / "one") == 0
    monkeypatch.setenv("UNMIX_THREADS", "4")
    assert run("unmix", synth_dir / "X.csv", "-M", 3, "--max-iters", 10, "--out", tmp_path / "four") == 0
    assert (tmp_path / "one" / "R_est.csv").read_bytes() == (tmp_path / "four" / "R_est.csv").read_bytes()
    monkeypatch.setenv("UNMIX_THREADS", "zero")
    assert run("unmix", synth_dir / "X.csv", "-M", 3, "--out", tmp_path / "bad") == 2


def test_usage_errors():
    assert run() == 2
    assert run("unmix") == 2
    assert run("fly") == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "ipnmf", "synth", "-P", "4", "--bands", "8", "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "X.csv").exists()
