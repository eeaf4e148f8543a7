import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percep.distance import MetricConfig
from percep.errors import CorrelationUndefinedError, DatasetError, PercepError
from percep.perception import full_subset
from percep.protocols import (AfcRecord, JndRecord, QaRecord, afc_credit,
                              afc_score, best_threshold_accuracy, fit_logistic,
                              gaussian_blur, jnd_score, lcc, load_manifest,
                              logistic, qa_statistics, qa_test, rmse, srocc,
                              synth_distortions, white_noise)
from percep.stimuli import StimulusGrid, ViewingGeometry, oriented_grating


# --- correlation statistics -----------------------------------------------

def test_srocc_perfect_monotone():
    x = [1.0, 2.5, 3.0, 7.0]
    assert srocc(x, [v ** 2 for v in x]) == pytest.approx(1.0)


def test_srocc_reversed():
    x = [1.0, 2.0, 3.0, 4.0]
    assert srocc(x, x[::-1]) == pytest.approx(-1.0)


def test_srocc_hand_case_point_six():
    # 1 - 6*sum(d^2)/(n(n^2-1)) with d = (-1, 1, -1, 1): 1 - 24/60 = 0.6
    assert srocc([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6)


def test_srocc_handles_ties_with_average_ranks():
    value = srocc([1.0, 1.0, 2.0, 3.0], [1.0, 2.0, 3.0, 4.0])
    assert 0.9 < value < 1.0


def test_srocc_constant_input_is_error():
    with pytest.raises(CorrelationUndefinedError):
        srocc([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


@given(y=st.lists(st.floats(-100, 100), min_size=3, max_size=30),
       seed=st.integers(0, 2**31))
@settings(max_examples=60)
def test_srocc_invariant_under_monotone_transforms(y, seed):
    if max(y) == min(y):
        return
    # integer-spaced x keeps exp/cube strictly monotone in floating point
    x = np.random.default_rng(seed).permutation(len(y)).astype(float)
    base = srocc(x, y)
    assert srocc([math.exp(v / 100) for v in x], y) == pytest.approx(base)
    assert srocc([v ** 3 for v in x], y) == pytest.approx(base)


def test_lcc_affine_is_one():
    x = np.array([0.5, 1.0, 2.0, 4.0])
    assert lcc(x, 2 * x + 1) == pytest.approx(1.0)


def test_rmse_identical_is_zero():
    x = [1.0, 2.0, 3.0]
    assert rmse(x, x) == 0.0


def test_logistic_fit_recovers_generating_curve():
    params = (9.0, 1.0, 0.5, 0.15)
    x = np.linspace(0.0, 1.0, 25)
    y = logistic(x, params)
    fit = fit_logistic(x, y)
    assert fit.converged
    assert rmse(fit.predicted, y) < 1e-3


def test_logistic_fit_handles_negative_direction():
    params = (2.0, 8.0, 0.4, 0.1)  # decreasing curve
    x = np.linspace(0.0, 1.0, 25)
    y = logistic(x, params)
    fit = fit_logistic(x, y)
    assert fit.converged
    assert rmse(fit.predicted, y) < 1e-3


def test_logistic_fit_degenerate_reports_not_converged():
    fit = fit_logistic([1.0, 1.0, 1.0, 1.0], [1.0, 2.0, 3.0, 4.0])
    assert not fit.converged


def test_qa_statistics_fit_failure_falls_back_to_raw():
    d = [1.0, 1.0, 1.0, 2.0]
    h = [1.0, 2.0, 3.0, 4.0]
    stats = qa_statistics(d, h)
    assert set(stats) >= {"srocc", "lcc", "rmse", "raw_lcc", "raw_rmse",
                          "fit_converged"}


# --- jnd -------------------------------------------------------------------

def test_jnd_perfect_separation_scores_100():
    assert best_threshold_accuracy([0.1, 0.2, 0.9, 1.4],
                                   [False, False, True, True]) == 1.0


def test_jnd_identical_distances_fall_back_to_majority():
    acc = best_threshold_accuracy([0.5] * 5, [True, True, True, False, False])
    assert acc == pytest.approx(3 / 5)


def test_jnd_hand_case_threshold_sweep():
    assert best_threshold_accuracy([1.0, 2.0, 3.0, 4.0],
                                   [False, False, True, True]) == 1.0


def test_jnd_single_class_is_error():
    with pytest.raises(DatasetError):
        best_threshold_accuracy([1.0, 2.0], [True, True])


def test_jnd_never_below_majority_bound():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        labels = rng.uniform(size=n) < rng.uniform(0.2, 0.8)
        if labels.all() or not labels.any():
            continue
        distances = rng.normal(size=n)
        k = int(labels.sum())
        majority = max(k, n - k) / n  # exact count ratio, same division
        assert best_threshold_accuracy(distances, labels) >= majority


def test_jnd_record_validates_score():
    JndRecord("a", "b", 1 / 3)
    with pytest.raises(DatasetError):
        JndRecord("a", "b", 0.4)


# --- 2afc ------------------------------------------------------------------

def test_afc_credit_rules():
    assert afc_credit(0.1, 0.9, 0.7) == 0.7    # metric prefers candidate 1
    assert afc_credit(0.9, 0.1, 0.7) == pytest.approx(0.3)
    assert afc_credit(0.5, 0.5, 0.9) == 0.5    # tie
    assert afc_credit(0.2, 0.8, 0.5) == 0.5    # indifferent humans


def test_afc_always_first_policy_equals_mean_p():
    rng = np.random.default_rng(1)
    ps = rng.uniform(size=257)
    credits = [afc_credit(0.0, 1.0, p) for p in ps]
    assert abs(float(np.mean(credits)) - math.fsum(ps) / len(ps)) <= 1e-12


def test_afc_record_validates_fraction():
    with pytest.raises(DatasetError):
        AfcRecord("r", "a", "b", 1.5)


# --- manifests ---------------------------------------------------------------

def test_load_qa_manifest_resolves_relative_paths(tmp_path):
    (tmp_path / "m.csv").write_text("ref,dist,dmos\na.pgm,b.pgm,3.5\n")
    records = load_manifest(tmp_path / "m.csv", "qa")
    assert records == [QaRecord(str(tmp_path / "a.pgm"),
                                str(tmp_path / "b.pgm"), 3.5)]


def test_load_manifest_missing_column(tmp_path):
    (tmp_path / "m.csv").write_text("ref,dmos\na,1\n")
    with pytest.raises(DatasetError, match="dist"):
        load_manifest(tmp_path / "m.csv", "qa")


def test_load_manifest_bad_value_reports_line(tmp_path):
    (tmp_path / "m.csv").write_text("ref,dist,dmos\na,b,zero\n")
    with pytest.raises(DatasetError, match=":2"):
        load_manifest(tmp_path / "m.csv", "qa")


def test_load_manifest_empty_is_error(tmp_path):
    (tmp_path / "m.csv").write_text("ref,dist,dmos\n")
    with pytest.raises(DatasetError, match="empty"):
        load_manifest(tmp_path / "m.csv", "qa")


def test_load_manifest_unknown_kind(tmp_path):
    with pytest.raises(DatasetError, match="kind"):
        load_manifest(tmp_path / "m.csv", "mos")


# --- protocol runs over files --------------------------------------------------

@pytest.fixture()
def tiny_dataset(tmp_path, fixture_model):
    """Four images with increasing distortion of a fixed base."""
    from percep.images import encode_pgm
    from percep.synthdata import layered_texture

    base = layered_texture(3, size=32, mean=0.5, lf_amp=0.05)
    names = ["d0.pgm"]
    encode_pgm(tmp_path / "d0.pgm", base)
    for i, sigma in enumerate((0.6, 1.2, 2.4), start=1):
        encode_pgm(tmp_path / f"d{i}.pgm", gaussian_blur(base, sigma))
        names.append(f"d{i}.pgm")
    return tmp_path, names


def metric_for(model):
    return MetricConfig(model=model, tap="probe",
                        subset=full_subset(16, layer="probe"))


def test_qa_test_orders_distortion_levels(fixture_model, tiny_dataset):
    root, names = tiny_dataset
    rows = "\n".join(f"d0.pgm,{n},{i}" for i, n in enumerate(names[1:], 1))
    (root / "qa.csv").write_text("ref,dist,dmos\n" + rows + "\n")
    records = load_manifest(root / "qa.csv", "qa")
    stats = qa_test(metric_for(fixture_model), records)
    assert stats["srocc"] == pytest.approx(1.0)


def test_qa_test_permutation_invariant(fixture_model, tiny_dataset):
    root, names = tiny_dataset
    rows = [f"d0.pgm,{n},{i}" for i, n in enumerate(names[1:], 1)]
    (root / "qa.csv").write_text("ref,dist,dmos\n" + "\n".join(rows) + "\n")
    (root / "qa_rev.csv").write_text("ref,dist,dmos\n" +
                                     "\n".join(reversed(rows)) + "\n")
    cfg = metric_for(fixture_model)
    a = qa_test(cfg, load_manifest(root / "qa.csv", "qa"))
    b = qa_test(cfg, load_manifest(root / "qa_rev.csv", "qa"))
    assert a == b


def test_jnd_score_over_files(fixture_model, tiny_dataset):
    root, names = tiny_dataset
    records = [
        JndRecord(str(root / "d0.pgm"), str(root / "d0.pgm"), 0.0),
        JndRecord(str(root / "d0.pgm"), str(root / "d1.pgm"), 1 / 3),
        JndRecord(str(root / "d0.pgm"), str(root / "d2.pgm"), 2 / 3),
        JndRecord(str(root / "d0.pgm"), str(root / "d3.pgm"), 1.0),
    ]
    score = jnd_score(metric_for(fixture_model), records)
    assert score == 100.0  # zero distance for "same", increasing for "different"


def test_afc_score_over_files(fixture_model, tiny_dataset):
    root, names = tiny_dataset
    records = [AfcRecord(str(root / "d0.pgm"), str(root / "d1.pgm"),
                         str(root / "d3.pgm"), 1.0)]
    assert afc_score(metric_for(fixture_model), records) == 1.0


def test_threaded_evaluation_matches_serial(fixture_model, tiny_dataset):
    root, names = tiny_dataset
    records = [QaRecord(str(root / "d0.pgm"), str(root / n), i)
               for i, n in enumerate(names[1:], 1)]
    cfg = metric_for(fixture_model)
    assert qa_test(cfg, records, threads=1) == qa_test(cfg, records, threads=4)


# --- synthetic distortions ------------------------------------------------------

def test_blur_near_identity_for_tiny_sigma():
    rng = np.random.default_rng(5)
    img = rng.uniform(0.2, 0.8, (1, 24, 24)).astype(np.float32)
    out = gaussian_blur(img, 0.1)
    assert np.abs(out - img).max() < 1e-2


def test_noise_zero_sigma_is_identity():
    rng = np.random.default_rng(6)
    img = rng.uniform(0, 1, (1, 16, 16)).astype(np.float32)
    out = synth_distortions(img, "white_noise", [0.0])[0]
    assert np.array_equal(out, img)


def test_noise_deterministic_per_seed_and_level():
    img = np.full((1, 16, 16), 0.5, np.float32)
    a = synth_distortions(img, "white_noise", [0.05, 0.1], seed=9)
    b = synth_distortions(img, "white_noise", [0.05, 0.1], seed=9)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    c = synth_distortions(img, "white_noise", [0.05, 0.1], seed=10)
    assert not np.array_equal(a[0], c[0])


def test_blur_halves_amplitude_at_mtf_half_frequency():
    # Gaussian MTF = exp(-2 pi^2 sigma^2 f^2) = 0.5 at f = sqrt(2 ln 2)/(2 pi sigma)
    sigma = 2.0
    f_px = math.sqrt(2 * math.log(2)) / (2 * math.pi * sigma)
    ppd = 32.0
    grid = StimulusGrid(size=128, geometry=ViewingGeometry(ppd))
    img = oriented_grating(0.0, f_px * ppd, grid)
    blurred = gaussian_blur(img, sigma)
    crop = (slice(None), slice(24, -24), slice(24, -24))
    ratio = np.std(blurred[crop] - 0.5) / np.std(img[crop] - 0.5)
    assert ratio == pytest.approx(0.5, rel=0.10)


def test_synth_distortions_validates_levels():
    img = np.zeros((1, 8, 8), np.float32)
    with pytest.raises(PercepError):
        synth_distortions(img, "gaussian_blur", [1.0, 0.5])
    with pytest.raises(PercepError):
        synth_distortions(img, "salt_pepper", [0.1])
    with pytest.raises(PercepError):
        gaussian_blur(img, 0.0)
    with pytest.raises(PercepError):
        white_noise(img, -1.0, np.random.default_rng(0))
