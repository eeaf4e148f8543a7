"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`.
"""
import math
import time

import numpy as np
import pytest

from conftest import conv_oracle
from percep import model_io, perception, protocols, stimuli
from percep.cli import main
from percep.distance import MetricConfig
from percep.inference import conv2d
from percep.perception import (MANNOS_SAKRISON, mu1, mu2, perceptual_efficacy,
                               select_subset)
from percep.protocols import afc_credit, best_threshold_accuracy, srocc
from percep.synthdata import build_blur_qa_dataset


def report(name, ok, detail=""):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    assert ok, f"{name}: {detail}"


def test_convolution_oracle_50_random_cases():
    rng = np.random.default_rng(2024)
    start = time.monotonic()
    worst = 0.0
    for case in range(50):
        c = int(rng.integers(1, 4))
        o = int(rng.integers(1, 5))
        kh, kw = (int(v) for v in rng.integers(1, 6, size=2))
        stride = int(rng.integers(1, 4))
        padding = int(rng.integers(0, 3))
        h = int(rng.integers(kh, kh + 10))
        w = int(rng.integers(kw, kw + 10))
        x = rng.normal(0, 1, (c, h, w)).astype(np.float32)
        weight = rng.normal(0, 1, (o, c, kh, kw)).astype(np.float32)
        bias = rng.normal(0, 1, o).astype(np.float32)
        got = conv2d(x, weight, bias, stride, padding)
        ref = conv_oracle(x, weight, bias, stride, padding)
        # relative to the reference tensor scale: elementwise ratios are
        # unbounded for any f32 engine wherever the true value cancels to ~0
        rel = float(np.abs(got - ref).max() / np.abs(ref).max())
        worst = max(worst, rel)
    elapsed = time.monotonic() - start
    report("convolution oracle (50 cases, <=1e-4 rel, <30 s)",
           worst <= 1e-4 and elapsed < 30.0,
           f"max rel err {worst:.2e}, {elapsed:.1f} s")


def test_mu1_mu2_pe_unit_suite():
    freqs = np.arange(0.5, 16.01, 0.25)
    constant_ok = (mu1(np.full(freqs.size, 2.0), MANNOS_SAKRISON, freqs) == 0.0
                   and mu2(np.full(36, 2.0)) == 0.0)
    one_hot = np.zeros(36)
    one_hot[7] = 1.0
    one_hot_ok = mu2(one_hot) == 35.0
    pe_hand = perceptual_efficacy([1.0, 3.0], [2.0, 2.0])
    hand_ok = pe_hand.tolist() == [0.125, 0.375]
    rng = np.random.default_rng(1)
    m1 = rng.uniform(0.1, 1.0, 24)
    m2 = rng.uniform(0.1, 1.0, 24)
    drift = np.abs(perceptual_efficacy(m1, m2) -
                   perceptual_efficacy(311.0 * m1, m2)).max()
    report("mu1/mu2/PE unit suite",
           constant_ok and one_hot_ok and hand_ok and drift <= 1e-12,
           f"one-hot mu2 exact, PE hand case exact, scaling drift {drift:.1e}")


def test_stimulus_suite():
    grid = stimuli.StimulusGrid(size=129)
    peaks_ok = True
    for f in (2.0, 5.0, 8.0, 13.0):
        img = stimuli.radial_grating(f, grid)[0]
        half = img[64, 64:] - img[64, 64:].mean()
        peak_bin = int(np.argmax(np.abs(np.fft.rfft(half))[1:])) + 1
        peaks_ok &= abs(peak_bin - (f / 32.0) * half.size) <= 1.0
    sym_ok = all(
        np.array_equal(stimuli.oriented_grating(t, 6.0, grid),
                       stimuli.oriented_grating(t + 180.0, 6.0, grid))
        for t in (0.0, 22.5, 90.0, 137.5)
    )
    g64 = stimuli.StimulusGrid(size=64)
    lum_ok = all(
        abs(float(stimuli.oriented_grating(t, 4.0, g64).mean()) - 0.5) <= 0.01
        for t in (0.0, 45.0, 90.0)
    )
    report("stimulus suite (spectral peak <=1 bin, theta+180 exact, "
           "mean 0.5 +/- 0.01)", peaks_ok and sym_ok and lum_ok)


def test_statistics_suite():
    x = [1.0, 2.0, 3.0, 4.0]
    cases_ok = (srocc(x, [2.0, 4.0, 6.0, 8.0]) == pytest.approx(1.0)
                and srocc(x, x[::-1]) == pytest.approx(-1.0)
                and srocc(x, [2.0, 1.0, 4.0, 3.0]) == pytest.approx(0.6))
    rng = np.random.default_rng(3)
    xs = rng.permutation(20).astype(float)
    ys = rng.normal(size=20)
    base = srocc(xs, ys)
    monotone_ok = (srocc(np.exp(xs / 10), ys) == pytest.approx(base)
                   and srocc(xs ** 3, ys) == pytest.approx(base))
    jnd_ok = True
    for _ in range(100):
        n = int(rng.integers(2, 50))
        labels = rng.uniform(size=n) < rng.uniform(0.2, 0.8)
        if labels.all() or not labels.any():
            continue
        k = int(labels.sum())
        jnd_ok &= (best_threshold_accuracy(rng.normal(size=n), labels)
                   >= max(k, n - k) / n)
    ps = rng.uniform(size=513)
    always_first = float(np.mean([afc_credit(0.0, 1.0, p) for p in ps]))
    afc_err = abs(always_first - math.fsum(ps) / ps.size)
    report("statistics suite (SROCC cases, monotone invariance, JND bound, "
           "2AFC policy)", cases_ok and monotone_ok and jnd_ok
           and afc_err <= 1e-12, f"2afc policy error {afc_err:.1e}")


def test_fixture_end_to_end(tmp_path):
    start = time.monotonic()
    manifest, container = model_io.gen_fixture(7, tmp_path / "model")
    model = model_io.load_model(manifest, container)
    grid = stimuli.StimulusGrid(size=96)
    result = perception.probe_channels(model, "probe", grid, threads=1)
    pe = result.pe_values()
    gabor_min = min(pe[c] for c in model_io.FIXTURE_GABOR_CHANNELS)
    rest_max = max(pe[c] for c in model_io.FIXTURE_LOWPASS_CHANNELS +
                   model_io.FIXTURE_DC_CHANNELS)
    ranking_ok = gabor_min > rest_max

    data = protocols.load_manifest(
        build_blur_qa_dataset(tmp_path / "qa"), "qa")
    sroccs = {}
    for mode in ("H", "L"):
        subset = select_subset(pe, mode, 25, layer="probe")
        cfg = MetricConfig(model=model, tap="probe", subset=subset)
        sroccs[mode] = protocols.qa_test(cfg, data, threads=1)["srocc"]
    margin = sroccs["H"] - sroccs["L"]
    elapsed = time.monotonic() - start
    report("fixture end-to-end (gabor PE dominance, srocc(H-25) > srocc(L-25), "
           "<2 min)", ranking_ok and margin > 0 and elapsed < 120.0,
           f"PE gap {gabor_min / rest_max:.1e}x, srocc H {sroccs['H']:.3f} vs "
           f"L {sroccs['L']:.3f}, {elapsed:.0f} s")


def test_determinism_across_runs_and_threads(tmp_path, fixture_paths):
    manifest, container = fixture_paths
    args = ["--model", str(manifest), "--weights", str(container),
            "--tap", "probe"]
    outs = []
    for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / f"scores_{tag}.csv"
        assert main(["probe", *args, "--threads", threads,
                     "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    probe_ok = outs[0] == outs[1] == outs[2]

    build_blur_qa_dataset(tmp_path / "qa")
    assert main(["select", "--scores", str(tmp_path / "scores_a.csv"),
                 "--mode", "H", "--percent", "25",
                 "--out", str(tmp_path / "h.json")]) == 0
    evals = []
    for tag, threads in (("a", "1"), ("b", "1"), ("c", "4")):
        out = tmp_path / f"qa_{tag}.json"
        assert main(["evaluate", *args, "--protocol", "qa",
                     "--records", str(tmp_path / "qa" / "manifest.csv"),
                     "--subset", str(tmp_path / "h.json"),
                     "--threads", threads, "--out", str(out)]) == 0
        evals.append(out.read_bytes())
    eval_ok = evals[0] == evals[1] == evals[2]
    report("determinism (probe/evaluate byte-identical across runs and "
           "--threads {1,4})", probe_ok and eval_ok)
