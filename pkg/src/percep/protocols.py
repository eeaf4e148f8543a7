"""Validation protocols: QA statistics against DMOS, JND classification,
and 2AFC credit scoring, plus dataset manifests and synthetic distortions.
"""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.stats import rankdata

from .distance import distance_from_features, tap_features
from .errors import CorrelationUndefinedError, DatasetError, PercepError
from .images import decode_image
from .parallel import parallel_map


@dataclass(frozen=True)
class QaRecord:
    reference: str
    distorted: str
    dmos: float


@dataclass(frozen=True)
class JndRecord:
    image1: str
    image2: str
    score: float  # one of 0, 1/3, 2/3, 1

    _ALLOWED = (0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)

    def __post_init__(self):
        if not any(abs(self.score - v) < 1e-9 for v in self._ALLOWED):
            raise DatasetError(
                f"jnd score {self.score} not one of 0, 1/3, 2/3, 1"
            )


@dataclass(frozen=True)
class AfcRecord:
    reference: str
    candidate1: str
    candidate2: str
    p: float  # fraction of observers choosing candidate1

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise DatasetError(f"2afc fraction p={self.p} outside [0, 1]")


_MANIFEST_COLUMNS = {
    "qa": ("ref", "dist", "dmos"),
    "jnd": ("img1", "img2", "score"),
    "2afc": ("ref", "cand1", "cand2", "p"),
}


def load_manifest(path, kind):
    """Read a CSV dataset manifest; image paths resolve relative to it."""
    if kind not in _MANIFEST_COLUMNS:
        raise DatasetError(f"unknown manifest kind {kind!r}")
    columns = _MANIFEST_COLUMNS[kind]
    base = Path(path).parent
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or ()
        missing = [c for c in columns if c not in header]
        if missing:
            raise DatasetError(
                f"{path}: manifest missing column(s) {', '.join(missing)}"
            )
        for line_no, row in enumerate(reader, start=2):
            try:
                if kind == "qa":
                    rec = QaRecord(str(base / row["ref"]), str(base / row["dist"]),
                                   float(row["dmos"]))
                elif kind == "jnd":
                    rec = JndRecord(str(base / row["img1"]), str(base / row["img2"]),
                                    float(row["score"]))
                else:
                    rec = AfcRecord(str(base / row["ref"]), str(base / row["cand1"]),
                                    str(base / row["cand2"]), float(row["p"]))
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{line_no}: bad record: {exc}") from exc
            records.append(rec)
    if not records:
        raise DatasetError(f"{path}: empty manifest")
    return records


# --- statistics ---------------------------------------------------------------

def _as_pair(x, y, min_len=2):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise PercepError("inputs must be equal-length vectors")
    if x.size < min_len:
        raise PercepError(f"need at least {min_len} samples, got {x.size}")
    return x, y


def _pearson(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt(np.sum(xc * xc) * np.sum(yc * yc))
    if denom == 0.0:
        raise CorrelationUndefinedError(
            "correlation undefined for zero-variance input"
        )
    return float(np.sum(xc * yc) / denom)


def srocc(x, y):
    """Spearman rank-order correlation; ties get average ranks."""
    x, y = _as_pair(x, y)
    return _pearson(rankdata(x), rankdata(y))


def lcc(x, y):
    """Pearson linear correlation of the raw values."""
    x, y = _as_pair(x, y)
    return _pearson(x, y)


def rmse(x, y):
    """Root mean squared difference."""
    x, y = _as_pair(x, y)
    return float(np.sqrt(np.mean((x - y) ** 2)))


def logistic(x, params):
    """Monotone 4-parameter logistic: b2 + (b1-b2)/(1 + exp(-(x-b3)/b4))."""
    b1, b2, b3, b4 = params
    x = np.asarray(x, dtype=np.float64)
    return b2 + (b1 - b2) / (1.0 + np.exp(-(x - b3) / b4))


@dataclass(frozen=True)
class LogisticFit:
    params: tuple
    converged: bool
    predicted: np.ndarray


def fit_logistic(x, y, max_iter=500, tol=1e-8):
    """Least-squares 4-parameter logistic fit by damped Gauss-Newton.

    Initialization from the data range; at most `max_iter` iterations,
    stopping when the SSE improvement falls below `tol`. A failed fit
    returns converged=False (callers fall back to raw statistics).
    """
    x, y = _as_pair(x, y)
    span_x = float(x.max() - x.min())
    # a 4-parameter fit needs 4 points and non-degenerate ranges
    if x.size < 4 or span_x == 0.0 or float(y.max() - y.min()) == 0.0:
        return LogisticFit((0.0, 0.0, 0.0, 1.0), False, y.copy())
    try:
        direction = lcc(x, y)
    except CorrelationUndefinedError:
        return LogisticFit((0.0, 0.0, 0.0, 1.0), False, y.copy())
    hi, lo = float(y.max()), float(y.min())
    if direction >= 0:
        beta = np.array([hi, lo, float(np.median(x)), span_x / 4.0])
    else:
        beta = np.array([lo, hi, float(np.median(x)), span_x / 4.0])
    def residual(b):
        return y - logistic(x, b)
    r = residual(beta)
    sse = float(r @ r)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        b1, b2, b3, b4 = beta
        z = (x - b3) / b4
        s = 1.0 / (1.0 + np.exp(-z))
        ds = (b1 - b2) * s * (1.0 - s)
        jac = np.stack([s, 1.0 - s, -ds / b4, -ds * z / b4], axis=1)
        g = jac.T @ r
        h = jac.T @ jac
        step_ok = False
        for _ in range(16):
            try:
                delta = np.linalg.solve(h + lam * np.eye(4), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = beta + delta
            if cand[3] == 0.0 or not np.all(np.isfinite(cand)):
                lam *= 10.0
                continue
            r_new = residual(cand)
            sse_new = float(r_new @ r_new)
            if np.isfinite(sse_new) and sse_new <= sse:
                step_ok = True
                break
            lam *= 10.0
        if not step_ok:
            break
        improvement = sse - sse_new
        beta, r, sse = cand, r_new, sse_new
        lam = max(lam / 10.0, 1e-12)
        if improvement < tol:
            converged = True
            break
    return LogisticFit(tuple(float(b) for b in beta), converged,
                       logistic(x, beta))


# --- feature-space evaluation --------------------------------------------------

def _feature_table(cfg, paths, threads):
    """Decode each unique path once and compute its subset features."""
    unique = sorted(set(paths))

    def one(path):
        try:
            img = decode_image(path)
        except FileNotFoundError as exc:
            raise DatasetError(f"cannot read image {path!r}: {exc}") from exc
        return tap_features(cfg, img)

    feats = parallel_map(one, unique, threads)
    return dict(zip(unique, feats))


def record_distances(cfg, pairs, threads=1):
    """Perceptual distances for (path, path) pairs with feature caching."""
    paths = [p for pair in pairs for p in pair]
    table = _feature_table(cfg, paths, threads)
    return [distance_from_features(cfg, table[a], table[b]) for a, b in pairs]


def qa_statistics(distances, dmos):
    """SROCC plus logistic-mapped LCC/RMSE (raw variants included).

    Records are canonically ordered first, so the statistics are exactly
    permutation-invariant.
    """
    d = np.asarray(distances, dtype=np.float64)
    h = np.asarray(dmos, dtype=np.float64)
    order = np.lexsort((h, d))
    d, h = d[order], h[order]
    fit = fit_logistic(d, h)
    stats = {
        "srocc": srocc(d, h),
        "raw_lcc": lcc(d, h),
        "raw_rmse": rmse(d, h),
        "fit_converged": fit.converged,
    }
    if fit.converged:
        stats["lcc"] = lcc(fit.predicted, h)
        stats["rmse"] = rmse(fit.predicted, h)
    else:
        stats["lcc"] = stats["raw_lcc"]
        stats["rmse"] = stats["raw_rmse"]
    return stats


def qa_test(cfg, records, threads=1):
    """Correlation of subset perceptual distances with DMOS.

    Distance and DMOS both increase with degradation, so positive SROCC is
    the success direction.
    """
    if len(records) < 2:
        raise DatasetError("qa test needs at least 2 records")
    pairs = [(r.reference, r.distorted) for r in records]
    distances = record_distances(cfg, pairs, threads)
    return qa_statistics(distances, [r.dmos for r in records])


def binarize_jnd(score):
    """Human 4-level score -> boolean 'perceptibly different' at 0.5."""
    return score >= 0.5


def best_threshold_accuracy(distances, labels):
    """Best binary accuracy over all distance thresholds.

    Thresholds sweep the midpoints of consecutive sorted distances plus
    both all-same/all-different extremes, so the result never falls below
    the majority-class fraction.
    """
    d = np.asarray(distances, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if d.size != y.size or d.size < 2:
        raise PercepError("need equal-length distance/label vectors, >= 2")
    if y.all() or not y.any():
        raise DatasetError("jnd test needs both classes after binarization")
    uniq = np.unique(d)
    cuts = [-np.inf, np.inf]
    cuts.extend((uniq[:-1] + uniq[1:]) / 2.0)
    best = 0.0
    for cut in cuts:
        best = max(best, float(np.mean((d > cut) == y)))
    return best


def jnd_score(cfg, records, threads=1):
    """Percentage of pairs classified same/different at the best threshold."""
    if len(records) < 2:
        raise DatasetError("jnd test needs at least 2 records")
    pairs = [(r.image1, r.image2) for r in records]
    distances = record_distances(cfg, pairs, threads)
    labels = [binarize_jnd(r.score) for r in records]
    return 100.0 * best_threshold_accuracy(distances, labels)


def afc_credit(d1, d2, p):
    """Credit for one 2AFC record: p if the metric prefers candidate 1,
    1-p if it prefers candidate 2, 0.5 on a tie."""
    if d1 < d2:
        return p
    if d1 > d2:
        return 1.0 - p
    return 0.5


def afc_score(cfg, records, threads=1):
    """Mean 2AFC credit over records."""
    if not records:
        raise DatasetError("2afc test needs at least 1 record")
    pairs = []
    for r in records:
        pairs.append((r.candidate1, r.reference))
        pairs.append((r.candidate2, r.reference))
    distances = record_distances(cfg, pairs, threads)
    credits = np.empty(len(records), dtype=np.float64)
    for i, r in enumerate(records):
        credits[i] = afc_credit(distances[2 * i], distances[2 * i + 1], r.p)
    return float(np.mean(credits))


# --- synthetic distortions ------------------------------------------------------

def _gaussian_kernel1d(sigma):
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(image, sigma):
    """Separable Gaussian blur, kernel radius ceil(3*sigma), clamped borders."""
    if sigma <= 0:
        raise PercepError(f"blur sigma must be positive, got {sigma}")
    arr = np.asarray(image, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    k = _gaussian_kernel1d(sigma)
    radius = len(k) // 2
    padded = np.pad(arr, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    arr = sliding_window_view(padded, len(k), axis=1) @ k
    padded = np.pad(arr, ((0, 0), (0, 0), (radius, radius)), mode="edge")
    arr = sliding_window_view(padded, len(k), axis=2) @ k
    out = arr.astype(np.float32)
    return out[0] if squeeze else out


def white_noise(image, sigma, rng):
    """Additive Gaussian noise clipped to [0, 1]."""
    if sigma < 0:
        raise PercepError(f"noise sigma must be >= 0, got {sigma}")
    arr = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return arr.astype(np.float32)
    noisy = arr + rng.normal(0.0, sigma, size=arr.shape)
    return np.clip(noisy, 0.0, 1.0).astype(np.float32)


DISTORTION_KINDS = ("gaussian_blur", "white_noise")


def synth_distortions(image, kind, levels, seed=0):
    """Distorted copies of `image` at strictly increasing severity levels.

    Noise uses an independent seeded stream per level, so results do not
    depend on evaluation order.
    """
    levels = [float(v) for v in levels]
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise PercepError("levels must be strictly increasing")
    if kind == "gaussian_blur":
        return [gaussian_blur(image, sigma) for sigma in levels]
    if kind == "white_noise":
        out = []
        for i, sigma in enumerate(levels):
            rng = np.random.default_rng([int(seed), i])
            out.append(white_noise(image, sigma, rng))
        return out
    raise PercepError(
        f"unknown distortion kind {kind!r} (supported: {DISTORTION_KINDS})"
    )
