"""Channel scoring: CSF model, frequency sensitivity (mu1), orientation
selectivity (mu2), Perceptual Efficacy (PE), ranking, and subset selection.

Scores are accumulated in float64. PE is normalized strictly within one
layer; cross-layer PE comparison is undefined and not offered.
"""
import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import stimuli
from .errors import DegenerateLayerError, PercepError, ShapeError
from .parallel import parallel_map
from .tensor import spatial_mean


@dataclass(frozen=True)
class CsfModel:
    """Luminance contrast sensitivity a*(b + c*f)*exp(-(c*f)^d), f in cpd.

    Defaults are the classical Mannos-Sakrison parameters: unimodal with
    its peak near 8 cpd, falling off toward both low and high frequencies.
    """

    a: float = 2.6
    b: float = 0.0192
    c: float = 0.114
    d: float = 1.1

    def __call__(self, f_cpd):
        f = np.asarray(f_cpd, dtype=np.float64)
        if np.any(f <= 0):
            raise PercepError("csf requires positive frequency (cpd)")
        out = self.a * (self.b + self.c * f) * np.exp(-((self.c * f) ** self.d))
        return float(out) if np.isscalar(f_cpd) else out

    def peak(self, lo=0.01, hi=32.0, step=0.01):
        """Frequency of maximum sensitivity, grid argmax at `step` resolution."""
        grid = np.arange(lo, hi + step / 2, step)
        return float(grid[int(np.argmax(self(grid)))])


MANNOS_SAKRISON = CsfModel()


def csf(f_cpd, model=MANNOS_SAKRISON):
    """Contrast sensitivity at frequency f (cycles per degree)."""
    return model(f_cpd)


def mu1(curve, csf_model, freqs):
    """CSF-weighted frequency sensitivity of one response curve.

    sum_i CSF(f_i) * |da/df|_i with central differences in the interior and
    one-sided differences at the ends. Non-negative; zero for a constant
    curve.
    """
    a = np.asarray(curve, dtype=np.float64)
    f = np.asarray(freqs, dtype=np.float64)
    if a.shape != f.shape:
        raise ShapeError(f"mu1: curve length {a.shape} != freqs {f.shape}")
    if a.size < 2:
        raise ShapeError("mu1 needs at least 2 frequency samples")
    deriv = np.empty_like(a)
    deriv[0] = (a[1] - a[0]) / (f[1] - f[0])
    deriv[-1] = (a[-1] - a[-2]) / (f[-1] - f[-2])
    if a.size > 2:
        deriv[1:-1] = (a[2:] - a[:-2]) / (f[2:] - f[:-2])
    weights = csf_model(f)
    return float(np.sum(weights * np.abs(deriv)))


def mu2(curve):
    """Orientation selectivity: sum of squared deviations from the peak.

    a_hat = max over orientations; returns sum_theta (a(theta) - a_hat)^2.
    Zero iff the curve is constant.
    """
    a = np.asarray(curve, dtype=np.float64)
    if a.size < 2:
        raise ShapeError("mu2 needs at least 2 orientation samples")
    a_hat = float(a.max())
    return float(np.sum((a - a_hat) ** 2))


def perceptual_efficacy(mu1s, mu2s):
    """Per-channel PE(m) = mu1(m)*mu2(m) / (sum mu1 * sum mu2) for one layer."""
    m1 = np.asarray(mu1s, dtype=np.float64)
    m2 = np.asarray(mu2s, dtype=np.float64)
    if m1.shape != m2.shape or m1.ndim != 1:
        raise ShapeError("perceptual_efficacy: mu1/mu2 lists must match")
    s1 = float(m1.sum())
    s2 = float(m2.sum())
    if s1 <= 0.0 or s2 <= 0.0:
        raise DegenerateLayerError(
            "degenerate layer: all mu1 or all mu2 scores vanish"
        )
    return (m1 * m2) / (s1 * s2)


@dataclass(frozen=True)
class ChannelScore:
    layer: str
    channel: int
    mu1: float
    mu2: float
    pe: float


@dataclass(frozen=True)
class ChannelSubset:
    """Selected channel indices of one tap layer, optionally weighted."""

    layer: str
    indices: tuple
    weights: tuple = ()
    provenance: str = "F"

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(set(idx)) != len(idx):
            raise PercepError("subset indices must be unique")
        if any(i < 0 for i in idx):
            raise PercepError("subset indices must be non-negative")
        w = tuple(float(x) for x in self.weights) if self.weights \
            else tuple(1.0 for _ in idx)
        if len(w) != len(idx):
            raise PercepError("subset weights length != indices length")
        if any(x < 0 for x in w):
            raise PercepError("subset weights must be non-negative")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return len(self.indices)


def select_subset(pe, mode, x, layer="layer", weights_from_pe=False):
    """Channels with the top (mode 'H') or bottom (mode 'L') x% of PE scores.

    Cardinality is ceil(x*M/100); ties break toward the lower channel index;
    indices come back sorted. x = 100 returns the full set F in either mode.
    """
    pe = np.asarray(pe, dtype=np.float64)
    if pe.size == 0:
        raise PercepError("select_subset: empty layer")
    if not 0 < x <= 100:
        raise PercepError(f"select_subset: percent {x} outside (0, 100]")
    if mode not in ("H", "L"):
        raise PercepError(f"select_subset: mode must be 'H' or 'L', got {mode!r}")
    m = pe.size
    n = math.ceil(x * m / 100.0)
    order = sorted(range(m), key=lambda i: (-pe[i], i) if mode == "H" else (pe[i], i))
    chosen = sorted(order[:n])
    tag = "F" if n == m else f"{mode}-{x:g}"
    weights = tuple(float(pe[i]) for i in chosen) if weights_from_pe else ()
    prov = tag if not weights_from_pe else f"{tag} PE-weighted"
    return ChannelSubset(layer=layer, indices=tuple(chosen), weights=weights,
                         provenance=prov)


def full_subset(n_channels, layer="layer"):
    """The complete channel set F of a layer."""
    return ChannelSubset(layer=layer, indices=tuple(range(n_channels)),
                         provenance="F")


# --- probing -----------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    """Raw response curves and derived scores from one tap probe."""

    layer: str
    frequencies: tuple
    orientations: tuple
    orientation_frequency: float  # cpd of the fixed-frequency sweep
    freq_curves: np.ndarray       # [M, |frequencies|] float64
    ori_curves: np.ndarray        # [M, |orientations|] float64
    scores: tuple = ()

    def pe_values(self):
        return np.asarray([s.pe for s in self.scores], dtype=np.float64)

    def ranking(self):
        """Channel indices sorted by descending PE, ties toward lower index."""
        pe = self.pe_values()
        return tuple(sorted(range(len(pe)), key=lambda i: (-pe[i], i)))


def frequency_response(model, tap, grid, threads=1):
    """Spatial-mean tap activation per channel for each radial grating.

    Returns a float64 [M, |frequencies|] matrix.
    """
    from .inference import forward

    def one(f):
        acts = forward(model, stimuli.radial_grating(f, grid), [tap])
        return spatial_mean(acts[tap])

    cols = parallel_map(one, grid.frequencies, threads)
    return np.stack(cols, axis=1)


def orientation_response(model, tap, grid, f_cpd, threads=1):
    """Spatial-mean tap activation per channel for each oriented grating."""
    from .inference import forward

    def one(theta):
        acts = forward(model, stimuli.oriented_grating(theta, f_cpd, grid), [tap])
        return spatial_mean(acts[tap])

    cols = parallel_map(one, grid.orientations, threads)
    return np.stack(cols, axis=1)


def orientation_probe_frequency(csf_model, grid):
    """Fixed frequency for the orientation sweep: the CSF peak, clamped to
    the grid's representable band."""
    f = csf_model.peak()
    return min(f, grid.geometry.nyquist_cpd)


def probe_channels(model, tap, grid, csf_model=MANNOS_SAKRISON, threads=1):
    """Full probe of one tap: both sweeps, mu1/mu2/PE per channel."""
    f_ori = orientation_probe_frequency(csf_model, grid)
    freq_curves = frequency_response(model, tap, grid, threads)
    ori_curves = orientation_response(model, tap, grid, f_ori, threads)
    mu1s = [mu1(freq_curves[m], csf_model, grid.frequencies)
            for m in range(freq_curves.shape[0])]
    mu2s = [mu2(ori_curves[m]) for m in range(ori_curves.shape[0])]
    pes = perceptual_efficacy(mu1s, mu2s)
    scores = tuple(
        ChannelScore(layer=tap, channel=m, mu1=mu1s[m], mu2=mu2s[m],
                     pe=float(pes[m]))
        for m in range(len(mu1s))
    )
    return ProbeResult(
        layer=tap,
        frequencies=grid.frequencies,
        orientations=grid.orientations,
        orientation_frequency=f_ori,
        freq_curves=freq_curves,
        ori_curves=ori_curves,
        scores=scores,
    )


# --- score/ subset serialization ----------------------------------------------

def _fmt(v):
    return repr(float(v))


def write_scores_csv(path, result):
    """Score table: layer, channel, mu1, mu2, pe, rank (1 = highest PE)."""
    ranking = result.ranking()
    rank_of = {ch: r + 1 for r, ch in enumerate(ranking)}
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "channel", "mu1", "mu2", "pe", "rank"])
        for s in result.scores:
            writer.writerow([s.layer, s.channel, _fmt(s.mu1), _fmt(s.mu2),
                             _fmt(s.pe), rank_of[s.channel]])


def read_scores_csv(path):
    """Read a score table back into ChannelScore rows (rank column ignored)."""
    scores = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            scores.append(ChannelScore(
                layer=row["layer"], channel=int(row["channel"]),
                mu1=float(row["mu1"]), mu2=float(row["mu2"]),
                pe=float(row["pe"]),
            ))
    if not scores:
        raise PercepError(f"{path}: empty score table")
    return scores


def write_curves_csv(path, result):
    """Raw response curves in long form: layer, channel, sweep, x, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["layer", "channel", "sweep", "x", "value"])
        m = result.freq_curves.shape[0]
        for ch in range(m):
            for f, v in zip(result.frequencies, result.freq_curves[ch]):
                writer.writerow([result.layer, ch, "frequency", _fmt(f), _fmt(v)])
            for t, v in zip(result.orientations, result.ori_curves[ch]):
                writer.writerow([result.layer, ch, "orientation", _fmt(t), _fmt(v)])


def write_subset(path, subset):
    doc = {
        "layer": subset.layer,
        "provenance": subset.provenance,
        "indices": list(subset.indices),
        "weights": list(subset.weights),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def read_subset(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return ChannelSubset(layer=doc["layer"], indices=tuple(doc["indices"]),
                             weights=tuple(doc.get("weights") or ()),
                             provenance=doc.get("provenance", "F"))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise PercepError(f"{path}: invalid subset file: {exc}") from exc
