"""Error statistics: RMSE, word error rate, noise histograms, precision bits,
confusion matrices."""

import csv
import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np
from scipy import stats

from .errors import DimensionError, DomainError, StatisticsError


def _pair(expected, actual):
    e = np.asarray(expected)
    a = np.asarray(actual)
    if e.shape != a.shape:
        raise DimensionError(f"length mismatch: {e.shape} vs {a.shape}")
    return e, a


def rmse(expected, actual):
    e, a = _pair(expected, actual)
    if e.size == 0:
        raise DimensionError("rmse needs at least one sample")
    d = a.astype(float) - e.astype(float)
    return float(np.sqrt(np.mean(d * d)))


def per(expected_words, actual_words):
    """Fraction of positions where the integer words differ."""
    e, a = _pair(expected_words, actual_words)
    if e.size == 0:
        raise DimensionError("per needs at least one sample")
    return int(np.count_nonzero(e != a)) / e.size


def precision_bits(sigma):
    """Bits resolvable with a 3-sigma (99.7 %) noise margin: log2(1 / (3 sigma))."""
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma}")
    return math.log2(1.0 / (3.0 * sigma))


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    sigma: float
    mean: float
    excess_kurtosis: float
    degenerate: bool
    n: int

    def zero_bin_fraction(self):
        """Share of samples in the bin containing 0."""
        i = np.searchsorted(self.edges, 0.0, side="right") - 1
        i = min(max(i, 0), len(self.counts) - 1)
        return float(self.counts[i]) / self.n

    def write_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin_left", "bin_right", "count"])
            for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])


def noise_histogram(errors, bins=101):
    e = np.asarray(errors, dtype=float).ravel()
    if e.size < 100:
        raise StatisticsError(f"need at least 100 samples, got {e.size}")
    lo, hi = float(e.min()), float(e.max())
    degenerate = lo == hi
    if degenerate:
        # Odd bin count keeps the constant value in a single central bin.
        bins = bins | 1
        half = 0.5 * bins * (abs(lo) * 1e-9 or 1e-9)
        lo, hi = lo - half, hi + half
    counts, edges = np.histogram(e, bins=bins, range=(lo, hi))
    sigma = float(e.std(ddof=1))
    kurt = 0.0 if degenerate else float(stats.kurtosis(e, fisher=True, bias=True))
    return Histogram(edges, counts, sigma, float(e.mean()), kurt, degenerate, int(e.size))


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    accuracy: float


def confusion_matrix(predictions, labels, k):
    p, t = _pair(predictions, labels)
    p = p.astype(np.int64)
    t = t.astype(np.int64)
    for name, arr in (("prediction", p), ("label", t)):
        if arr.size and (arr.min() < 0 or arr.max() >= k):
            raise DomainError(f"{name} class outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    acc = float(np.trace(counts)) / p.size if p.size else 0.0
    return ConfusionMatrix(counts, acc)


@dataclass
class ErrorReport:
    n: int
    rmse: float
    per: float | None
    sigma: float
    precision_bits: float | None
    histogram: Histogram | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d.pop("histogram")
        if self.histogram is not None:
            d["histogram_bins"] = len(self.histogram.counts)
            d["excess_kurtosis"] = self.histogram.excess_kurtosis
            d["degenerate"] = self.histogram.degenerate
        return d

    def to_json(self, **extra):
        d = dict(extra)
        d["report"] = self.to_dict()
        return json.dumps(d, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def error_report(expected, actual, words_expected=None, words_actual=None, scale=1.0, bins=101):
    """Report of ``actual - expected`` in units of ``scale``.

    ``scale`` is the output full-scale used for sigma and precision bits;
    PER is computed on the integer words when given.
    """
    e, a = _pair(expected, actual)
    err = (a.astype(float) - e.astype(float)) / scale
    hist = noise_histogram(err, bins) if err.size >= 100 else None
    sigma = float(err.std(ddof=1)) if err.size > 1 else 0.0
    p = per(words_expected, words_actual) if words_expected is not None else None
    return ErrorReport(
        n=int(err.size),
        rmse=float(np.sqrt(np.mean(err * err))),
        per=p,
        sigma=sigma,
        precision_bits=precision_bits(sigma) if sigma > 0 else None,
        histogram=hist,
    )
