"""Noise and distortion between the ideal multilevel frame and the detector.

SNR conventions (all amplitude ratios, ``sigma = rms * 10**(-snr/20)``):

* ``weight-snr``: Gaussian noise on every loaded (nonzero) lane weight,
  referenced to the RMS of those weights. One draw per output word, lane and
  detected sample (the analog core reads one sample per word, the hybrid
  core one per bit slot); zero-weight lanes are unloaded and stay exactly
  zero.
* ``electrical-snr``: Gaussian noise on every detected sample, referenced to
  the RMS of the ideal (noise-free) detected signal over the workload.
* ``optical-osnr``: ASE noise on each comb line ahead of its modulator,
  referenced to the line power in a 12.5 GHz bandwidth and scaled to the
  detection noise bandwidth (80 GHz by default, the comb line spacing, since
  no per-lane optical filter precedes the photodiode).
"""

import math
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ConfigError, DomainError
from .rng import RNG_IDENTITY, WordStream

MODES = ("noise-free", "electrical-snr", "weight-snr", "optical-osnr")

OSNR_REFERENCE_BANDWIDTH_HZ = 12.5e9
DEFAULT_NOISE_BANDWIDTH_HZ = 80e9


@dataclass(frozen=True)
class ChannelSpec:
    mode: str = "noise-free"
    snr_db: float = math.inf
    osnr_db: float = math.inf
    isi_taps: tuple = ()
    seed: int = 0
    noise_bandwidth_hz: float = DEFAULT_NOISE_BANDWIDTH_HZ
    # Overrides the workload-derived RMS for electrical-snr when set.
    reference_rms: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown channel mode {self.mode!r}; expected one of {MODES}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.mode in ("electrical-snr", "weight-snr") and math.isnan(self.snr_db):
            raise ConfigError("snr_db must be a number")
        if self.mode == "optical-osnr" and math.isnan(self.osnr_db):
            raise ConfigError("osnr_db must be a number")
        object.__setattr__(self, "isi_taps", tuple(float(t) for t in self.isi_taps))

    @classmethod
    def noise_free(cls, seed=0):
        return cls(mode="noise-free", seed=seed)

    @classmethod
    def electrical(cls, snr_db, seed=0, **kw):
        return cls(mode="electrical-snr", snr_db=float(snr_db), seed=seed, **kw)

    @classmethod
    def weight(cls, snr_db, seed=0, **kw):
        return cls(mode="weight-snr", snr_db=float(snr_db), seed=seed, **kw)

    @classmethod
    def optical(cls, osnr_db, seed=0, **kw):
        return cls(mode="optical-osnr", osnr_db=float(osnr_db), seed=seed, **kw)

    @property
    def is_noise_free(self):
        if self.mode == "noise-free":
            return True
        if self.mode == "optical-osnr":
            return math.isinf(self.osnr_db) and self.osnr_db > 0
        return math.isinf(self.snr_db) and self.snr_db > 0

    def stream(self, name):
        return WordStream(self.seed, name)

    def describe(self):
        """Metadata block written into every report."""
        d = asdict(self)
        d["isi_taps"] = list(self.isi_taps)
        for k in ("snr_db", "osnr_db"):
            if math.isinf(d[k]):
                d[k] = "inf"
        d["rng"] = RNG_IDENTITY
        d["osnr_reference_bandwidth_hz"] = OSNR_REFERENCE_BANDWIDTH_HZ
        d["snr_convention"] = {
            "weight-snr": "sigma = rms(nonzero nominal weights) * 10^(-snr/20)",
            "electrical-snr": "sigma = rms(ideal detected signal over workload) * 10^(-snr/20)",
        }
        return d


def sigma_from_snr(signal_rms, snr_db):
    if not signal_rms > 0:
        raise DomainError(f"signal_rms must be positive, got {signal_rms}")
    return float(signal_rms) * 10.0 ** (-float(snr_db) / 20.0)


def weight_reference_rms(weights):
    """RMS of the nonzero nominal weights (real units)."""
    w = np.asarray(weights, dtype=float)
    nz = w[w != 0]
    if nz.size == 0:
        return 0.0
    return float(np.sqrt(np.mean(nz**2)))


def apply_weight_noise(weights, snr_db, stream, start=0, count=1, slots=1):
    """Perturbed copies of ``weights``, one set per output word starting at
    word index ``start``: shape ``(count, L)``, or ``(count, slots, L)`` when
    the word is read out over ``slots`` time samples (the hybrid bit slots),
    each of which sees its own draw.

    Every lane owns a draw (so streams do not depend on which lanes are
    loaded) but only nonzero weights receive it.
    """
    w = np.asarray(weights, dtype=float)
    shape = (count, w.size) if slots == 1 else (count, slots, w.size)
    if math.isinf(snr_db) and snr_db > 0:
        return np.broadcast_to(w, shape).copy()
    rms = weight_reference_rms(w)
    if rms == 0.0:
        return np.broadcast_to(w, shape).copy()
    sigma = sigma_from_snr(rms, snr_db)
    return w + (w != 0) * (sigma * stream.normals(start, count, slots * w.size).reshape(shape))


def apply_electrical_awgn(frames, snr_db, stream, signal_rms, start=0):
    """Add i.i.d. Gaussian noise to ``frames`` of shape ``(n_words, M)``."""
    frames = np.asarray(frames, dtype=float)
    if math.isinf(snr_db) and snr_db > 0:
        return frames.copy()
    sigma = sigma_from_snr(signal_rms, snr_db)
    n, m = frames.shape
    return frames + sigma * stream.normals(start, n, m)


def ase_variance(osnr_db, noise_bandwidth_hz=DEFAULT_NOISE_BANDWIDTH_HZ, line_power=1.0):
    """Complex ASE field variance per comb line in the detection bandwidth."""
    if math.isinf(osnr_db) and osnr_db > 0:
        return 0.0
    return line_power * 10.0 ** (-osnr_db / 10.0) * noise_bandwidth_hz / OSNR_REFERENCE_BANDWIDTH_HZ


def apply_optical_osnr(lane_powers, osnr_db, stream, start=0,
                       noise_bandwidth_hz=DEFAULT_NOISE_BANDWIDTH_HZ, reference_power=None):
    """Detected intensities ``|sqrt(P) + n|**2`` per lane.

    ``lane_powers`` has shape ``(n_words, K)``; every entry gets its own
    complex noise sample. The ASE variance is set against
    ``reference_power`` (default: each entry's own power).
    """
    p = np.asarray(lane_powers, dtype=float)
    if p.ndim == 1:
        p = p[None, :]
    if np.any(p < 0):
        raise DomainError("lane powers must be non-negative")
    ref = p if reference_power is None else reference_power
    var = ase_variance(osnr_db, noise_bandwidth_hz, 1.0) * ref
    n, k = p.shape
    z = stream.normals(start, n, 2 * k)
    scale = np.sqrt(np.asarray(var) / 2.0)
    re = np.sqrt(p) + scale * z[:, 0::2]
    im = scale * z[:, 1::2]
    return re**2 + im**2


def apply_isi(samples, taps):
    """Causal FIR distortion, same length as the input, zero-padded edges.

    Works along the last axis, so a ``(n_words, M)`` batch is filtered frame
    by frame.
    """
    taps = np.asarray(taps, dtype=float)
    if taps.size == 0:
        raise ConfigError("ISI taps must be non-empty")
    x = np.asarray(samples, dtype=float)
    out = np.zeros_like(x)
    length = x.shape[-1]
    for j, t in enumerate(taps):
        if j >= length:
            break
        out[..., j:] += t * x[..., : length - j]
    return out
