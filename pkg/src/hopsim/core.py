"""Arithmetic model of the hybrid (binary-word input) and analog MVM cores.

All exact arithmetic is carried out in integer *ticks*: a weight tick is
``1 / (2**N - 1)`` and an input word is an unsigned ``M``-bit integer. Slot
0 of every frame is the MSB slot. Real-valued normalization only happens at
the boundary.

Two layers live here. The scalar functions (``encode_word``,
``decide_slot``, ``hybrid_inner_product``...) follow one output word at a
time; ``hybrid_batch`` and ``analog_batch`` run the same pipeline over an
``(n_words, L)`` block with numpy and are what the workloads call.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import channel as ch
from .errors import DimensionError, DomainError, SignalCorruptionError


def round_half_away(x):
    """Round to nearest integer, ties away from zero (scalar or array)."""
    if np.ndim(x) == 0:
        return int(math.copysign(math.floor(abs(x) + 0.5), x))
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class BinaryWord:
    value: int
    bit_width: int

    def __post_init__(self):
        if self.bit_width < 1:
            raise DomainError(f"bit_width must be >= 1, got {self.bit_width}")
        if not 0 <= self.value < 2**self.bit_width:
            raise DomainError(f"value {self.value} does not fit in {self.bit_width} bits")

    def bits(self):
        return encode_word(self.value, self.bit_width)


@dataclass(frozen=True)
class WeightVector:
    """Signed weight ticks on an ``N``-bit grid; lane ``l`` is ``ticks[l] / (2**N - 1)``."""

    ticks: tuple
    resolution: int

    def __post_init__(self):
        if self.resolution < 1:
            raise DomainError(f"resolution must be >= 1, got {self.resolution}")
        ticks = tuple(int(k) for k in self.ticks)
        q = 2**self.resolution - 1
        bad = [k for k in ticks if abs(k) > q]
        if bad:
            raise DomainError(f"ticks {bad} exceed +/-{q} for {self.resolution}-bit weights")
        object.__setattr__(self, "ticks", ticks)

    @classmethod
    def from_real(cls, weights, resolution):
        return cls(tuple(quantize_weight(w, resolution) for w in weights), resolution)

    @classmethod
    def for_ticks(cls, ticks):
        """Smallest resolution that represents ``ticks`` exactly."""
        n = max(1, max(abs(int(k)) for k in ticks).bit_length())
        return cls(tuple(ticks), n)

    def __len__(self):
        return len(self.ticks)

    @property
    def scale(self):
        return 2**self.resolution - 1

    @property
    def grid_step(self):
        return 1.0 / self.scale

    @property
    def values(self):
        return np.array(self.ticks, dtype=float) / self.scale

    @property
    def bounds(self):
        return (sum(min(k, 0) for k in self.ticks), sum(max(k, 0) for k in self.ticks))


@dataclass
class MultilevelFrame:
    samples: np.ndarray
    grid_step: float
    bounds: tuple


@dataclass
class InnerProductResult:
    raw_ticks: int
    normalized: float
    slot_decisions: list


def encode_word(value, bit_width):
    """MSB-first bits of an unsigned ``bit_width``-bit value."""
    value = int(value)
    if bit_width < 1:
        raise DomainError(f"bit_width must be >= 1, got {bit_width}")
    if not 0 <= value < 2**bit_width:
        raise DomainError(f"value {value} out of range for {bit_width}-bit word")
    return [(value >> (bit_width - 1 - k)) & 1 for k in range(bit_width)]


def bit_plane(words, bit_width):
    """``(L, M)`` matrix of bits, row ``l`` = word ``l``, column 0 = MSB."""
    return np.array([encode_word(w, bit_width) for w in words], dtype=np.int64).reshape(-1, bit_width)


def quantize_weight(w, resolution):
    if resolution < 1:
        raise DomainError(f"resolution must be >= 1, got {resolution}")
    if not abs(w) <= 1.0:
        raise DomainError(f"weight {w} outside [-1, 1]; normalize first")
    return round_half_away(w * (2**resolution - 1))


def slot_ticks(bits, weights):
    """Exact slot level in ticks."""
    if len(bits) != len(weights):
        raise DimensionError(f"{len(bits)} bits for {len(weights)} weights")
    return sum(int(b) * k for b, k in zip(bits, weights.ticks))


def ideal_slot_level(bits, weights):
    return slot_ticks(bits, weights) / weights.scale


def decide_slot(sample, grid_step, bounds):
    if not math.isfinite(sample):
        raise SignalCorruptionError(f"non-finite sample {sample}")
    if not grid_step > 0:
        raise DomainError(f"grid_step must be positive, got {grid_step}")
    lo, hi = bounds
    if lo > hi:
        raise DomainError(f"empty decision bounds {bounds}")
    return min(max(round_half_away(sample / grid_step), lo), hi)


def shift_add(slot_ticks_msb_first):
    total = 0
    for s in slot_ticks_msb_first:
        total = (total << 1) + int(s)
    return total


def ideal_frame(words, weights):
    """Noise-free frame for one output word."""
    m = words[0].bit_width
    plane = bit_plane([w.value for w in words], m)
    samples = np.array([ideal_slot_level(plane[:, k], weights) for k in range(m)])
    return MultilevelFrame(samples, weights.grid_step, weights.bounds)


def hybrid_inner_product(inputs, weights, channel=None, word_index=0, signal_rms=None):
    """One output word through the hybrid core.

    ``signal_rms`` is the workload reference for electrical SNR; when absent
    it is taken from this word's own ideal frame.
    """
    channel = channel or ch.ChannelSpec.noise_free()
    widths = {w.bit_width for w in inputs}
    if len(widths) != 1:
        raise DimensionError(f"mixed bit widths {sorted(widths)}")
    if len(inputs) != len(weights):
        raise DimensionError(f"{len(inputs)} inputs for {len(weights)} weights")
    m = widths.pop()
    words = np.array([[w.value for w in inputs]], dtype=np.int64)
    raw, dec = hybrid_batch(words, m, weights, channel, start=word_index, signal_rms=signal_rms)
    raw = int(raw[0])
    return InnerProductResult(raw, raw / ((2**m - 1) * weights.scale), [int(d) for d in dec[0]])


def analog_inner_product(inputs, weights, channel=None, word_index=0, signal_rms=None):
    channel = channel or ch.ChannelSpec.noise_free()
    d = np.asarray(inputs, dtype=float)
    if len(d) != len(weights):
        raise DimensionError(f"{len(d)} inputs for {len(weights)} weights")
    return float(analog_batch(d[None, :], weights, channel, start=word_index, signal_rms=signal_rms)[0])


# --- batch engine -----------------------------------------------------------

def batch_bits(words, bit_width):
    """``(n, L, M)`` uint8 bit tensor, MSB in slot 0."""
    words = np.asarray(words)
    if words.size and (words.min() < 0 or words.max() >= 2**bit_width):
        raise DomainError(f"input words out of range for {bit_width}-bit encoding")
    shifts = np.arange(bit_width - 1, -1, -1, dtype=np.int64)
    return ((words[..., None].astype(np.int64) >> shifts) & 1).astype(np.uint8)


def _accumulator_dtype(bit_width, weights):
    need = bit_width + weights.resolution + max(1, len(weights)).bit_length() + 1
    return np.int64 if need < 63 else object


def ideal_slot_ticks(words, bit_width, weights, lanes=None):
    """``(n, M)`` exact slot levels in ticks, optionally over a lane subset."""
    bits = batch_bits(words, bit_width)
    ticks = np.asarray(weights.ticks, dtype=np.int64)
    if lanes is not None:
        bits = bits[:, lanes, :]
        ticks = ticks[lanes]
    return np.einsum("nlm,l->nm", bits.astype(np.int64), ticks)


def hybrid_signal_rms(words, bit_width, weights):
    """RMS of the ideal detected frames (normalized units) over ``words``."""
    t = ideal_slot_ticks(words, bit_width, weights).astype(float) / weights.scale
    return float(np.sqrt(np.mean(t**2)))


def lane_transmissions(weights):
    """Off-state transmission and on-minus-off swing per lane.

    Positive weights bias on the red side (off = 0, on = w); negative weights
    on the blue side, which swaps the logic levels (off = |w|, on = 0).
    """
    w = weights.values
    return np.maximum(-w, 0.0), w


def _osnr_detect(levels, weights, channel, stream_name, start):
    """Calibrated detected signal for per-lane modulation ``levels``.

    ``levels`` has shape ``(n, S, L)`` with values in [0, 1] (bits for the
    hybrid core, analog inputs for the analog core). Each comb line carries
    unit power plus ASE before its modulator; the calibration removes the
    static offset and the ASE mean.
    """
    n, s, lanes = levels.shape
    t_off, swing = lane_transmissions(weights)
    stream = channel.stream(stream_name)
    line = ch.apply_optical_osnr(np.ones((n, s * lanes)), channel.osnr_db, stream, start=start,
                                 noise_bandwidth_hz=channel.noise_bandwidth_hz, reference_power=1.0)
    line = line.reshape(n, s, lanes)
    trans = t_off + levels * swing
    mean_line = 1.0 + ch.ase_variance(channel.osnr_db, channel.noise_bandwidth_hz)
    detected = np.einsum("nsl,nsl->ns", trans, line)
    return (detected - t_off.sum() * mean_line) / mean_line


def _lane_groups(n_lanes, groups):
    if groups < 1 or n_lanes % groups:
        raise DomainError(f"{groups} groups do not divide {n_lanes} lanes")
    return [np.arange(g, n_lanes, groups) for g in range(groups)] if groups > 1 else [np.arange(n_lanes)]


def hybrid_batch(words, bit_width, weights, channel, start=0, signal_rms=None, groups=1, lane_groups=None):
    """Run a block of output words through the hybrid core.

    ``words`` is ``(n, L)``; row ``j`` is output word ``start + j`` and draws
    its noise from that word's counter block. Returns ``(raw, decisions)``
    with ``raw`` the shift-added integer results and ``decisions`` the
    ``(n, M)`` per-slot tick decisions.

    With ``groups > 1`` (electrical mode only) the lanes are measured in
    separate passes, each with independent noise, and the noisy partial
    frames are summed before the decision. The configured SNR then applies to
    the summed frame: each pass gets ``sigma / sqrt(groups)``.
    """
    words = np.asarray(words, dtype=np.int64)
    if words.ndim != 2 or words.shape[1] != len(weights):
        raise DimensionError(f"expected (n, {len(weights)}) words, got {words.shape}")
    n, lanes = words.shape
    q = weights.scale
    bits = batch_bits(words, bit_width)
    ticks = np.asarray(weights.ticks, dtype=np.int64)

    if channel.is_noise_free:
        samples = np.einsum("nlm,l->nm", bits.astype(np.int64), ticks) / q
    elif channel.mode == "weight-snr":
        noisy = ch.apply_weight_noise(weights.values, channel.snr_db, channel.stream("weight"), start, n,
                                      slots=bit_width)
        samples = np.einsum("nlm,nml->nm", bits.astype(float), noisy)
    elif channel.mode == "electrical-snr":
        rms = channel.reference_rms or signal_rms
        if rms is None:
            rms = hybrid_signal_rms(words, bit_width, weights)
        sigma = ch.sigma_from_snr(rms, channel.snr_db)
        parts = lane_groups if lane_groups is not None else _lane_groups(lanes, groups)
        samples = np.zeros((n, bit_width))
        per_pass = sigma / math.sqrt(len(parts))
        for g, idx in enumerate(parts):
            partial = np.einsum("nlm,l->nm", bits[:, idx, :].astype(np.int64), ticks[idx]) / q
            stream = channel.stream(f"electrical/{g}")
            samples += partial + per_pass * stream.normals(start, n, bit_width)
    else:
        samples = _osnr_detect(bits.transpose(0, 2, 1).astype(float), weights, channel, "osnr", start)

    if channel.isi_taps:
        samples = ch.apply_isi(samples, channel.isi_taps)
    if not np.all(np.isfinite(samples)):
        raise SignalCorruptionError("non-finite detected samples")
    lo, hi = weights.bounds
    decisions = np.clip(round_half_away(samples * q), lo, hi)
    return shift_add_batch(decisions, _accumulator_dtype(bit_width, weights)), decisions


def shift_add_batch(decisions, dtype=np.int64):
    decisions = np.asarray(decisions).astype(dtype)
    m = decisions.shape[1]
    weights = np.array([1 << (m - 1 - k) for k in range(m)], dtype=dtype)
    return decisions @ weights


def analog_signal_rms(inputs, weights):
    y = np.asarray(inputs, dtype=float) @ weights.values
    return float(np.sqrt(np.mean(y**2)))


def analog_batch(inputs, weights, channel, start=0, signal_rms=None, groups=1, lane_groups=None):
    """Continuous-valued inner products ``sum_l d_l (w_l + n_l)`` for a block."""
    d = np.asarray(inputs, dtype=float)
    if d.ndim != 2 or d.shape[1] != len(weights):
        raise DimensionError(f"expected (n, {len(weights)}) inputs, got {d.shape}")
    if d.size and (d.min() < 0.0 or d.max() > 1.0):
        raise DomainError("analog inputs must lie in [0, 1]")
    n, lanes = d.shape
    w = weights.values
    if channel.is_noise_free:
        out = d @ w
    elif channel.mode == "weight-snr":
        noisy = ch.apply_weight_noise(w, channel.snr_db, channel.stream("weight"), start, n)
        out = np.einsum("nl,nl->n", d, noisy)
    elif channel.mode == "electrical-snr":
        rms = channel.reference_rms or signal_rms
        if rms is None:
            rms = analog_signal_rms(d, weights)
        sigma = ch.sigma_from_snr(rms, channel.snr_db)
        parts = lane_groups if lane_groups is not None else _lane_groups(lanes, groups)
        out = np.zeros(n)
        per_pass = sigma / math.sqrt(len(parts))
        for g, idx in enumerate(parts):
            stream = channel.stream(f"electrical/{g}")
            out += d[:, idx] @ w[idx] + per_pass * stream.normals(start, n, 1)[:, 0]
    else:
        out = _osnr_detect(d[:, None, :], weights, channel, "osnr-analog", start)[:, 0]
    if not np.all(np.isfinite(out)):
        raise SignalCorruptionError("non-finite analog output")
    return out
