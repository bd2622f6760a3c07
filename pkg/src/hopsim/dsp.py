"""Receiver DSP: fractionally spaced LMS feedforward equalizer, low-pass
filtering and resampling, plus the oversampled demo link that exercises them.

Equalizer convention: with ``c = n_taps // 2``, symbol ``n`` is estimated as
``y[n] = sum_j taps[j] * rx[n*spacing + phase - c + j]`` where samples
outside ``rx`` read as zero. ``equalize`` therefore returns exactly
``len(rx) // spacing`` symbols (no edge trim).
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .channel import apply_isi, sigma_from_snr
from .errors import ConfigError, TrainingDivergedError, UsageError
from .rng import seeded_generator

DEFAULT_TAPS = 51
DEFAULT_SPACING = 2
DEFAULT_MU = 1e-3
DEFAULT_TRAINING_SYMBOLS = 10_000
DIVERGENCE_WINDOW = 100
DIVERGENCE_FACTOR = 10.0


@dataclass
class EqualizerState:
    taps: np.ndarray
    spacing: int = DEFAULT_SPACING
    mu: float = DEFAULT_MU
    phase: int = 0
    trained: bool = False
    mse_curve: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.taps.size % 2 == 0:
            raise ConfigError(f"tap count must be odd, got {self.taps.size}")

    @classmethod
    def center_spike(cls, n_taps=DEFAULT_TAPS, **kw):
        taps = np.zeros(n_taps)
        taps[n_taps // 2] = 1.0
        return cls(taps, **kw)

    @property
    def final_mse(self):
        tail = self.mse_curve[-min(len(self.mse_curve), 1000):]
        return float(np.mean(tail))


def _windows(rx, n_taps, spacing, phase, n_symbols):
    c = n_taps // 2
    padded = np.concatenate([np.zeros(c), np.asarray(rx, dtype=float), np.zeros(c + spacing)])
    win = np.lib.stride_tricks.sliding_window_view(padded, n_taps)
    return win[phase::spacing][:n_symbols]


def lms_train(rx, reference, n_taps=DEFAULT_TAPS, spacing=DEFAULT_SPACING, mu=DEFAULT_MU, phase=0,
              init=None):
    """Train FFE taps on a known symbol sequence with the LMS update
    ``taps += mu * e_n * window_n``.

    Raises ``TrainingDivergedError`` when the running MSE over the last 100
    symbols stays above 10x the initial MSE for 100 consecutive symbols.
    """
    reference = np.asarray(reference, dtype=float)
    rx = np.asarray(rx, dtype=float)
    if len(rx) < spacing * len(reference):
        raise ConfigError(f"need {spacing * len(reference)} samples for {len(reference)} symbols, got {len(rx)}")
    if mu < 0:
        raise ConfigError(f"step size must be non-negative, got {mu}")
    state = init if init is not None else EqualizerState.center_spike(n_taps, spacing=spacing, mu=mu, phase=phase)
    taps = state.taps.copy()
    windows = _windows(rx, taps.size, spacing, phase, len(reference))
    sq = np.empty(len(reference))
    recent = deque(maxlen=DIVERGENCE_WINDOW)
    running = 0.0
    initial = None
    above = 0
    for n, (win, ref) in enumerate(zip(windows, reference)):
        e = ref - taps @ win
        if not abs(e) < 1e150:
            raise TrainingDivergedError(f"error magnitude {e:.3g} at symbol {n} (mu={mu})")
        taps += mu * e * win
        e2 = e * e
        sq[n] = e2
        if len(recent) == recent.maxlen:
            running -= recent[0]
        recent.append(e2)
        running += e2
        if n + 1 == DIVERGENCE_WINDOW:
            initial = running / DIVERGENCE_WINDOW
        elif initial is not None:
            above = above + 1 if running / DIVERGENCE_WINDOW > DIVERGENCE_FACTOR * initial else 0
            if above >= DIVERGENCE_WINDOW:
                raise TrainingDivergedError(
                    f"LMS diverged at symbol {n}: running MSE {running / DIVERGENCE_WINDOW:.3g} "
                    f"vs initial {initial:.3g} (mu={mu}, taps={taps.size})")
    return EqualizerState(taps, spacing=spacing, mu=mu, phase=phase, trained=True, mse_curve=sq)


def equalize(state, rx):
    if not state.trained:
        raise UsageError("equalizer has not been trained")
    n_symbols = len(rx) // state.spacing
    return _windows(rx, state.taps.size, state.spacing, state.phase, n_symbols) @ state.taps


def lowpass_taps(cutoff, n_taps=63, samples_per_symbol=2):
    """Hamming-windowed sinc, unit DC gain. ``cutoff`` is a fraction of the
    symbol rate (at 2 samples/symbol that is a fraction of Nyquist)."""
    if not 0 < cutoff < 1:
        raise ConfigError(f"cutoff must be in (0, 1), got {cutoff}")
    if n_taps % 2 == 0:
        raise ConfigError("low-pass tap count must be odd")
    nyq_fraction = cutoff * 2.0 / samples_per_symbol
    if not nyq_fraction < 1:
        raise ConfigError(f"cutoff {cutoff} exceeds Nyquist at {samples_per_symbol} samples/symbol")
    h = signal.firwin(n_taps, nyq_fraction, window="hamming")
    return h / h.sum()


def lowpass_fir(samples, cutoff, n_taps=63, samples_per_symbol=2):
    """Zero-phase (delay-compensated) FIR low-pass, same length as the input.
    Edges are extended with the end values, which keeps DC exact."""
    h = lowpass_taps(cutoff, n_taps, samples_per_symbol)
    x = np.asarray(samples, dtype=float)
    c = n_taps // 2
    return np.convolve(np.pad(x, c, mode="edge"), h, mode="valid")


def resample(samples, up, down):
    return signal.resample_poly(np.asarray(samples, dtype=float), up, down)


def decide_levels(samples, levels):
    """Nearest-level decisions; returns level indices."""
    levels = np.asarray(levels, dtype=float)
    return np.abs(np.asarray(samples)[:, None] - levels[None, :]).argmin(axis=1)


@dataclass
class DemoResult:
    pre_mse: float
    post_mse: float
    pre_ser: float
    post_ser: float
    state: EqualizerState
    n_test: int

    @property
    def mse_ratio(self):
        return self.post_mse / self.pre_mse


def pam_levels(n_levels=7):
    """Symmetric PAM grid scaled to [-1, 1]; 7 levels matches a 3-lane +/-1 kernel."""
    k = np.arange(n_levels) - (n_levels - 1) / 2
    return k / k.max()


def eq_demo(isi_taps=(1.0, 0.4, 0.2), snr_db=30.0, n_taps=DEFAULT_TAPS, mu=DEFAULT_MU,
            n_train=DEFAULT_TRAINING_SYMBOLS, n_test=20_000, n_levels=7, seed=0, lowpass_cutoff=None):
    """Oversampled PAM link: hold each symbol for 2 samples, apply sample-rate
    ISI, add AWGN (SNR against the distorted signal), optionally low-pass,
    then train on the first ``n_train`` symbols and score the rest."""
    levels = pam_levels(n_levels)
    rng = seeded_generator(seed, "eq-demo")
    idx = rng.integers(0, n_levels, n_train + n_test)
    symbols = levels[idx]
    tx = np.repeat(symbols, DEFAULT_SPACING)
    distorted = apply_isi(tx, isi_taps)
    sigma = sigma_from_snr(float(np.sqrt(np.mean(distorted**2))), snr_db)
    rx = distorted + sigma * rng.standard_normal(distorted.size)
    if lowpass_cutoff is not None:
        rx = lowpass_fir(rx, lowpass_cutoff)
    split = n_train * DEFAULT_SPACING
    state = lms_train(rx[:split], symbols[:n_train], n_taps=n_taps, mu=mu)
    test_rx = rx[split:]
    test_ref = symbols[n_train:]
    raw = test_rx[::DEFAULT_SPACING][: len(test_ref)]
    eq = equalize(state, test_rx)[: len(test_ref)]
    truth = idx[n_train:]
    return DemoResult(
        pre_mse=float(np.mean((raw - test_ref) ** 2)),
        post_mse=float(np.mean((eq - test_ref) ** 2)),
        pre_ser=float(np.mean(decide_levels(raw, levels) != truth)),
        post_ser=float(np.mean(decide_levels(eq, levels) != truth)),
        state=state,
        n_test=n_test,
    )


def mse_curve_rows(curve, block=100):
    """(symbol_index, mean squared error) averaged over blocks of ``block`` symbols."""
    n = len(curve) // block
    means = np.asarray(curve[: n * block]).reshape(n, block).mean(axis=1)
    return [((i + 1) * block, float(m)) for i, m in enumerate(means)]
