import itertools
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hopsim import core
from hopsim.channel import ChannelSpec
from hopsim.errors import DimensionError, DomainError, RangeError, SignalCorruptionError
from hopsim.mrm import RingModel, mrm_bias_for_weight, mrm_weight_lookup
from hopsim.rng import seeded_generator

GOLDEN = Path(__file__).parent / "golden"


def words_of(values, m):
    return [core.BinaryWord(v, m) for v in values]


# --- encode_word / quantize_weight ------------------------------------------

def test_encode_word_examples():
    assert core.encode_word(155, 8) == [1, 0, 0, 1, 1, 0, 1, 1]
    assert core.encode_word(0, 8) == [0] * 8
    assert core.encode_word(2**16 - 1, 16) == [1] * 16


def test_encode_word_out_of_range_names_value():
    with pytest.raises(DomainError, match="256"):
        core.encode_word(256, 8)
    with pytest.raises(DomainError):
        core.BinaryWord(-1, 4)


@given(st.integers(1, 20).flatmap(lambda m: st.tuples(st.just(m), st.integers(0, 2**m - 1))))
def test_encode_word_reconstructs(mv):
    m, v = mv
    bits = core.encode_word(v, m)
    assert len(bits) == m
    assert sum(b << (m - 1 - k) for k, b in enumerate(bits)) == v


def test_bit_plane_rows_reconstruct_words():
    plane = core.bit_plane([5, 3, 0], 3)
    assert plane.tolist() == [[1, 0, 1], [0, 1, 1], [0, 0, 0]]


def test_quantize_weight_examples():
    assert core.quantize_weight(1.0, 8) == 255
    assert core.quantize_weight(-1.0, 1) == -1
    assert core.quantize_weight(0.5, 2) == 2
    assert core.quantize_weight(-0.5, 2) == -2
    with pytest.raises(DomainError):
        core.quantize_weight(1.01, 4)


def test_quantize_weight_step_positions():
    # Steps of round(3w) sit at w = (j + 0.5)/3; ties go away from zero.
    grid = np.linspace(-1, 1, 6001)
    ks = [core.quantize_weight(w, 2) for w in grid]
    assert all(b >= a for a, b in zip(ks, ks[1:]))
    for w, k in zip(grid, ks):
        x = 3 * w
        expected = int(math.copysign(math.floor(abs(x) + 0.5), x))
        assert k == expected


def test_weight_vector_bounds():
    with pytest.raises(DomainError):
        core.WeightVector((4,), 2)
    wv = core.WeightVector((-1, 0, 1, -2), 2)
    assert wv.bounds == (-3, 1)
    assert wv.grid_step == pytest.approx(1 / 3)


# --- slot levels, decision, shift-add ---------------------------------------

def test_ideal_slot_level_examples():
    assert core.ideal_slot_level((1, 1, 1), core.WeightVector((-1, 0, 1), 1)) == 0.0
    assert core.ideal_slot_level((0, 1), core.WeightVector((2, 1), 2)) == pytest.approx(1 / 3)
    assert core.ideal_slot_level((0, 0, 0), core.WeightVector((3, -2, 1), 2)) == 0.0
    with pytest.raises(DimensionError):
        core.ideal_slot_level((1, 0), core.WeightVector((1, 1, 1), 1))


def test_decide_slot_examples():
    assert core.decide_slot(0.49, 1 / 3, (-3, 3)) == 1
    assert core.decide_slot(7.2, 1.0, (-3, 3)) == 3
    step = 0.25
    assert core.decide_slot(-0.5 * step, step, (-100, 100)) == -1
    with pytest.raises(SignalCorruptionError):
        core.decide_slot(float("nan"), 1.0, (-3, 3))


@given(st.integers(-50, 50), st.integers(1, 12))
def test_decide_slot_idempotent_on_ideal_samples(k, n):
    step = 1 / (2**n - 1)
    assert core.decide_slot(k * step, step, (-50, 50)) == k


def test_shift_add_examples():
    assert core.shift_add([1, 2, 3]) == 11 == 3 * 2 + 5 * 1
    assert core.shift_add([0, 0, 0, 0]) == 0
    plane = core.bit_plane([155], 8)
    assert core.shift_add([core.slot_ticks(plane[:, k], core.WeightVector((1,), 1)) for k in range(8)]) == 155


@given(st.lists(st.tuples(st.integers(-99, 99), st.integers(-99, 99)), min_size=1, max_size=16))
def test_shift_add_linear(pairs):
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    assert core.shift_add([x + y for x, y in pairs]) == core.shift_add(a) + core.shift_add(b)


def test_shift_add_batch_is_exact_beyond_int64():
    dec = np.full((2, 40), 2**30, dtype=object)
    out = core.shift_add_batch(dec, dtype=object)
    assert out[0] == 2**30 * (2**40 - 1)


# --- hybrid inner product ----------------------------------------------------

def test_hybrid_noise_free_example():
    res = core.hybrid_inner_product(words_of((155, 3, 200), 8), core.WeightVector((-1, 0, 1), 1))
    assert res.raw_ticks == 45
    assert res.normalized == pytest.approx(45 / 255)
    assert len(res.slot_decisions) == 8


def test_hybrid_zero_weights_give_zero():
    res = core.hybrid_inner_product(words_of((255, 17, 99), 8), core.WeightVector((0, 0, 0), 3))
    assert res.raw_ticks == 0


def test_hybrid_rejects_mixed_widths():
    with pytest.raises(DimensionError):
        core.hybrid_inner_product([core.BinaryWord(3, 4), core.BinaryWord(3, 8)], core.WeightVector((1, 1), 1))


def test_bit_slice_exhaustive_small():
    # Every M <= 3, L <= 2, |k| <= 7 (the full M <= 4, L <= 3 sweep lives in the acceptance suite).
    for m, n_lanes in itertools.product(range(1, 4), range(1, 3)):
        words = np.array(list(itertools.product(range(2**m), repeat=n_lanes)))
        for ticks in itertools.product(range(-7, 8), repeat=n_lanes):
            wv = core.WeightVector(ticks, 3)
            raw, _ = core.hybrid_batch(words, m, wv, ChannelSpec.noise_free())
            assert np.array_equal(raw, words @ np.array(ticks))


@pytest.mark.parametrize("m", [1, 4, 8, 12, 16])
def test_precision_independence(m):
    rng = seeded_generator(3, f"precision-{m}")
    words = rng.integers(0, 2**m, (500, 9))
    wv = core.WeightVector((3, -7, 0, 5, 1, -2, 7, -7, 4), 3)
    raw, _ = core.hybrid_batch(words, m, wv, ChannelSpec.noise_free())
    assert np.array_equal(raw, words @ np.array(wv.ticks))


def test_identity_operator_scales_input():
    n = 5
    wv = core.WeightVector((2**n - 1,), n)
    words = np.arange(256)[:, None]
    raw, _ = core.hybrid_batch(words, 8, wv, ChannelSpec.noise_free())
    assert np.array_equal(raw, words[:, 0] * (2**n - 1))


def test_hybrid_weight_snr_golden_agreement():
    gold = json.loads((GOLDEN / "hybrid_agreement.json").read_text())
    words = seeded_generator(gold["seed"], gold["words_stream"]).integers(0, 256, (gold["n_words"], 9))
    wv = core.WeightVector(tuple(gold["ticks"]), gold["resolution"])
    oracle = words @ np.array(wv.ticks)
    raw, _ = core.hybrid_batch(words, 8, wv, ChannelSpec.weight(gold["snr_db"], seed=gold["seed"]))
    agreement = float(np.mean(raw == oracle))
    assert agreement >= 0.999
    assert agreement == gold["results"]["weight-snr"]["agreement"]


def test_hybrid_batch_independent_of_chunking():
    words = seeded_generator(0, "chunk").integers(0, 256, (1000, 9))
    wv = core.WeightVector((-1, 0, 1) * 3, 1)
    ch = ChannelSpec.weight(18, seed=5)
    whole, _ = core.hybrid_batch(words, 8, wv, ch)
    parts = [core.hybrid_batch(words[s:s + 137], 8, wv, ch, start=s)[0] for s in range(0, 1000, 137)]
    assert np.array_equal(whole, np.concatenate(parts))


def test_scalar_and_batch_paths_agree():
    words = seeded_generator(2, "scalar").integers(0, 256, (50, 3))
    wv = core.WeightVector((-1, 0, 1), 1)
    ch = ChannelSpec.weight(12, seed=9)
    batch, _ = core.hybrid_batch(words, 8, wv, ch)
    for i, row in enumerate(words):
        assert core.hybrid_inner_product(words_of(row, 8), wv, ch, word_index=i).raw_ticks == batch[i]


# --- analog inner product ------------------------------------------------------

def test_analog_noise_free_examples():
    assert core.analog_inner_product((1, 1, 1), core.WeightVector((-1, 0, 1), 1)) == pytest.approx(0.0)
    assert core.analog_inner_product((0.5, 0.25), core.WeightVector((1, 1), 1)) == pytest.approx(0.75)
    with pytest.raises(DomainError):
        core.analog_inner_product((1.5, 0.0), core.WeightVector((1, 1), 1))


def test_analog_noise_sigma_in_range():
    # Uniform inputs, Prewitt weights, 25 dB: error in units of the output full scale (3).
    d = seeded_generator(4, "analog-inputs").uniform(0, 1, (100_000, 9))
    wv = core.WeightVector((-1, 0, 1) * 3, 1)
    y = core.analog_batch(d, wv, ChannelSpec.weight(25, seed=4))
    err = (y - d @ wv.values) / 3.0
    assert 0.015 <= err.std() <= 0.045


# --- ring modulator lookup ----------------------------------------------------

def test_mrm_symmetry_point_is_zero_weight():
    m = RingModel()
    assert mrm_weight_lookup(m.symmetry_point, m) == pytest.approx(0.0, abs=1e-12)


def test_mrm_range_covers_unit_interval():
    lo, hi = RingModel().weight_range
    assert lo < -1 and hi > 1


def test_mrm_round_trip_per_slope():
    m = RingModel()
    lo, hi = m.weight_range
    for w in np.concatenate([np.linspace(lo * 0.999, -1e-3, 100), np.linspace(1e-3, hi * 0.999, 100)]):
        x = mrm_bias_for_weight(w, m)
        assert abs(mrm_weight_lookup(x, m) - w) < 1e-6


def test_mrm_sign_flips_between_sides():
    m = RingModel()
    assert np.sign(mrm_bias_for_weight(0.5, m) - m.symmetry_point) != np.sign(
        mrm_bias_for_weight(-0.5, m) - m.symmetry_point)


def test_mrm_strictly_monotone_per_slope():
    m = RingModel()
    d_lo, d_hi = m.tuning_range
    xs = np.linspace(d_lo, d_hi, 2001)
    ws = np.array([mrm_weight_lookup(x, m) for x in xs])
    assert np.all(np.diff(ws) != 0)
    sign_changes = np.sum(np.diff(np.sign(np.diff(ws))) != 0)
    assert sign_changes == 0


def test_mrm_out_of_range_reports_bounds():
    m = RingModel()
    with pytest.raises(RangeError) as exc:
        mrm_bias_for_weight(5.0, m)
    assert exc.value.lo == pytest.approx(m.weight_range[0])
    assert exc.value.hi == pytest.approx(m.weight_range[1])
    with pytest.raises(DomainError):
        mrm_weight_lookup(m.tuning_range[1] + 1.0, m)
