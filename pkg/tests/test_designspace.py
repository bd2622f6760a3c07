import math

import pytest

from hopsim import designspace as ds
from hopsim.errors import ConfigError

from reference_tables import compare


def test_level_counts():
    assert ds.levels_analog(9, 8, 8, True) == 585226
    assert ds.levels_hybrid(9, 1, True) == 10
    assert ds.levels_hybrid(1, 1, False) == 1


def test_enob_examples():
    assert round(ds.enob(ds.levels_analog(9, 8, 8)), 1) == 19.2
    assert round(ds.enob(ds.levels_hybrid(9, 8)), 1) == 11.2
    assert round(ds.enob(ds.levels_hybrid(9, 1)), 1) == 3.3
    assert ds.enob(ds.levels_hybrid(9, 1, include_zero=False)) == pytest.approx(3.17, abs=0.005)


def test_adc_rates():
    assert ds.adc_max_rate(2296) == pytest.approx(2.18e9, rel=2e-3)
    assert ds.adc_max_rate(585226) == pytest.approx(8.54e6, rel=1e-3)
    assert ds.adc_max_rate(1) == 5e12


def test_system_speed_examples():
    speed = ds.system_speed(ds.adc_max_rate(ds.levels_analog(9, 3, 3)), 40e9)
    assert speed == pytest.approx(11.3e9, rel=0.01)
    assert ds.system_speed(ds.adc_max_rate(ds.levels_hybrid(9, 2)), 40e9) == 40e9
    assert ds.system_speed(7.0, 7.0) == 7.0


def test_tops_examples():
    assert ds.tops_analog(9, 11.3e9) == pytest.approx(0.1, rel=0.02)
    assert ds.tops_hybrid(9, 5e12 / 2296, 8) == pytest.approx(2.5e-3, rel=0.03)
    assert ds.tops_hybrid(9, 40e9, 8) == pytest.approx(4.5e-2)


def test_tables_match_published_cells():
    assert compare(ds.generate_tables()) == []


def test_crossing_at_three_bits():
    assert ds.tops_crossing(ds.generate_tables(40e9)) == 3


def test_tops_independent_of_lanes_when_adc_bound():
    vals = [ds.DesignPoint(L, 8, 8, include_zero=False).analog()[2] for L in (4, 9, 16, 64)]
    assert max(vals) == pytest.approx(min(vals))


def test_enob_analog_at_least_hybrid():
    for L in (1, 9):
        for m in range(1, 9):
            for n in range(1, 9):
                a = ds.enob(ds.levels_analog(L, m, n, False))
                h = ds.enob(ds.levels_hybrid(L, n, False))
                assert a >= h
                assert (a == h) == (m == 1)


def test_adc_rate_strictly_decreasing():
    rates = [ds.adc_max_rate(n) for n in range(1, 200)]
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_tables_byte_stable():
    assert ds.rows_to_csv(ds.generate_tables()) == ds.rows_to_csv(ds.generate_tables())
    text = ds.rows_to_csv(ds.generate_tables())
    assert text.splitlines()[0] == ",".join(ds.CSV_FIELDS)
    assert len(text.splitlines()) == 17


def test_invalid_design_point():
    with pytest.raises(ConfigError):
        ds.DesignPoint(0, 1, 1)
    with pytest.raises(ConfigError):
        ds.DesignPoint(9, 1, 1, io_rate=-1)
