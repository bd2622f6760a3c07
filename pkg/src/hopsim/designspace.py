"""ADC resolution / sampling-rate / throughput trade-offs for the analog and
hybrid MVM schemes.

Level counts include the zero level by default (``include_zero=True``),
which is what the published tables use; pass ``include_zero=False`` for
the bare ``L (2^M - 1)(2^N - 1)`` count. Throughput counts one MAC as one
operation.
"""

import csv
import io
import json
import math
from dataclasses import dataclass

from .errors import ConfigError

DEFAULT_C = 5e12  # ADC speed-resolution constant, samples/s x levels
DEFAULT_IO_RATE = 40e9
DEFAULT_LANES = 9
DEFAULT_P_DATA = 8

CSV_FIELDS = ("scheme", "precision_bits", "enob_raw", "enob_display", "adc_rate_hz",
              "io_rate_hz", "system_speed_hz", "tops")


@dataclass(frozen=True)
class DesignPoint:
    L: int
    M: int
    N: int
    io_rate: float = DEFAULT_IO_RATE
    c: float = DEFAULT_C
    include_zero: bool = True
    p_data: int = DEFAULT_P_DATA

    def __post_init__(self):
        if min(self.L, self.M, self.N, self.p_data) < 1:
            raise ConfigError(f"L, M, N and p_data must be >= 1: {self}")
        if not (self.io_rate > 0 and self.c > 0):
            raise ConfigError(f"io_rate and c must be positive: {self}")

    def analog(self):
        levels = levels_analog(self.L, self.M, self.N, self.include_zero)
        speed = system_speed(adc_max_rate(levels, self.c), self.io_rate)
        return levels, speed, tops_analog(self.L, speed)

    def hybrid(self):
        levels = levels_hybrid(self.L, self.N, self.include_zero)
        speed = system_speed(adc_max_rate(levels, self.c), self.io_rate)
        return levels, speed, tops_hybrid(self.L, speed, self.p_data)


def levels_analog(L, M, N, include_zero=True):
    return L * (2**M - 1) * (2**N - 1) + int(include_zero)


def levels_hybrid(L, N, include_zero=True):
    return L * (2**N - 1) + int(include_zero)


def enob(levels):
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    return math.log2(levels)


def adc_max_rate(levels, c=DEFAULT_C):
    if levels < 1:
        raise ConfigError(f"levels must be >= 1, got {levels}")
    return c / levels


def system_speed(adc_rate, io_rate):
    if not (adc_rate > 0 and io_rate > 0):
        raise ConfigError("rates must be positive")
    return min(adc_rate, io_rate)


def tops_analog(L, speed):
    return L * speed / 1e12


def tops_hybrid(L, speed, p_data=DEFAULT_P_DATA):
    return L * speed / (p_data * 1e12)


def generate_tables(io_rate=DEFAULT_IO_RATE, precisions=range(1, 9), L=DEFAULT_LANES, c=DEFAULT_C,
                    include_zero=True, p_data=DEFAULT_P_DATA):
    """Rows for both schemes; every precision column uses M = N = precision."""
    rows = []
    for scheme in ("analog", "hybrid"):
        for p in precisions:
            pt = DesignPoint(L, p, p, io_rate, c, include_zero, p_data)
            levels, speed, tops = pt.analog() if scheme == "analog" else pt.hybrid()
            e = enob(levels)
            rows.append({
                "scheme": scheme,
                "precision_bits": p,
                "enob_raw": e,
                "enob_display": round(e, 1),
                "adc_rate_hz": adc_max_rate(levels, c),
                "io_rate_hz": float(io_rate),
                "system_speed_hz": speed,
                "tops": tops,
            })
    return rows


def tops_crossing(rows):
    """Last precision at which analog throughput is at least the hybrid's.

    Returns ``None`` when one scheme dominates over the whole sweep.
    """
    a = {r["precision_bits"]: r["tops"] for r in rows if r["scheme"] == "analog"}
    h = {r["precision_bits"]: r["tops"] for r in rows if r["scheme"] == "hybrid"}
    ps = sorted(set(a) & set(h))
    for p, nxt in zip(ps, ps[1:]):
        if a[p] >= h[p] and a[nxt] < h[nxt]:
            return p
    return None


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def rows_to_json(rows, **meta):
    return json.dumps({"meta": meta, "rows": rows}, indent=2, sort_keys=True)


def convention_metadata(L=DEFAULT_LANES, c=DEFAULT_C, include_zero=True, p_data=DEFAULT_P_DATA):
    return {
        "L": L,
        "c_samples_per_s_levels": c,
        "include_zero_level": include_zero,
        "hybrid_p_data": p_data,
        "ops_per_mac": 1,
        "precision_column": "M = N = precision",
    }
