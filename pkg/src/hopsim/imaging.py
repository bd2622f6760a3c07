"""Image-convolution workload on the simulated cores.

Images are binary Netpbm (P5 grey / P6 RGB) at 8 or 16 bits. Convolution is
3x3, stride 1, no padding, so an ``H x W`` image gives ``(H-2) x (W-2)``
outputs. Patches are flattened row-major into 9 lanes.

Normalization: inputs ``d = D / (2^depth - 1)``, weights
``ticks / max|tick|``. Error statistics are expressed relative to the
kernel's output full scale ``max(sum of positive ticks, -sum of negative
ticks) / max|tick|`` so normalized outputs lie in [-1, 1].
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import core
from .channel import ChannelSpec
from .errors import ConfigError, DimensionError, FormatError, UnknownKernelError
from .metrics import error_report
from .rng import seeded_generator

CHUNK_WORDS = 1 << 15


@dataclass
class Image:
    pixels: np.ndarray  # (H, W) or (H, W, 3), unsigned
    depth: int

    def __post_init__(self):
        if self.depth not in (8, 16):
            raise ConfigError(f"unsupported depth {self.depth}; use 8 or 16")
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim not in (2, 3) or (self.pixels.ndim == 3 and self.pixels.shape[2] != 3):
            raise DimensionError(f"bad pixel array shape {self.pixels.shape}")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() >= 2**self.depth):
            raise ConfigError(f"pixel values exceed {self.depth}-bit range")
        self.pixels = self.pixels.astype(np.uint16 if self.depth == 16 else np.uint8)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def channels(self):
        return 1 if self.pixels.ndim == 2 else 3

    @property
    def maxval(self):
        return 2**self.depth - 1


@dataclass(frozen=True)
class Kernel:
    name: str
    ticks: tuple  # 3 rows of 3 signed ints

    @property
    def matrix(self):
        return np.array(self.ticks, dtype=np.int64)

    @property
    def flat(self):
        return self.matrix.ravel()

    @property
    def norm(self):
        return int(np.abs(self.matrix).max())

    @property
    def full_scale(self):
        """Largest |output| for inputs in [0, 1], in normalized weight units."""
        f = self.flat
        return max(f[f > 0].sum(), -f[f < 0].sum()) / self.norm

    def weight_vector(self):
        return core.WeightVector.for_ticks(tuple(int(t) for t in self.flat))


_PREWITT_V = ((-1, 0, 1), (-1, 0, 1), (-1, 0, 1))

KERNELS = {
    "prewitt_v": _PREWITT_V,
    "prewitt_h": tuple(zip(*_PREWITT_V)),
    "prewitt_p45": ((0, 1, 1), (-1, 0, 1), (-1, -1, 0)),
    "prewitt_m45": ((-1, -1, 0), (-1, 0, 1), (0, 1, 1)),
    "sobel_v": ((-1, 0, 1), (-2, 0, 2), (-1, 0, 1)),
    "laplace_d4": ((0, 1, 0), (1, -4, 1), (0, 1, 0)),
    "sharpen_d4": ((0, -1, 0), (-1, 5, -1), (0, -1, 0)),
    "identity": ((0, 0, 0), (0, 1, 0), (0, 0, 0)),
}

# The six operators exercised by the image workloads.
REGISTRY_KERNELS = ("prewitt_v", "prewitt_h", "sobel_v", "laplace_d4", "sharpen_d4", "identity")
COMPASS_KERNELS = ("prewitt_v", "prewitt_h", "prewitt_p45", "prewitt_m45")


def kernel(name):
    try:
        return Kernel(name, KERNELS[name])
    except KeyError:
        raise UnknownKernelError(f"unknown kernel {name!r}; known: {', '.join(sorted(KERNELS))}") from None


# --- Netpbm I/O -------------------------------------------------------------

def _read_token(data, pos):
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise FormatError("truncated Netpbm header", start)
    return data[start:pos], pos


def parse_netpbm(data):
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise FormatError(f"not a binary PGM/PPM file (magic {data[:2]!r})", 0)
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    fields = []
    for name in ("width", "height", "maxval"):
        tok, end = _read_token(data, pos)
        try:
            v = int(tok)
        except ValueError:
            raise FormatError(f"bad {name} {tok!r}", pos) from None
        if v <= 0:
            raise FormatError(f"{name} must be positive, got {v}", pos)
        fields.append(v)
        pos = end
    width, height, maxval = fields
    if maxval not in (255, 65535):
        raise FormatError(f"unsupported maxval {maxval} (need 255 or 65535)", pos)
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError("missing whitespace after maxval", pos)
    pos += 1
    depth = 8 if maxval == 255 else 16
    nbytes = width * height * channels * (depth // 8)
    payload = data[pos:pos + nbytes]
    if len(payload) < nbytes:
        raise FormatError(f"truncated pixel data: expected {nbytes} bytes, got {len(payload)}", pos + len(payload))
    dtype = ">u2" if depth == 16 else np.uint8
    px = np.frombuffer(payload, dtype=dtype).astype(np.uint16 if depth == 16 else np.uint8)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return Image(px.reshape(shape), depth)


def load_image(path):
    with open(path, "rb") as f:
        return parse_netpbm(f.read())


def encode_netpbm(img):
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n%d\n" % (magic, img.width, img.height, img.maxval)
    dtype = ">u2" if img.depth == 16 else np.uint8
    return header + img.pixels.astype(dtype).tobytes()


def save_image(img, path):
    with open(path, "wb") as f:
        f.write(encode_netpbm(img))


def synthetic_image(height=300, width=451, depth=8, seed=2024, channels=1):
    """Deterministic stand-in photograph: smooth gradients, a few blocks and
    edges, and mild pixel noise, centred on mid-grey."""
    rng = seeded_generator(seed, "test-image")
    y, x = np.mgrid[0:height, 0:width].astype(float)
    planes = []
    for c in range(channels):
        base = 0.5 + 0.12 * np.sin(2 * np.pi * x / (width / 1.7) + c) * np.cos(2 * np.pi * y / (height / 1.3))
        base += 0.08 * (x / width - 0.5) + 0.06 * (y / height - 0.5)
        for _ in range(6):
            r0, c0 = rng.integers(0, height), rng.integers(0, width)
            h, w = rng.integers(height // 10, height // 3), rng.integers(width // 10, width // 3)
            base[r0:r0 + h, c0:c0 + w] += rng.uniform(-0.1, 0.1)
        base += rng.normal(0.0, 0.04, size=base.shape)
        planes.append(np.clip(base, 0.0, 1.0))
    arr = np.stack(planes, axis=-1) if channels == 3 else planes[0]
    maxval = 2**depth - 1
    return Image(np.round(arr * maxval).astype(np.int64), depth)


# --- convolution ------------------------------------------------------------

def extract_patches(pixels, size=3):
    """``(n, 9)`` row-major patches of a single-channel array, output-pixel order."""
    a = np.asarray(pixels)
    if a.ndim != 2:
        raise DimensionError("extract_patches works on one channel at a time")
    h, w = a.shape
    if h < size or w < size:
        raise DimensionError(f"image {h}x{w} smaller than the {size}x{size} kernel")
    win = np.lib.stride_tricks.sliding_window_view(a, (size, size))
    return win.reshape(-1, size * size)


def output_shape(height, width):
    return height - 2, width - 2


def _channels(img):
    if img.channels == 1:
        return [img.pixels]
    return [img.pixels[..., c] for c in range(3)]


def _stack(maps, img):
    return maps[0] if img.channels == 1 else np.stack(maps, axis=-1)


def convolve_oracle(img, kern):
    """Exact integer valid convolution (correlation orientation, as the
    lanes multiply patch element ``i`` by kernel element ``i``)."""
    maps = []
    for plane in _channels(img):
        patches = extract_patches(plane).astype(np.int64)
        maps.append((patches @ kern.flat).reshape(output_shape(*plane.shape)))
    return _stack(maps, img)


def split_measurements(kern, groups=3):
    """Lane index sets for measuring a 3x3 kernel in ``groups`` passes.

    Three groups are the kernel columns; nine is one lane per pass.
    """
    if groups not in (1, 3, 9):
        raise ConfigError(f"split groups must divide 9 (1, 3 or 9), got {groups}")
    n = kern.flat.size
    if groups == 1:
        return [np.arange(n)]
    return [np.arange(g, n, groups) for g in range(groups)]


@dataclass
class ConvolutionResult:
    output: np.ndarray  # integer map (hybrid) or real map in raw units (analog)
    oracle: np.ndarray
    report: object
    scheme: str
    meta: dict = field(default_factory=dict)

    @property
    def errors(self):
        """Output minus oracle, relative to the kernel full scale."""
        return (self.output.astype(float) - self.oracle.astype(float)) / self.meta["error_scale"]


def convolve_sim(img, kern, channel=None, scheme="hybrid", split_groups=1, bins=101, chunk=CHUNK_WORDS):
    """Convolve ``img`` with ``kern`` on the simulated core.

    Hybrid outputs are integers directly comparable with the oracle. Analog
    outputs are real and rescaled to the oracle's raw units. Output word
    indices run over all channels in order (channel-major), so every pixel of
    every channel has its own noise stream.
    """
    channel = channel or ChannelSpec.noise_free()
    if scheme not in ("hybrid", "analog"):
        raise ConfigError(f"scheme must be 'hybrid' or 'analog', got {scheme!r}")
    wv = kern.weight_vector()
    groups = split_measurements(kern, split_groups)
    maxval = img.maxval
    planes = _channels(img)
    patches = [extract_patches(p).astype(np.int64) for p in planes]
    all_patches = np.concatenate(patches)
    n_words = all_patches.shape[0]

    # Workload reference level for electrical SNR, computed once per run.
    rms = None
    if channel.mode == "electrical-snr" and channel.reference_rms is None:
        if scheme == "hybrid":
            sq = 0.0
            for s in range(0, n_words, chunk):
                t = core.ideal_slot_ticks(all_patches[s:s + chunk], img.depth, wv).astype(float) / wv.scale
                sq += float(np.sum(t * t))
            rms = math.sqrt(sq / (n_words * img.depth))
        else:
            rms = core.analog_signal_rms(all_patches / maxval, wv)

    if scheme == "hybrid":
        out = np.empty(n_words, dtype=np.int64)
        for s in range(0, n_words, chunk):
            raw, _ = core.hybrid_batch(all_patches[s:s + chunk], img.depth, wv, channel, start=s,
                                       signal_rms=rms, lane_groups=groups)
            out[s:s + chunk] = raw
    else:
        out = np.empty(n_words, dtype=float)
        for s in range(0, n_words, chunk):
            y = core.analog_batch(all_patches[s:s + chunk] / maxval, wv, channel, start=s,
                                  signal_rms=rms, lane_groups=groups)
            # back to raw oracle units: y is in 1/(2^N - 1) weight ticks
            out[s:s + chunk] = y * maxval * wv.scale

    oracle = all_patches @ kern.flat
    oh, ow = output_shape(img.height, img.width)
    maps = np.split(out, len(planes))
    oracle_maps = np.split(oracle, len(planes))
    out_map = _stack([m.reshape(oh, ow) for m in maps], img)
    oracle_map = _stack([m.reshape(oh, ow) for m in oracle_maps], img)

    scale = maxval * kern.norm * kern.full_scale
    if scheme == "hybrid":
        report = error_report(oracle, out, oracle, out, scale=scale, bins=bins)
    else:
        report = error_report(oracle, out, scale=scale, bins=bins)
    meta = {
        "scheme": scheme,
        "kernel": kern.name,
        "kernel_ticks": [list(r) for r in kern.ticks],
        "weight_resolution_bits": wv.resolution,
        "depth": img.depth,
        "split_groups": split_groups,
        "input_shape": list(img.pixels.shape),
        "output_shape": list(out_map.shape),
        "error_scale": scale,
        "signal_rms": rms,
        "channel": channel.describe(),
    }
    report.extra.update({"error_units": "fraction of kernel output full scale"})
    return ConvolutionResult(out_map, oracle_map, report, scheme, meta)


def export_signed_map(values, path_pgm, path_sidecar, depth=16):
    """Offset-shifted PGM of a signed map plus a JSON sidecar with the affine
    mapping ``value = stored * scale + minimum``.

    ``scale`` is 1 when the value span fits the depth, so the map is exact;
    wider spans are compressed (the CSV export stays exact).
    """
    v = np.asarray(values, dtype=np.int64)
    lo, hi = int(v.min()), int(v.max())
    maxval = 2**depth - 1
    scale = 1.0 if hi - lo <= maxval else (hi - lo) / maxval
    stored = np.round((v - lo) / scale).astype(np.int64)
    save_image(Image(stored, depth), path_pgm)
    sidecar = {"mapping": "value = stored * scale + minimum", "minimum": lo, "maximum": hi,
               "scale": scale, "depth": depth, "exact": scale == 1.0}
    with open(path_sidecar, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    return sidecar


def export_csv(values, path):
    v = np.asarray(values)
    fmt = "%d" if np.issubdtype(v.dtype, np.integer) else "%.17g"
    np.savetxt(path, v.reshape(v.shape[0], -1), fmt=fmt, delimiter=",")
