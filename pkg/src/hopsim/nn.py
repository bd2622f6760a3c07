"""MNIST CNN whose convolution layer can run on the simulated hybrid core.

Network: 4 Prewitt compass kernels (valid, stride 1) -> ReLU -> 2x2 max-pool
-> flatten (row, column, kernel fastest) -> fc 676x100 -> ReLU -> fc 100x10.
Conv outputs are normalized as ``raw / (255 * max|tick|)``.

Noise streams: kernel ``k`` uses a channel seed derived from the run seed
and ``k``; within it, output word ``image_index * 676 + patch`` owns its
own counter block, so results do not depend on batch size.
"""

import hashlib
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import core
from .channel import ChannelSpec
from .errors import ConfigError, DimensionError, FormatError, TrainingDivergedError
from .imaging import COMPASS_KERNELS, kernel
from .rng import seeded_generator

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
SIDE = 28
CONV_SIDE = SIDE - 2
POOL_SIDE = CONV_SIDE // 2
N_KERNELS = 4
FC1_IN = POOL_SIDE * POOL_SIDE * N_KERNELS  # 676
FC1_OUT = 100
FC2_OUT = 10
WEIGHTS_MAGIC = b"HOPCNN01"
PATCHES = CONV_SIDE * CONV_SIDE


@dataclass
class MnistSet:
    images: np.ndarray  # (n, 28, 28) uint8
    labels: np.ndarray  # (n,) uint8

    def __len__(self):
        return len(self.labels)

    def subset(self, limit):
        return MnistSet(self.images[:limit], self.labels[:limit])


def _parse_idx(data, magic, what):
    if len(data) < 8:
        raise FormatError(f"{what} file truncated in header: {len(data)} bytes", len(data))
    got = struct.unpack(">I", data[:4])[0]
    if got != magic:
        raise FormatError(f"bad magic 0x{got:08x} in {what} file (expected 0x{magic:08x})", 0)
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise FormatError(f"{what} file truncated in header: {len(data)} bytes", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:head])
    size = int(np.prod(dims))
    payload = data[head:head + size]
    if len(payload) < size:
        raise FormatError(f"{what} payload truncated: expected {size} bytes, got {len(payload)}", head + len(payload))
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def parse_mnist(image_bytes, label_bytes):
    images = _parse_idx(image_bytes, IMAGE_MAGIC, "image")
    if images.shape[1:] != (SIDE, SIDE):
        raise FormatError(f"image dimensions {images.shape[1:]} are not 28x28", 8)
    labels = _parse_idx(label_bytes, LABEL_MAGIC, "label")
    if labels.shape[0] != images.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels", 4)
    if labels.size and labels.max() > 9:
        raise FormatError(f"label {labels.max()} outside [0, 10)", 8 + int(labels.argmax()))
    return MnistSet(images.copy(), labels.copy())


def load_mnist(images_path, labels_path):
    with open(images_path, "rb") as f:
        ib = f.read()
    with open(labels_path, "rb") as f:
        lb = f.read()
    return parse_mnist(ib, lb)


def encode_idx_images(images):
    images = np.asarray(images, dtype=np.uint8)
    return struct.pack(">IIII", IMAGE_MAGIC, *images.shape) + images.tobytes()


def encode_idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", LABEL_MAGIC, labels.size) + labels.tobytes()


# Seven-segment strokes in a unit box (x right, y down).
_SEGMENTS = {
    "a": ((0.0, 0.0), (1.0, 0.0)), "b": ((1.0, 0.0), (1.0, 0.5)), "c": ((1.0, 0.5), (1.0, 1.0)),
    "d": ((0.0, 1.0), (1.0, 1.0)), "e": ((0.0, 0.5), (0.0, 1.0)), "f": ((0.0, 0.0), (0.0, 0.5)),
    "g": ((0.0, 0.5), (1.0, 0.5)),
}
_DIGITS = ("abcdef", "bc", "abged", "abgcd", "fgbc", "afgcd", "afgedc", "abc", "abcdefg", "abcdfg")


def synthetic_digits(n, seed=0):
    """MNIST-shaped stand-in: jittered, slanted seven-segment digits with
    anti-aliased strokes on a black background."""
    rng = seeded_generator(seed, "synthetic-digits")
    yy, xx = np.mgrid[0:SIDE, 0:SIDE].astype(float)
    images = np.zeros((n, SIDE, SIDE), dtype=np.uint8)
    labels = rng.integers(0, 10, n).astype(np.uint8)
    for i, digit in enumerate(labels):
        w, h = rng.uniform(8, 12), rng.uniform(14, 19)
        x0 = rng.uniform(4, SIDE - 4 - w)
        y0 = rng.uniform(3, SIDE - 3 - h)
        slant = rng.uniform(-0.25, 0.25)
        thick = rng.uniform(1.0, 1.8)
        dist = np.full((SIDE, SIDE), np.inf)
        for seg in _DIGITS[digit]:
            (ax, ay), (bx, by) = _SEGMENTS[seg]
            p = np.array([x0 + ax * w + slant * (1 - ay) * h, y0 + ay * h])
            q = np.array([x0 + bx * w + slant * (1 - by) * h, y0 + by * h])
            d = q - p
            t = np.clip(((xx - p[0]) * d[0] + (yy - p[1]) * d[1]) / (d @ d), 0.0, 1.0)
            dist = np.minimum(dist, np.hypot(xx - p[0] - t * d[0], yy - p[1] - t * d[1]))
        ink = np.clip(thick + 0.5 - dist, 0.0, 1.0)
        images[i] = np.round(255 * ink).astype(np.uint8)
    return MnistSet(images, labels)


@dataclass
class CnnWeights:
    conv: np.ndarray  # (4, 3, 3) kernel ticks
    fc1_w: np.ndarray  # (676, 100)
    fc1_b: np.ndarray  # (100,)
    fc2_w: np.ndarray  # (100, 10)
    fc2_b: np.ndarray  # (10,)

    def __post_init__(self):
        shapes = {"conv": (N_KERNELS, 3, 3), "fc1_w": (FC1_IN, FC1_OUT), "fc1_b": (FC1_OUT,),
                  "fc2_w": (FC1_OUT, FC2_OUT), "fc2_b": (FC2_OUT,)}
        for name, shape in shapes.items():
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.shape != shape:
                raise DimensionError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        ticks = np.rint(self.conv)
        if not np.array_equal(ticks, self.conv):
            raise ConfigError("conv kernels must hold integer ticks")

    @classmethod
    def random(cls, seed=0):
        rng = seeded_generator(seed, "dense-init")
        lim1 = np.sqrt(6.0 / (FC1_IN + FC1_OUT))
        lim2 = np.sqrt(6.0 / (FC1_OUT + FC2_OUT))
        return cls(
            compass_kernels(),
            rng.uniform(-lim1, lim1, (FC1_IN, FC1_OUT)),
            np.zeros(FC1_OUT),
            rng.uniform(-lim2, lim2, (FC1_OUT, FC2_OUT)),
            np.zeros(FC2_OUT),
        )

    def kernels(self):
        return [core.WeightVector.for_ticks(tuple(int(t) for t in k.ravel())) for k in self.conv]


def compass_kernels():
    return np.stack([kernel(name).matrix for name in COMPASS_KERNELS]).astype(np.float32)


def save_weights(weights, path):
    header = WEIGHTS_MAGIC + struct.pack("<4I", N_KERNELS, FC1_IN, FC1_OUT, FC2_OUT)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                    for a in (weights.conv, weights.fc1_w, weights.fc1_b, weights.fc2_w, weights.fc2_b))
    with open(path, "wb") as f:
        f.write(header + body)


def load_weights(path):
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != WEIGHTS_MAGIC:
        raise FormatError(f"bad weight-file magic {data[:8]!r}", 0)
    if len(data) < 24:
        raise FormatError(f"weight file truncated: expected at least 24 bytes, got {len(data)}", len(data))
    counts = struct.unpack("<4I", data[8:24])
    if counts != (N_KERNELS, FC1_IN, FC1_OUT, FC2_OUT):
        raise FormatError(f"unsupported layer counts {counts}", 8)
    sizes = [N_KERNELS * 9, FC1_IN * FC1_OUT, FC1_OUT, FC1_OUT * FC2_OUT, FC2_OUT]
    expected = 24 + 4 * sum(sizes)
    if len(data) != expected:
        raise FormatError(f"weight file has {len(data)} bytes, expected {expected}", min(len(data), expected))
    flat = np.frombuffer(data, dtype="<f4", offset=24)
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    return CnnWeights(parts[0].reshape(N_KERNELS, 3, 3), parts[1].reshape(FC1_IN, FC1_OUT), parts[2],
                      parts[3].reshape(FC1_OUT, FC2_OUT), parts[4])


# --- forward pass -----------------------------------------------------------

def _patches(images):
    win = np.lib.stride_tricks.sliding_window_view(np.asarray(images), (3, 3), axis=(1, 2))
    return win.reshape(len(images), PATCHES, 9).astype(np.int64)


def kernel_channel(channel, k):
    """Channel for kernel ``k``: same settings, seed derived from ``(seed, k)``."""
    digest = hashlib.sha256(f"{channel.seed}/conv-kernel/{k}".encode()).digest()
    return replace(channel, seed=int.from_bytes(digest[:8], "little"))


def conv_raw(images, weights, conv_mode="oracle", channel=None, start_index=0):
    """Integer conv outputs ``(B, 4, 26, 26)`` for a batch of images.

    ``conv_mode`` is ``"oracle"`` (exact dot products) or ``"sim"`` (the
    hybrid core with ``channel``).
    """
    images = np.asarray(images)
    if images.ndim == 2:
        images = images[None]
    if images.shape[1:] != (SIDE, SIDE):
        raise ConfigError(f"expected 28x28 images, got {images.shape[1:]}")
    b = len(images)
    patches = _patches(images)
    out = np.empty((b, N_KERNELS, PATCHES), dtype=np.int64)
    if conv_mode == "oracle":
        ticks = weights.conv.reshape(N_KERNELS, 9).astype(np.int64)
        out[:] = np.einsum("bpl,kl->bkp", patches, ticks)
    elif conv_mode == "sim":
        channel = channel or ChannelSpec.noise_free()
        flat = patches.reshape(-1, 9)
        for k, wv in enumerate(weights.kernels()):
            raw, _ = core.hybrid_batch(flat, 8, wv, kernel_channel(channel, k), start=start_index * PATCHES)
            out[:, k, :] = raw.reshape(b, PATCHES)
    else:
        raise ConfigError(f"conv_mode must be 'oracle' or 'sim', got {conv_mode!r}")
    return out.reshape(b, N_KERNELS, CONV_SIDE, CONV_SIDE)


def features_from_conv(raw, weights):
    """Normalize, ReLU, 2x2 max-pool and flatten (kernel index fastest)."""
    norm = np.abs(weights.conv).reshape(N_KERNELS, -1).max(axis=1)
    x = raw / (255.0 * norm[None, :, None, None])
    x = np.maximum(x, 0.0)
    b = x.shape[0]
    x = x.reshape(b, N_KERNELS, POOL_SIDE, 2, POOL_SIDE, 2).max(axis=(3, 5))
    return x.transpose(0, 2, 3, 1).reshape(b, FC1_IN)


def dense_logits(features, weights):
    h = np.maximum(features @ weights.fc1_w.astype(np.float64) + weights.fc1_b, 0.0)
    return h @ weights.fc2_w.astype(np.float64) + weights.fc2_b


def forward_batch(images, weights, conv_mode="oracle", channel=None, start_index=0):
    """Returns ``(logits (B, 10), predictions (B,), conv_raw (B, 4, 26, 26))``."""
    raw = conv_raw(images, weights, conv_mode, channel, start_index)
    logits = dense_logits(features_from_conv(raw, weights), weights)
    return logits, logits.argmax(axis=1), raw


def forward(image, weights, conv_mode="oracle", channel=None, image_index=0):
    logits, pred, _ = forward_batch(np.asarray(image)[None], weights, conv_mode, channel, image_index)
    return logits[0], int(pred[0])


# --- dense-layer training ---------------------------------------------------

def oracle_features(images, weights, batch=1000):
    return np.concatenate([features_from_conv(conv_raw(images[i:i + batch], weights), weights)
                           for i in range(0, len(images), batch)])


def train_dense(features, labels, epochs=10, lr=0.05, seed=0, batch_size=32, init=None):
    """Minibatch SGD on softmax cross-entropy for fc1/fc2; conv stays fixed.

    Returns ``(weights, train_accuracy)``.
    """
    w = init or CnnWeights.random(seed)
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape != (len(y), FC1_IN):
        raise DimensionError(f"features {x.shape} do not match {len(y)} labels x {FC1_IN}")
    w1, b1 = w.fc1_w.astype(np.float64), w.fc1_b.astype(np.float64)
    w2, b2 = w.fc2_w.astype(np.float64), w.fc2_b.astype(np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        w1, b1, w2, b2 = _sgd(x, y, w1, b1, w2, b2, epochs, lr, batch_size, seed)
    trained = CnnWeights(w.conv, w1, b1, w2, b2)
    acc = float(np.mean(dense_logits(x, trained).argmax(axis=1) == y))
    return trained, acc


def _sgd(x, y, w1, b1, w2, b2, epochs, lr, batch_size, seed):
    rng = seeded_generator(seed, "dense-order")
    onehot = np.eye(FC2_OUT)[y]
    for epoch in range(epochs):
        order = rng.permutation(len(y))
        for s in range(0, len(y), batch_size):
            idx = order[s:s + batch_size]
            xb, tb = x[idx], onehot[idx]
            z1 = xb @ w1 + b1
            h = np.maximum(z1, 0.0)
            z2 = h @ w2 + b2
            z2 -= z2.max(axis=1, keepdims=True)
            p = np.exp(z2)
            p /= p.sum(axis=1, keepdims=True)
            loss = -np.mean(np.sum(tb * np.log(p + 1e-300), axis=1))
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss in epoch {epoch} (lr={lr})")
            g2 = (p - tb) / len(idx)
            gh = (g2 @ w2.T) * (z1 > 0)
            w2 -= lr * (h.T @ g2)
            b2 -= lr * g2.sum(axis=0)
            w1 -= lr * (xb.T @ gh)
            b1 -= lr * gh.sum(axis=0)
    return w1, b1, w2, b2
