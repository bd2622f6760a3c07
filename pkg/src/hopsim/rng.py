"""Counter-based random streams.

Every random draw in the simulator comes from the Philox4x64-10
counter-based generator, keyed by the run seed and a stream tag. Each
output word owns a fixed, disjoint block of counters, so the noise applied
to word ``i`` depends only on ``(seed, tag, i)`` and never on chunking or
scheduling.

Normals are produced with the Box-Muller transform from 53-bit uniforms,
which keeps the number of raw draws per word fixed. This makes the streams
reproducible from the published Philox constants alone.
"""

import hashlib

import numpy as np

RNG_IDENTITY = "philox4x64-10/box-muller/v1"

_TWO_PI = 2.0 * np.pi
_U53 = 1.0 / 9007199254740992.0  # 2**-53


def stream_tag(name):
    """Stable 64-bit tag for a named stream (first 8 bytes of SHA-256)."""
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def _uniform_open(raw):
    # (0, 1): never exactly 0, so log() is safe.
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


class WordStream:
    """Per-word normal deviates for one ``(seed, name)`` pair.

    ``normals(start, count, per_word)`` returns a ``(count, per_word)``
    array whose row ``j`` is the noise owned by word ``start + j``.
    """

    def __init__(self, seed, name):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.name = name
        self.key = (seed, stream_tag(name))

    def raw(self, start, count, per_word):
        """Raw uint64 draws, ``per_word`` (rounded up to a multiple of 4) per word."""
        blocks = -(-per_word // 4)
        bitgen = np.random.Philox(key=np.array(self.key, dtype=np.uint64), counter=int(start) * blocks)
        out = bitgen.random_raw(int(count) * blocks * 4)
        return out.reshape(int(count), blocks * 4)[:, :per_word]

    def normals(self, start, count, per_word):
        pairs = -(-per_word // 2)
        raw = self.raw(start, count, 2 * pairs)
        u1 = _uniform_open(raw[:, 0::2])
        u2 = _uniform_open(raw[:, 1::2])
        r = np.sqrt(-2.0 * np.log(u1))
        theta = _TWO_PI * u2
        z = np.empty((int(count), 2 * pairs))
        z[:, 0::2] = r * np.cos(theta)
        z[:, 1::2] = r * np.sin(theta)
        return z[:, :per_word]

    def uniforms(self, start, count, per_word):
        return _uniform_open(self.raw(start, count, per_word))


def seeded_generator(seed, name):
    """A plain numpy Generator on a Philox stream, for non-per-word uses
    (test images, weight initialization, training order)."""
    return np.random.Generator(np.random.Philox(key=np.array([int(seed), stream_tag(name)], dtype=np.uint64)))
