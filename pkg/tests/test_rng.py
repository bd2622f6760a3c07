import numpy as np
import pytest

from hopsim.rng import RNG_IDENTITY, WordStream, seeded_generator, stream_tag


def test_identity_string():
    assert RNG_IDENTITY == "philox4x64-10/box-muller/v1"


def test_stream_tags_differ():
    assert stream_tag("weight") != stream_tag("osnr")


def test_word_rows_independent_of_window():
    s = WordStream(42, "x")
    full = s.normals(0, 100, 9)
    assert np.array_equal(full[37:50], s.normals(37, 13, 9))
    assert np.array_equal(s.raw(10, 5, 3), s.raw(0, 20, 3)[10:15])


def test_seeds_give_different_streams():
    assert not np.array_equal(WordStream(1, "x").normals(0, 4, 4), WordStream(2, "x").normals(0, 4, 4))


def test_normals_moments():
    z = WordStream(7, "m").normals(0, 250_000, 4).ravel()
    assert abs(z.mean()) < 0.005
    assert z.std() == pytest.approx(1.0, rel=0.005)


def test_uniforms_open_interval():
    u = WordStream(0, "u").uniforms(0, 10_000, 4)
    assert u.min() > 0 and u.max() < 1


def test_seeded_generator_reproducible():
    assert np.array_equal(seeded_generator(3, "a").random(5), seeded_generator(3, "a").random(5))
    with pytest.raises(ValueError):
        WordStream(-1, "x")
