import numpy as np

from slowenv.utils.rng import RngKey, generator, stream_id


def test_same_key_same_draws():
    key = RngKey(42, stream_id("potential"), 3)
    assert np.array_equal(generator(key).normal(size=8), generator(key).normal(size=8))


def test_keys_separate_streams():
    base = RngKey(42, stream_id("potential"))
    draws = {
        "base": generator(base).random(),
        "index": generator(base.at(1)).random(),
        "stream": generator(base.child(stream_id("initial"))).random(),
        "seed": generator(RngKey(43, base.stream)).random(),
    }
    assert len(set(draws.values())) == 4


def test_stream_ids():
    assert stream_id("potential", 0) != stream_id("potential", 1)
    assert stream_id("potential", 0) != stream_id("initial", 0)
    assert stream_id("potential", 5) - stream_id("potential", 0) == 5
    assert stream_id("birkhoff") == stream_id("birkhoff")


def test_key_helpers_keep_the_other_fields():
    key = RngKey(7, 11, 2)
    assert key.at(9) == RngKey(7, 11, 9)
    assert key.child(3) == RngKey(7, 3, 2)


def test_negative_seed_is_accepted():
    assert 0.0 <= generator(RngKey(-1)).random() < 1.0
