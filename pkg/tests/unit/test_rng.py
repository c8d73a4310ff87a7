import numpy as np
import pytest

from mpfilter.rng import StreamFactory, as_factory


class TestStreamFactory:
    def test_same_key_same_draws(self):
        a = StreamFactory(5).generator("pf", 3, "propagate", 0).random(4)
        b = StreamFactory(5).generator("pf", 3, "propagate", 0).random(4)
        np.testing.assert_array_equal(a, b)

    def test_keys_and_seeds_separate_streams(self):
        base = StreamFactory(5).generator("pf", 3).random(4)
        other_key = StreamFactory(5).generator("pf", 4).random(4)
        other_seed = StreamFactory(6).generator("pf", 3).random(4)
        assert not np.array_equal(base, other_key)
        assert not np.array_equal(base, other_seed)

    def test_child_extends_the_key_path(self):
        via_child = StreamFactory(2).child("upf").child("replicate", 1)
        direct = StreamFactory(2, "upf", "replicate", 1)
        assert via_child.key == direct.key
        np.testing.assert_array_equal(
            via_child.generator("level").random(3), direct.generator("level").random(3)
        )

    def test_streams_do_not_depend_on_creation_order(self):
        root = StreamFactory(9)
        later = root.generator("b").random(2)
        root.generator("a").random(100)
        np.testing.assert_array_equal(root.generator("b").random(2), later)

    def test_negative_key_rejected(self):
        with pytest.raises(ValueError):
            StreamFactory(1).child(-1)

    def test_as_factory(self):
        factory = StreamFactory(3, "x")
        assert as_factory(factory) is factory
        assert as_factory(3).seed == 3
