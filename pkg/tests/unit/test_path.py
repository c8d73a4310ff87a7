import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfilter.exceptions.filter_exceptions import (
    ConfigurationError,
    DomainError,
    NumericOverflowError,
    RangeError,
)
from mpfilter.models.catalog import build_spec
from mpfilter.schemas.model import ModelId
from mpfilter.services.path_service import (
    PathBatch,
    concatenate,
    coupled_euler_batch,
    coupled_euler_unit,
    euler_batch,
    euler_from_increments,
    euler_unit,
    interpolate,
    interpolate_states,
    step_size,
    steps_per_unit,
)
from tests.conftest import const_spec


class TestGrid:
    def test_dyadic_steps(self):
        assert steps_per_unit(0) == 1
        assert steps_per_unit(5) == 32
        assert step_size(3) == 0.125

    def test_negative_level_raises(self):
        with pytest.raises(ConfigurationError):
            steps_per_unit(-1)


class TestEuler:
    def test_replay_matches_hand_recursion(self, ou_spec):
        z = np.array([0.3, -0.1, 0.2, 0.05])
        path = euler_from_increments(ou_spec, 2, 0, 1.0, z)
        x = 1.0
        expected = [x]
        for dz in z:
            x = x - 0.98 * x * 0.25 + dz
            expected.append(x)
        np.testing.assert_allclose(path.states, expected, rtol=1e-14)
        assert path.end == pytest.approx(expected[-1])

    def test_zero_diffusion_is_deterministic(self):
        spec = const_spec(sigma=0.0, kappa=0.5, x_star=2.0)
        a = euler_unit(spec, 3, 0, 2.0, np.random.default_rng(1))
        b = euler_unit(spec, 3, 0, 2.0, np.random.default_rng(2))
        np.testing.assert_array_equal(a.states, b.states)
        assert a.end == pytest.approx(2.0 * (1 - 0.5 / 8) ** 8)

    def test_wrong_increment_count_raises(self, ou_spec):
        with pytest.raises(ConfigurationError):
            euler_from_increments(ou_spec, 2, 0, 1.0, np.zeros(3))

    def test_non_finite_start_raises(self, ou_spec):
        with pytest.raises(DomainError):
            euler_unit(ou_spec, 1, 0, np.nan, np.random.default_rng(0))

    def test_overflow_reports_step(self):
        spec = build_spec(ModelId.OU, overrides={"theta_b": -1e300})
        with pytest.raises(NumericOverflowError) as exc_info:
            euler_from_increments(spec, 3, 0, 1.0, np.zeros(8))
        assert exc_info.value.step >= 1

    def test_batch_rows_replay_their_increments(self, ou_spec):
        starts = np.array([0.5, -1.0, 2.0])
        batch = euler_batch(ou_spec, 3, 1, starts, np.random.default_rng(5))
        assert batch.states.shape == (3, 9)
        assert batch.increments.shape == (3, 8)
        for i in range(3):
            replay = euler_from_increments(
                ou_spec, 3, 1, batch.starts[i], batch.increments[i]
            )
            np.testing.assert_allclose(replay.states, batch.states[i], rtol=1e-14)

    def test_increment_variance_is_step_size(self, ou_spec):
        batch = euler_batch(ou_spec, 4, 0, np.zeros(20000), np.random.default_rng(3))
        var = batch.increments.var()
        # 320000 draws: relative standard error of the variance is about 0.25%
        assert var == pytest.approx(1 / 16, rel=0.02)

    def test_terminal_mean_follows_the_euler_recursion(self, ou_spec):
        batch = euler_batch(ou_spec, 6, 0, np.ones(40000), np.random.default_rng(12))
        expected = (1 - 0.98 / 64) ** 64
        error = batch.endpoints.std(ddof=1) / np.sqrt(40000)
        assert abs(batch.endpoints.mean() - expected) < 4 * error

    def test_take_and_from_paths(self, ou_spec):
        batch = euler_batch(ou_spec, 2, 0, np.ones(4), np.random.default_rng(0))
        picked = batch.take(np.array([3, 3, 0]))
        np.testing.assert_array_equal(picked.states[0], batch.states[3])
        rebuilt = PathBatch.from_paths([batch.path(i) for i in range(4)])
        np.testing.assert_array_equal(rebuilt.states, batch.states)


class TestCoupling:
    def test_coarse_increments_are_pair_sums(self, ou_spec):
        fine, coarse = coupled_euler_unit(
            ou_spec, 3, 0, 1.0, 1.0, np.random.default_rng(9)
        )
        assert (fine.level, coarse.level) == (3, 2)
        np.testing.assert_allclose(
            coarse.increments, fine.increments[0::2] + fine.increments[1::2]
        )
        replay = euler_from_increments(ou_spec, 2, 0, 1.0, coarse.increments)
        np.testing.assert_allclose(replay.states, coarse.states, rtol=1e-14)

    def test_marginal_matches_uncoupled_fine_path(self, ou_spec):
        fine, _ = coupled_euler_batch(
            ou_spec, 2, 0, np.ones(3), np.ones(3), np.random.default_rng(4)
        )
        single = euler_batch(ou_spec, 2, 0, np.ones(3), np.random.default_rng(4))
        np.testing.assert_array_equal(fine.states, single.states)

    def test_level_zero_cannot_couple(self, ou_spec):
        with pytest.raises(ConfigurationError):
            coupled_euler_unit(ou_spec, 0, 0, 1.0, 1.0, np.random.default_rng(0))

    def test_coupled_paths_stay_close(self, ou_spec):
        fine, coarse = coupled_euler_batch(
            ou_spec, 6, 0, np.ones(2000), np.ones(2000), np.random.default_rng(8)
        )
        gap = np.mean((fine.endpoints - coarse.endpoints) ** 2)
        spread = np.var(fine.endpoints)
        assert gap < 0.05 * spread

    def test_strong_gap_decays_at_first_order(self, ou_spec):
        levels = np.arange(2, 8)
        gaps = []
        for level in levels:
            fine, coarse = coupled_euler_batch(
                ou_spec,
                int(level),
                0,
                np.ones(20000),
                np.ones(20000),
                np.random.default_rng(int(level)),
            )
            gaps.append(np.mean((fine.endpoints - coarse.endpoints) ** 2))
        slope = np.polyfit(levels, np.log2(gaps), 1)[0]
        assert slope <= -0.9


class TestInterpolation:
    def _path(self, ou_spec):
        return euler_unit(ou_spec, 2, 3, 1.0, np.random.default_rng(1))

    def test_grid_points_are_exact(self, ou_spec):
        path = self._path(ou_spec)
        for k in range(5):
            assert interpolate(path, 3 + k * 0.25) == path.states[k]

    def test_midpoint_is_linear(self, ou_spec):
        path = self._path(ou_spec)
        mid = 0.5 * (path.states[1] + path.states[2])
        assert interpolate(path, 3.375) == pytest.approx(mid)

    def test_outside_unit_interval_raises(self, ou_spec):
        path = self._path(ou_spec)
        with pytest.raises(RangeError):
            interpolate(path, 4.01)
        with pytest.raises(RangeError):
            interpolate(path, 2.99)

    @settings(max_examples=100, deadline=None)
    @given(t=st.floats(min_value=0.0, max_value=1.0))
    def test_value_lies_between_neighbours(self, t):
        states = np.array([[0.0, 2.0, -1.0, 0.5, 3.0]])
        value = interpolate_states(states, 2, 0, [t])[0, 0]
        k = min(int(np.floor(t * 4)), 3)
        low, high = sorted(states[0, k : k + 2])
        assert low - 1e-12 <= value <= high + 1e-12


class TestConcatenate:
    def test_joins_consecutive_paths(self, ou_spec):
        first = euler_unit(ou_spec, 2, 0, 1.0, np.random.default_rng(0))
        second = euler_unit(ou_spec, 2, 1, first.end, np.random.default_rng(1))
        trajectory = concatenate([first, second])
        assert trajectory.states.shape == (9,)
        assert trajectory.units == 2
        np.testing.assert_array_equal(trajectory.unit(1).states, second.states)

    def test_gap_raises(self, ou_spec):
        first = euler_unit(ou_spec, 2, 0, 1.0, np.random.default_rng(0))
        second = euler_unit(ou_spec, 2, 1, first.end + 1.0, np.random.default_rng(1))
        with pytest.raises(ConfigurationError):
            concatenate([first, second])

    def test_empty_raises(self):
        with pytest.raises(ConfigurationError):
            concatenate([])
