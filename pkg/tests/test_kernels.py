import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_grads_close
from rbfpoint import kernels
from rbfpoint.nn import ParameterError

EVALS = {
    "gaussian": kernels.eval_gaussian,
    "markov": kernels.eval_markov,
    "imq": kernels.eval_imq,
    "mq": kernels.eval_multiquadratic,
}


@pytest.mark.parametrize("tag", sorted(EVALS))
class TestCommonBehavior:
    def test_sigma_must_be_positive(self, tag):
        for bad in (0.0, -1.0):
            with pytest.raises(ParameterError):
                EVALS[tag](np.zeros(3), np.zeros(3), bad)

    def test_value_one_at_center(self, tag):
        ev = EVALS[tag](np.array([0.3, -0.2]), np.array([0.3, -0.2]), 0.7)
        assert ev.value == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(ev.d_center, 0.0, atol=1e-12)
        assert ev.d_sigma == pytest.approx(0.0, abs=1e-12)

    def test_point_grad_is_negated_center_grad(self, tag, rng):
        for _ in range(20):
            x, c = rng.standard_normal((2, 3))
            sigma = rng.uniform(0.2, 2.0)
            ev = EVALS[tag](x, c, sigma)
            np.testing.assert_array_equal(ev.d_point, -ev.d_center)

    def test_radial_symmetry(self, tag, rng):
        # any offset of equal norm gives an identical response
        sigma = 0.8
        c = rng.standard_normal(3)
        r = 1.3
        base = EVALS[tag](c + np.array([r, 0.0, 0.0]), c, sigma).value
        for _ in range(10):
            direction = rng.standard_normal(3)
            direction *= r / np.linalg.norm(direction)
            assert EVALS[tag](c + direction, c, sigma).value == pytest.approx(
                base, abs=1e-12
            )

    def test_partials_match_finite_differences(self, tag, rng):
        h = 1e-6
        for _ in range(50):
            x, c = rng.standard_normal((2, 3))
            if np.linalg.norm(x - c) < 1e-3:
                continue
            sigma = rng.uniform(0.3, 2.0)
            ev = EVALS[tag](x, c, sigma)

            def fd(f):
                return (f(h) - f(-h)) / (2 * h)

            for i in range(3):
                e = np.zeros(3)
                e[i] = 1.0
                assert_grads_close(
                    ev.d_point[i], fd(lambda d: EVALS[tag](x + d * e, c, sigma).value)
                )
                assert_grads_close(
                    ev.d_center[i], fd(lambda d: EVALS[tag](x, c + d * e, sigma).value)
                )
            assert_grads_close(
                ev.d_sigma, fd(lambda d: EVALS[tag](x, c, sigma + d).value)
            )


class TestReferenceValues:
    def test_gaussian_at_one_sigma(self):
        # r = sigma gives exp(-1)
        ev = kernels.eval_gaussian(np.array([0.5, 0.0]), np.zeros(2), 0.5)
        assert ev.value == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_markov_at_sigma_squared(self):
        sigma = 0.7
        ev = kernels.eval_markov(np.array([sigma**2, 0.0]), np.zeros(2), sigma)
        assert ev.value == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_markov_guarded_at_center(self):
        ev = kernels.eval_markov(np.ones(3), np.ones(3), 0.5)
        np.testing.assert_array_equal(ev.d_center, 0.0)

    def test_imq_unit_case(self):
        ev = kernels.eval_imq(np.array([1.0, 0.0, 0.0]), np.zeros(3), 1.0)
        assert ev.value == pytest.approx(1.0 / np.sqrt(2.0), rel=1e-12)

    def test_mq_unit_case(self):
        ev = kernels.eval_multiquadratic(np.array([1.0, 0.0, 0.0]), np.zeros(3), 1.0)
        assert ev.value == pytest.approx(np.sqrt(2.0), rel=1e-12)


class TestShapeProperties:
    @pytest.mark.parametrize("tag", ["gaussian", "markov", "imq"])
    def test_local_kernels_strictly_decrease(self, tag):
        sigma = 0.5
        grid = np.linspace(0.05, 2.0, 40)
        values = [
            EVALS[tag](np.array([r, 0.0, 0.0]), np.zeros(3), sigma).value for r in grid
        ]
        assert all(a > b for a, b in zip(values, values[1:]))
        assert all(0.0 < v <= 1.0 for v in values)

    def test_mq_increases(self):
        grid = np.linspace(0.0, 2.0, 20)
        values = [
            kernels.eval_multiquadratic(np.array([r, 0.0, 0.0]), np.zeros(3), 0.5).value
            for r in grid
        ]
        assert all(a < b for a, b in zip(values, values[1:]))
        assert all(v >= 1.0 for v in values)

    def test_gaussian_decays_faster_than_imq(self):
        for r in np.linspace(1.0, 4.0, 13):
            g = kernels.eval_gaussian(np.array([r, 0.0]), np.zeros(2), 1.0).value
            imq = kernels.eval_imq(np.array([r, 0.0]), np.zeros(2), 1.0).value
            assert g < imq

    @given(
        st.floats(0.05, 3.0),
        st.floats(0.1, 3.0),
        st.sampled_from(sorted(EVALS)),
    )
    @settings(max_examples=60, deadline=None)
    def test_range_bounds(self, r, sigma, tag):
        value = EVALS[tag](np.array([r, 0.0, 0.0]), np.zeros(3), sigma).value
        if tag == "mq":
            assert value >= 1.0
        else:
            # far-field responses may underflow to exactly 0.0 in float64
            assert 0.0 <= value <= 1.0
            if r / sigma**2 < 100.0:
                assert value > 0.0
