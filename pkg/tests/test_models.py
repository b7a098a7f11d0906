"""Right-hand-side definitions: hand-checked values, symmetry, and pole
handling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdclone.models import (
    LINEAR_DECAY,
    PREY_PREDATOR,
    SCENARIO1,
    SCENARIO2,
    get_model,
    model_names,
    register_model,
)


def rhs_at(model, t, x, p):
    out = np.empty(model.dim)
    status = model.rhs(t, np.asarray(x, float), np.asarray(p, float),
                       model.constants, out)
    return status, out


class TestScenarioRhs:
    def test_hand_value(self):
        # x=(7,-10), theta=(2,1): dx1 = 72/26 - 2, dx2 = 7 - 1.
        status, out = rhs_at(SCENARIO1, 0.0, (7.0, -10.0), (2.0, 1.0))
        assert status == 0
        assert out[0] == pytest.approx(72.0 / 26.0 - 2.0)
        assert out[1] == pytest.approx(6.0)

    def test_pole_fails(self):
        status, _ = rhs_at(SCENARIO1, 0.0, (1.0, -36.0), (2.0, 1.0))
        assert status != 0

    @given(
        theta1=st.floats(-20, 20),
        theta2=st.floats(-20, 20),
        x1=st.floats(-50, 50),
        x2=st.floats(-30, 50),
    )
    @settings(max_examples=200, deadline=None)
    def test_scenario2_sign_symmetry(self, theta1, theta2, x1, x2):
        """The modified system depends on theta1 only through |theta1|."""
        s1, out1 = rhs_at(SCENARIO2, 0.0, (x1, x2), (theta1, theta2))
        s2, out2 = rhs_at(SCENARIO2, 0.0, (x1, x2), (-theta1, theta2))
        assert s1 == s2
        if s1 == 0:
            np.testing.assert_array_equal(out1, out2)

    def test_scenario1_vs_scenario2_positive_theta(self):
        s1, out1 = rhs_at(SCENARIO1, 0.0, (3.0, 4.0), (2.5, 1.5))
        s2, out2 = rhs_at(SCENARIO2, 0.0, (3.0, 4.0), (2.5, 1.5))
        assert s1 == s2 == 0
        np.testing.assert_allclose(out1, out2)


class TestPreyPredatorRhs:
    TRUTH = np.array([3.501, 3.211, 0.007, 32.420, 0.101, 0.249, -0.042])

    def test_washout_equilibrium(self):
        # With no organisms, nitrogen relaxes toward N* and nothing grows.
        status, out = rhs_at(PREY_PREDATOR, 0.0, (80.0, 0.0, 0.0, 0.0), self.TRUTH)
        assert status == 0
        np.testing.assert_allclose(out, 0.0, atol=1e-12)

    def test_nitrogen_inflow(self):
        # delta*(N* - N) with delta=0.68, N*=80.
        status, out = rhs_at(PREY_PREDATOR, 0.0, (40.0, 0.0, 0.0, 0.0), self.TRUTH)
        assert status == 0
        assert out[0] == pytest.approx(0.68 * 40.0)

    def test_functional_response_value(self):
        # At N=k_C the Chlorella response is half-maximal: F_C = b_C/2.
        p = self.TRUTH
        n = p[2]
        status, out = rhs_at(PREY_PREDATOR, 0.0, (n, 1.0, 0.0, 0.0), p)
        assert status == 0
        # dC = F_C*C - 0 - delta*C with C=1.
        assert out[1] == pytest.approx(p[0] / 2.0 - 0.68)

    def test_pole_fails(self):
        p = self.TRUTH.copy()
        status, _ = rhs_at(PREY_PREDATOR, 0.0, (-p[2], 1.0, 1.0, 1.0), p)
        assert status != 0

    def test_epsilon_zero_fails(self):
        p = self.TRUTH.copy()
        p[4] = 0.0
        status, _ = rhs_at(PREY_PREDATOR, 0.0, (40.0, 1.0, 1.0, 1.0), p)
        assert status != 0


class TestLinearDecay:
    def test_rhs(self):
        status, out = rhs_at(LINEAR_DECAY, 0.0, (3.0,), ())
        assert status == 0
        assert out[0] == pytest.approx(-3.0)


class TestRegistry:
    def test_builtins_registered(self):
        for name in ("scenario1", "scenario2", "prey_predator", "linear_decay"):
            assert name in model_names()
            assert get_model(name).name == name

    def test_unknown_model(self):
        with pytest.raises(KeyError):
            get_model("no_such_model")

    def test_register_rejects_duplicate(self):
        with pytest.raises(ValueError):
            register_model(SCENARIO1)


class TestModelSpec:
    def test_dimensions(self):
        assert SCENARIO1.dim == 2
        assert SCENARIO1.n_params == 2
        assert SCENARIO1.n_obs_components == 2
        assert SCENARIO1.n_estimated_ic == 2
        assert PREY_PREDATOR.dim == 4
        assert PREY_PREDATOR.n_params == 7
        assert PREY_PREDATOR.obs_mask == (1, 3)
        assert PREY_PREDATOR.n_estimated_ic == 0

    def test_prey_constants(self):
        np.testing.assert_allclose(PREY_PREDATOR.constants, [0.68, 80.0])
