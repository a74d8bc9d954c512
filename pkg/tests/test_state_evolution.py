import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttelab.core import (
    ExperimentDesign,
    InterferenceSpec,
    LinearOutcomeParams,
    NoiseSpec,
    PanelData,
    SEState,
)
from ttelab.state_evolution import (
    OutcomeFunction,
    QuadratureMethod,
    QuadratureSpec,
    empirical_moments,
    linear_outcome_function,
    se_step_general,
    se_step_linear,
    se_trajectory,
    trajectory_means,
)

NOISELESS = NoiseSpec(0.0)
UNIT_MEAN = InterferenceSpec(mu=1.0, sigma=0.0)


class TestSeStepLinear:
    def test_noise_floor_only(self):
        params = LinearOutcomeParams(delta=0, xi=0, lam=0, gamma=0)
        out = se_step_linear(
            SEState(nu=3.0, rho=2.0),
            params,
            0.5,
            InterferenceSpec(mu=0.0, sigma=0.0),
            NoiseSpec(0.3),
        )
        assert out.nu == 0.0
        assert out.rho == pytest.approx(0.3)

    def test_hand_example_mean(self):
        params = LinearOutcomeParams(delta=0, xi=0.5, lam=1, gamma=0)
        out = se_step_linear(SEState(nu=1.0, rho=0.0), params, 0.2, UNIT_MEAN, NOISELESS)
        assert out.nu == pytest.approx(0.7)
        assert out.rho == pytest.approx(0.0)

    def test_pure_carryover_preserves_standard_state(self):
        params = LinearOutcomeParams(delta=0, xi=1.0, lam=0, gamma=0)
        out = se_step_linear(
            SEState(nu=0.0, rho=1.0),
            params,
            0.7,
            InterferenceSpec(mu=1.0, sigma=1.0),
            NOISELESS,
        )
        assert out.nu == pytest.approx(0.0)
        assert out.rho == pytest.approx(1.0)

    def test_noise_floor_invariant(self):
        params = LinearOutcomeParams(delta=0.3, xi=0.4, lam=0.2, gamma=0.1)
        out = se_step_linear(
            SEState(nu=0.5, rho=0.5),
            params,
            0.5,
            InterferenceSpec(mu=1.0, sigma=0.5),
            NoiseSpec(0.25),
        )
        assert out.rho >= 0.25


class TestSeStepGeneral:
    def test_constant_function(self):
        g = OutcomeFunction(evaluator=lambda y, w: np.ones_like(y), growth_order=0)
        out = se_step_general(
            SEState(nu=0.0, rho=1.0),
            g,
            0.5,
            InterferenceSpec(mu=1.0, sigma=0.5),
            NOISELESS,
        )
        assert out.nu == pytest.approx(1.0)
        assert out.rho == pytest.approx(0.5)

    def test_gaussian_second_moment(self):
        g = OutcomeFunction(evaluator=lambda y, w: y * y, growth_order=4)
        out = se_step_general(SEState(nu=0.0, rho=1.0), g, 0.0, UNIT_MEAN, NOISELESS)
        assert out.nu == pytest.approx(1.0, abs=1e-12)

    def test_too_few_nodes_rejected(self):
        g = OutcomeFunction(evaluator=lambda y, w: y, growth_order=10)
        with pytest.raises(ValueError):
            se_step_general(
                SEState(nu=0.0, rho=1.0),
                g,
                0.5,
                UNIT_MEAN,
                NOISELESS,
                QuadratureSpec(nodes_or_draws=4),
            )

    def test_monte_carlo_agrees_roughly(self):
        params = LinearOutcomeParams(delta=0.1, xi=0.5, lam=0.3, gamma=0.2)
        state = SEState(nu=0.4, rho=0.8)
        spec = InterferenceSpec(mu=1.0, sigma=0.5)
        exact = se_step_linear(state, params, 0.3, spec, NOISELESS)
        mc = se_step_general(
            state,
            linear_outcome_function(params),
            0.3,
            spec,
            NOISELESS,
            QuadratureSpec(QuadratureMethod.MONTE_CARLO, 200_000, mc_seed=1),
        )
        assert mc.nu == pytest.approx(exact.nu, abs=0.01)
        assert mc.rho == pytest.approx(exact.rho, abs=0.01)


@settings(max_examples=200, deadline=None)
@given(
    coeffs=st.lists(
        st.floats(min_value=-1.0, max_value=1.0), min_size=5, max_size=5
    ),
    nu=st.floats(min_value=-2.0, max_value=2.0),
    rho=st.floats(min_value=0.0, max_value=2.0),
    pi=st.floats(min_value=0.0, max_value=1.0),
)
def test_quadrature_matches_closed_form(coeffs, nu, rho, pi):
    delta, xi, lam, gamma, theta = coeffs
    params = LinearOutcomeParams(
        delta=delta, xi=xi, lam=lam, gamma=gamma, theta_bar=theta
    )
    spec = InterferenceSpec(mu=0.8, sigma=0.4, mu_t=0.2, sigma_t=0.3)
    noise = NoiseSpec(0.1)
    state = SEState(nu=nu, rho=rho)
    exact = se_step_linear(state, params, pi, spec, noise)
    quad = se_step_general(state, linear_outcome_function(params), pi, spec, noise)
    assert quad.nu == pytest.approx(exact.nu, abs=1e-8)
    assert quad.rho == pytest.approx(exact.rho, abs=1e-8)


class TestSeTrajectory:
    def test_noise_only(self):
        params = LinearOutcomeParams(delta=0, xi=0, lam=0, gamma=0)
        d = ExperimentDesign(pi1=0.2, pi2=0.5, t1=2, t2=1)
        states = se_trajectory(
            SEState(0.0, 0.0), d, params, InterferenceSpec(mu=0, sigma=0), NoiseSpec(0.1)
        )
        np.testing.assert_allclose(trajectory_means(states), [0, 0, 0, 0])
        np.testing.assert_allclose([s.rho for s in states], [0, 0.1, 0.1, 0.1])

    def test_two_stage_hand_example(self):
        params = LinearOutcomeParams(delta=0, xi=0.5, lam=1, gamma=0)
        d = ExperimentDesign(pi1=0.2, pi2=0.5, t1=1, t2=1)
        states = se_trajectory(SEState(1.0, 0.0), d, params, UNIT_MEAN, NOISELESS)
        np.testing.assert_allclose(trajectory_means(states), [1.0, 0.7, 0.85])

    def test_all_treated_override(self):
        params = LinearOutcomeParams(delta=0, xi=0.5, lam=1, gamma=0)
        d = ExperimentDesign(
            pi1=0.2, pi2=0.5, t1=1, t2=1, all_treated_override=True
        )
        states = se_trajectory(SEState(1.0, 0.0), d, params, UNIT_MEAN, NOISELESS)
        np.testing.assert_allclose(trajectory_means(states), [1.0, 1.5, 1.75])

    def test_scale_equivariance_when_gamma_zero(self):
        c = 3.7
        d = ExperimentDesign(pi1=0.2, pi2=0.5, t1=3, t2=3)
        p1 = LinearOutcomeParams(delta=0.2, xi=0.5, lam=0.4, gamma=0, theta_bar=0.1)
        p2 = LinearOutcomeParams(
            delta=0.2 * c, xi=0.5, lam=0.4 * c, gamma=0, theta_bar=0.1 * c
        )
        m1 = trajectory_means(
            se_trajectory(SEState(1.0, 0.0), d, p1, UNIT_MEAN, NOISELESS)
        )
        m2 = trajectory_means(
            se_trajectory(SEState(c, 0.0), d, p2, UNIT_MEAN, NOISELESS)
        )
        np.testing.assert_allclose(m2, c * m1, rtol=1e-12)

    def test_divergence_names_failing_step(self):
        params = LinearOutcomeParams(delta=0, xi=1e200, lam=0, gamma=0)
        d = ExperimentDesign(pi1=0.2, pi2=0.5, t1=2, t2=2)
        with pytest.raises(Exception, match="t="):
            se_trajectory(SEState(1.0, 0.0), d, params, UNIT_MEAN, NOISELESS)


class TestEmpiricalMoments:
    def test_constant_column(self):
        panel = PanelData(outcomes=np.ones((3, 2)), treatments=np.zeros((1, 3)))
        m = empirical_moments(panel)
        np.testing.assert_allclose(m[:, 0], [1, 1])
        np.testing.assert_allclose(m[:, 1], [0, 0])

    def test_two_point_column(self):
        panel = PanelData(
            outcomes=np.array([[0.0, 0.0], [2.0, 0.0]]), treatments=np.zeros((1, 2))
        )
        m = empirical_moments(panel)
        assert m[0, 0] == pytest.approx(1.0)
        assert m[0, 1] == pytest.approx(1.0)

    def test_population_normalization(self):
        panel = PanelData(
            outcomes=np.array([[-1.0], [1.0], [3.0]]), treatments=np.zeros((0, 3))
        )
        # mean 1, second moment 11/3, population sd sqrt(8/3)
        m = empirical_moments(PanelData(
            outcomes=np.column_stack([panel.outcomes[:, 0]] * 2),
            treatments=np.zeros((1, 3)),
        ))
        assert m[0, 0] == pytest.approx(1.0)
        assert m[0, 1] == pytest.approx(np.sqrt(8.0 / 3.0))

    def test_single_unit_rejected(self):
        panel = PanelData(outcomes=np.ones((1, 3)), treatments=np.zeros((2, 1)))
        with pytest.raises(ValueError):
            empirical_moments(panel)
