import numpy as np
import pytest

from ttelab.core import (
    AssignmentMode,
    ExperimentDesign,
    InterferenceSpec,
    LinearOutcomeParams,
    NoiseSpec,
    PanelData,
    SEState,
    StreamFactory,
    TTEReport,
    panel_from_csv,
    panel_to_csv,
    report_from_json,
    report_to_json,
    spawn_stream,
    validate_panel,
)


class TestSpawnStream:
    def test_same_inputs_identical_draws(self):
        a = spawn_stream(42, "noise/t=0").random(100)
        b = spawn_stream(42, "noise/t=0").random(100)
        np.testing.assert_array_equal(a, b)

    def test_label_separation(self):
        a = spawn_stream(42, "noise/t=0").random(100)
        b = spawn_stream(42, "noise/t=1").random(100)
        assert not np.array_equal(a, b)

    def test_seed_separation(self):
        a = spawn_stream(42, "A").random(100)
        b = spawn_stream(43, "A").random(100)
        assert not np.array_equal(a, b)

    def test_factory_child_prefixes(self):
        sf = StreamFactory(7)
        child = sf.child("rep3")
        direct = spawn_stream(7, "rep3/noise").random(10)
        np.testing.assert_array_equal(child.stream("noise").random(10), direct)


class TestValidatePanel:
    def test_minimal_well_formed(self):
        panel = PanelData(outcomes=np.ones((2, 2)), treatments=np.zeros((1, 2)))
        assert validate_panel(panel).ok

    def test_nan_outcome_reports_coordinate(self):
        y = np.ones((3, 4))
        y[1, 2] = np.nan
        result = validate_panel(PanelData(outcomes=y, treatments=np.zeros((3, 3))))
        assert not result.ok
        assert any("unit 1" in v and "time 2" in v for v in result.violations)

    def test_shape_mismatch(self):
        result = validate_panel(
            PanelData(outcomes=np.ones((2, 4)), treatments=np.zeros((2, 2)))
        )
        assert not result.ok
        assert any("shape" in v for v in result.violations)


class TestExperimentDesign:
    def test_equal_probs_rejected(self):
        with pytest.raises(ValueError):
            ExperimentDesign(pi1=0.3, pi2=0.3, t1=5, t2=5)

    def test_equal_probs_allowed_with_override(self):
        d = ExperimentDesign(
            pi1=0.3, pi2=0.3, t1=5, t2=5, all_treated_override=True
        )
        assert d.pi_at(0) == 1.0

    def test_staggered_needs_increasing_probs(self):
        with pytest.raises(ValueError):
            ExperimentDesign(
                pi1=0.5, pi2=0.2, t1=5, t2=5, mode=AssignmentMode.STAGGERED_ROLLOUT
            )

    def test_schedule(self):
        d = ExperimentDesign(pi1=0.2, pi2=0.5, t1=3, t2=2)
        assert [d.pi_at(t) for t in range(5)] == [0.2, 0.2, 0.2, 0.5, 0.5]
        assert d.horizon == 5

    def test_with_override(self):
        d = ExperimentDesign(pi1=0.2, pi2=0.5, t1=3, t2=2)
        assert d.with_override(True).pi_at(0) == 1.0
        assert d.with_override(False).pi_at(4) == 0.0


class TestSpecs:
    def test_negative_sd_rejected(self):
        with pytest.raises(ValueError):
            InterferenceSpec(mu=1.0, sigma=-0.1)
        with pytest.raises(ValueError):
            NoiseSpec(sigma_e=-1.0)

    def test_unit_mean_convention(self):
        assert InterferenceSpec(mu=0.7, sigma=0.1, mu_t=0.3).is_unit_mean()
        assert not InterferenceSpec(mu=0.5, sigma=0.1).is_unit_mean()

    def test_linear_params_validation(self):
        with pytest.raises(ValueError):
            LinearOutcomeParams(delta=np.inf, xi=0, lam=0, gamma=0)
        with pytest.raises(ValueError):
            LinearOutcomeParams(
                delta=0, xi=0, lam=0, gamma=0, unit_coef_sd=(0, 0, -1, 0, 0)
            )

    def test_se_state_validation(self):
        with pytest.raises(ValueError):
            SEState(nu=0.0, rho=-0.5)


class TestSerialization:
    def test_report_json_round_trip(self, tmp_path):
        report = TTEReport(
            estimate=[0.0, 1.5, 2.25],
            ci_low=[0.0, 1.0, 2.0],
            ci_high=[0.0, 2.0, 2.5],
            ground_truth=None,
            replication_id=3,
            seed=99,
        )
        path = tmp_path / "report.json"
        report_to_json(report, path)
        back = report_from_json(path)
        np.testing.assert_array_equal(back.estimate, report.estimate)
        np.testing.assert_array_equal(back.ci_low, report.ci_low)
        assert back.ground_truth is None
        assert back.replication_id == 3
        assert back.seed == 99

    def test_panel_csv_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        panel = PanelData(
            outcomes=rng.standard_normal((4, 6)),
            treatments=(rng.random((5, 4)) < 0.5).astype(float),
        )
        path = tmp_path / "panel.csv"
        panel_to_csv(panel, path)
        back = panel_from_csv(path)
        np.testing.assert_array_equal(back.outcomes, panel.outcomes)
        np.testing.assert_array_equal(back.treatments, panel.treatments)

    def test_csv_header_and_empty_t0_treatment(self, tmp_path):
        panel = PanelData(outcomes=np.zeros((1, 2)), treatments=np.ones((1, 1)))
        path = tmp_path / "panel.csv"
        panel_to_csv(panel, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "unit,t,outcome,treatment"
        assert lines[1].endswith(",")  # t=0 has no treatment
