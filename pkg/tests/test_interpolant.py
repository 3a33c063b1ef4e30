"""Tests for interpolant schedules."""

import math

import pytest
import torch

from flowalign.errors import ConfigError, InterpolantError
from flowalign.interpolant import InterpolantSchedule, ScheduleKind


class TestCoefficients:
    """Tests for schedule coefficients."""

    def test_linear_endpoints(self):
        """Test linear coefficients at t=0 and t=1."""
        schedule = InterpolantSchedule.linear()
        assert schedule.coefficients(0.0) == (1.0, 0.0, -1.0, 1.0)
        assert schedule.coefficients(1.0) == (0.0, 1.0, -1.0, 1.0)

    def test_vp_midpoint(self):
        """Test VP coefficients at t=0.5."""
        alpha, sigma, dalpha, dsigma = InterpolantSchedule.vp().coefficients(0.5)
        assert alpha == pytest.approx(0.70711, abs=1e-5)
        assert sigma == pytest.approx(0.70711, abs=1e-5)
        assert dalpha == pytest.approx(-1.11072, abs=1e-5)
        assert dsigma == pytest.approx(1.11072, abs=1e-5)

    def test_vp_normalization(self):
        """Test alpha^2 + sigma^2 = 1 on a dense grid."""
        t = torch.linspace(0, 1, 1001, dtype=torch.float64)
        alpha, sigma, _, _ = InterpolantSchedule.vp().coefficients(t)
        assert float((alpha**2 + sigma**2 - 1).abs().max()) < 1e-12

    def test_tensor_matches_scalar(self):
        """Test tensor and float evaluation agree."""
        schedule = InterpolantSchedule.vp()
        t = torch.tensor([0.25], dtype=torch.float64)
        pairs = zip(schedule.coefficients(t), schedule.coefficients(0.25))
        for tensor_value, scalar_value in pairs:
            assert float(tensor_value[0]) == pytest.approx(scalar_value, abs=1e-15)

    @pytest.mark.parametrize("t", [-0.1, 1.5])
    def test_time_out_of_range(self, t):
        """Test times outside [0, 1] are rejected."""
        with pytest.raises(InterpolantError) as info:
            InterpolantSchedule.linear().coefficients(t)
        assert info.value.code == "time_out_of_range"

    def test_tensor_time_out_of_range(self):
        """Test a tensor containing an invalid time is rejected."""
        with pytest.raises(InterpolantError):
            InterpolantSchedule.linear().coefficients(torch.tensor([0.2, 1.2]))


class TestPerturbation:
    """Tests for perturb and velocity_target."""

    def setup_method(self):
        """Set up test fixtures."""
        self.schedule = InterpolantSchedule.linear()
        self.x_star = torch.tensor([1.0, 0.0], dtype=torch.float64)
        self.eps = torch.tensor([0.0, 1.0], dtype=torch.float64)

    def test_endpoints(self):
        """Test t=0 gives data and t=1 gives noise."""
        eps = torch.randn(2, dtype=torch.float64)
        assert torch.equal(self.schedule.perturb(self.x_star, eps, 0.0), self.x_star)
        assert torch.equal(self.schedule.perturb(self.x_star, eps, 1.0), eps)

    def test_midpoint(self):
        """Test the linear midpoint."""
        x_t = self.schedule.perturb(self.x_star, self.eps, 0.5)
        assert torch.equal(x_t, torch.tensor([0.5, 0.5], dtype=torch.float64))

    def test_linear_target(self):
        """Test the linear velocity target is eps - x_star."""
        target = self.schedule.velocity_target(self.x_star, self.eps, 0.3)
        assert torch.equal(target, torch.tensor([-1.0, 1.0], dtype=torch.float64))

    def test_linear_target_vanishes_when_noise_equals_data(self):
        """Test the target is zero when eps equals x_star."""
        x = torch.randn(5, dtype=torch.float64)
        target = self.schedule.velocity_target(x, x, 0.7)
        assert torch.equal(target, torch.zeros(5, dtype=torch.float64))

    def test_vp_target_at_zero(self):
        """Test the VP target at t=0 is (pi/2) eps."""
        target = InterpolantSchedule.vp().velocity_target(
            torch.tensor([1.0], dtype=torch.float64), torch.tensor([2.0], dtype=torch.float64), 0.0
        )
        assert float(target[0]) == pytest.approx(math.pi, abs=1e-12)

    def test_per_sample_times(self):
        """Test per-sample times broadcast over trailing dimensions."""
        x_star = torch.ones(3, 2, 4, dtype=torch.float64)
        eps = torch.zeros(3, 2, 4, dtype=torch.float64)
        t = torch.tensor([0.0, 0.5, 1.0], dtype=torch.float64)
        x_t = self.schedule.perturb(x_star, eps, t)
        assert torch.equal(x_t[:, 0, 0], torch.tensor([1.0, 0.5, 0.0], dtype=torch.float64))

    def test_shape_mismatch(self):
        """Test mismatched data and noise shapes are rejected."""
        with pytest.raises(InterpolantError) as info:
            self.schedule.perturb(torch.zeros(2), torch.zeros(3), 0.5)
        assert info.value.code == "shape_mismatch"


class TestTraWeight:
    """Tests for the alignment timestep weight."""

    def test_linear_midpoint(self):
        """Test the linear weight at t=0.5."""
        assert InterpolantSchedule.linear().tra_weight(0.5) == pytest.approx(0.499995, abs=1e-6)

    def test_vp_midpoint(self):
        """Test the VP weight at t=0.5 is about one half."""
        assert InterpolantSchedule.vp().tra_weight(0.5) == pytest.approx(0.5, abs=1e-4)

    def test_endpoints(self):
        """Test w(0) is about 1 and w(1) is about 0."""
        schedule = InterpolantSchedule.linear()
        assert schedule.tra_weight(0.0) >= 0.999
        assert schedule.tra_weight(1.0) <= 1e-6

    def test_monotone(self):
        """Test the weight is non-increasing in t."""
        t = torch.linspace(0, 1, 1001, dtype=torch.float64)
        weights = InterpolantSchedule.linear().tra_weight(t)
        assert bool((weights[1:] <= weights[:-1]).all())
        assert float(weights[0]) >= 0.999
        assert float(weights[-1]) <= 1e-6

    def test_tensor_matches_scalar(self):
        """Test tensor and float weights agree."""
        schedule = InterpolantSchedule.linear()
        t = torch.tensor([0.1, 0.9], dtype=torch.float64)
        weights = schedule.tra_weight(t)
        assert float(weights[0]) == pytest.approx(schedule.tra_weight(0.1), abs=1e-12)
        assert float(weights[1]) == pytest.approx(schedule.tra_weight(0.9), abs=1e-12)


class TestConversions:
    """Tests for velocity to noise and score conversions."""

    def test_linear_example(self):
        """Test noise recovery from the perfect linear velocity."""
        schedule = InterpolantSchedule.linear()
        x = torch.tensor([0.5, 0.5], dtype=torch.float64)
        v = torch.tensor([-1.0, 1.0], dtype=torch.float64)
        eps = schedule.velocity_to_noise(x, v, 0.5)
        assert torch.equal(eps, torch.tensor([0.0, 1.0], dtype=torch.float64))

    @pytest.mark.parametrize("kind", [ScheduleKind.LINEAR, ScheduleKind.VP])
    def test_round_trip(self, kind):
        """Test the true velocity recovers the noise at random times."""
        schedule = InterpolantSchedule(kind)
        for t in torch.rand(10, dtype=torch.float64).tolist():
            x_star = torch.randn(6, dtype=torch.float64)
            eps = torch.randn(6, dtype=torch.float64)
            x_t = schedule.perturb(x_star, eps, t)
            v = schedule.velocity_target(x_star, eps, t)
            assert float((schedule.velocity_to_noise(x_t, v, t) - eps).abs().max()) < 1e-8

    def test_score(self):
        """Test the score is -eps / sigma."""
        schedule = InterpolantSchedule.linear()
        x_star = torch.randn(4, dtype=torch.float64)
        eps = torch.randn(4, dtype=torch.float64)
        x_t = schedule.perturb(x_star, eps, 0.5)
        score = schedule.velocity_to_score(x_t, schedule.velocity_target(x_star, eps, 0.5), 0.5)
        assert torch.allclose(score, -eps / 0.5, atol=1e-12)

    def test_score_rejects_zero_sigma(self):
        """Test the score is undefined at t=0."""
        schedule = InterpolantSchedule.linear()
        with pytest.raises(InterpolantError) as info:
            schedule.velocity_to_score(torch.zeros(2), torch.zeros(2), 0.0)
        assert info.value.code == "degenerate_denominator"


class TestScheduleConfig:
    """Tests for schedule validation."""

    def test_kind_from_code(self):
        """Test the kind is parsed from its config spelling."""
        assert InterpolantSchedule("vp").kind == ScheduleKind.VP

    def test_unknown_kind(self):
        """Test an unknown spelling is rejected."""
        with pytest.raises(ConfigError) as info:
            InterpolantSchedule("cosine")
        assert info.value.code == "unknown_choice"

    def test_invalid_eps_div(self):
        """Test a non-positive guard is rejected."""
        with pytest.raises(InterpolantError) as info:
            InterpolantSchedule.linear(eps_div=0.0)
        assert info.value.code == "invalid_schedule"
