"""Tests for the training objective."""

import numpy as np
import pytest
import torch

from flowalign.errors import InterpolantError, ObjectiveError
from flowalign.interpolant import InterpolantSchedule
from flowalign.network import ConditionInputs
from flowalign.objective import (
    FlowAlignModel,
    TrainBatch,
    cfg_dropout,
    cfm_loss,
    make_optimizer,
    total_loss,
    train_step,
)
from flowalign.utils import RngStreams
from tests.helpers import random_conditions, random_latents, randomize_parameters, tiny_setup


class TestCfmLoss:
    """Tests for the flow matching loss."""

    def test_perfect_prediction(self):
        """Test equal prediction and target give zero."""
        u = torch.randn(2, 1, 8, 8)
        assert float(cfm_loss(u, u.clone())) == 0.0

    def test_unit_offset(self):
        """Test an offset of one everywhere gives one."""
        u = torch.randn(2, 1, 8, 8, dtype=torch.float64)
        assert float(cfm_loss(u + 1.0, u)) == pytest.approx(1.0, abs=1e-12)

    def test_zero_prediction(self):
        """Test a zero prediction gives the mean square of the target."""
        u = torch.randn(2, 1, 8, 8, dtype=torch.float64)
        expected = float((u**2).mean())
        assert float(cfm_loss(torch.zeros_like(u), u)) == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        """Test mismatched shapes are rejected."""
        with pytest.raises(InterpolantError):
            cfm_loss(torch.zeros(2, 3), torch.zeros(3, 2))


class TestCfgDropout:
    """Tests for condition dropout."""

    def _conditions(self, rows):
        return ConditionInputs(torch.ones(rows, 1, 1), torch.ones(rows, 1))

    def test_never(self):
        """Test prob=0 never drops."""
        out = cfg_dropout(self._conditions(100_000), 0.0, np.random.default_rng(0))
        assert not bool(out.dropped.any())

    def test_always(self):
        """Test prob=1 always drops."""
        out = cfg_dropout(self._conditions(100_000), 1.0, np.random.default_rng(0))
        assert bool(out.dropped.all())
        assert not out.c_v.any() and not out.c_o.any()

    def test_rate(self):
        """Test the empirical drop rate at prob=0.1."""
        out = cfg_dropout(self._conditions(100_000), 0.1, RngStreams(0).fresh("dropout"))
        rate = float(out.dropped.float().mean())
        assert 0.094 <= rate <= 0.106

    def test_joint(self):
        """Test both conditions of a row are dropped together."""
        out = cfg_dropout(self._conditions(1000), 0.5, np.random.default_rng(1))
        visual_zero = out.c_v.reshape(1000, -1).eq(0).all(dim=1)
        onset_zero = out.c_o.eq(0).all(dim=1)
        assert torch.equal(visual_zero, out.dropped)
        assert torch.equal(onset_zero, out.dropped)

    def test_invalid_probability(self):
        """Test probabilities outside [0, 1]."""
        with pytest.raises(ObjectiveError) as info:
            cfg_dropout(self._conditions(2), 1.5, np.random.default_rng(0))
        assert info.value.code == "invalid_probability"


class TestTrainBatch:
    """Tests for TrainBatch."""

    def test_draw_is_seeded(self):
        """Test equal streams give equal batches."""
        run, _, _, _ = tiny_setup()
        x_star = random_latents(run.model, 3)
        cond = random_conditions(run.model, 3)
        first = TrainBatch.draw(x_star, cond, RngStreams(5).fresh("noise"))
        second = TrainBatch.draw(x_star, cond, RngStreams(5).fresh("noise"))
        assert torch.equal(first.t, second.t)
        assert torch.equal(first.eps, second.eps)
        assert bool(((first.t >= 0) & (first.t <= 1)).all())

    def test_empty(self):
        """Test an empty batch is rejected."""
        run, _, _, _ = tiny_setup()
        with pytest.raises(ObjectiveError) as info:
            TrainBatch.draw(
                random_latents(run.model, 0),
                random_conditions(run.model, 0),
                np.random.default_rng(0),
            )
        assert info.value.code == "empty_batch"

    def test_time_out_of_range(self):
        """Test times outside [0, 1]."""
        _, _, batch, _ = tiny_setup(batch=2)
        with pytest.raises(InterpolantError):
            TrainBatch(batch.x_star, batch.cond, torch.tensor([0.5, 1.5]), batch.eps)

    def test_noise_shape(self):
        """Test noise must match the data shape."""
        _, _, batch, _ = tiny_setup(batch=2)
        with pytest.raises(InterpolantError):
            TrainBatch(batch.x_star, batch.cond, batch.t, batch.eps[:1])


class TestTotalLoss:
    """Tests for the total loss."""

    def setup_method(self):
        """Set up test fixtures."""
        self.run, self.model, self.batch, self.teacher = tiny_setup()
        self.model.double()
        randomize_parameters(self.model)
        self.batch = self.batch.to(torch.float64)
        self.schedule = InterpolantSchedule.linear()

    def test_zero_lambda(self):
        """Test lambda=0 gives exactly the flow matching part."""
        total, parts = total_loss(self.model, self.batch, self.schedule, self.teacher, 0.0)
        assert float(total) == float(parts["cfm"])

    def test_sum_of_parts(self):
        """Test total = cfm + lambda * align."""
        total, parts = total_loss(self.model, self.batch, self.schedule, self.teacher)
        expected = float(parts["cfm"]) + 0.5 * float(parts["align"])
        assert float(total) == pytest.approx(expected, abs=1e-10)
        assert float(parts["cfm"]) >= 0 and float(parts["align"]) >= 0

    def test_without_alignment_head(self):
        """Test a model without the head has no alignment term."""
        model = FlowAlignModel.build(self.run.model, 0, use_tra=False)
        total, parts = total_loss(model, self.batch.to(torch.float32), self.schedule, self.teacher)
        assert float(parts["align"]) == 0.0
        assert float(total) == float(parts["cfm"])

    def test_weight_is_batch_mean(self):
        """Test the reported weight is the batch mean of w(t)."""
        _, parts = total_loss(self.model, self.batch, self.schedule, self.teacher)
        expected = float(self.schedule.tra_weight(self.batch.t).mean())
        assert float(parts["weight"]) == pytest.approx(expected, abs=1e-12)


class TestTrainStep:
    """Tests for the optimizer step."""

    def test_trainable_set(self):
        """Test exactly the network and alignment head parameters update."""
        run, model, batch, teacher = tiny_setup()
        before = {name: p.detach().clone() for name, p in model.named_parameters()}
        teacher_before = teacher.arrays()
        optimizer = make_optimizer(model, lr=1e-2)
        train_step(model, optimizer, batch, run.schedule, teacher)

        names = set(model.trainable_names())
        assert all(n.startswith(("transformer.", "align_head.")) for n in names)
        assert any(n.startswith("align_head.conv") for n in names)
        changed = {n for n, p in model.named_parameters() if not torch.equal(p, before[n])}
        assert changed <= names
        assert changed
        for key, array in teacher.arrays().items():
            assert (array == teacher_before[key]).all()

    def test_metrics(self):
        """Test the reported step metrics."""
        run, model, batch, teacher = tiny_setup()
        metrics = train_step(model, make_optimizer(model), batch, run.schedule, teacher)
        assert set(metrics) == {"total", "cfm", "align", "weight", "grad_norm"}
        assert metrics["grad_norm"] > 0

    def test_deterministic(self):
        """Test equal seeds give bit-identical parameters after 10 steps."""
        states = []
        for _ in range(2):
            run, model, batch, teacher = tiny_setup(seed=3)
            optimizer = make_optimizer(model, lr=1e-3)
            for _ in range(10):
                train_step(model, optimizer, batch, run.schedule, teacher)
            states.append([p.detach().clone() for p in model.parameters()])
        for a, b in zip(*states):
            assert torch.equal(a, b)

    def test_non_finite_gradient(self):
        """Test a non-finite gradient aborts the step and leaves parameters alone."""
        run, model, batch, teacher = tiny_setup()
        bad_x = batch.x_star.clone()
        bad_x[0, 0, 0, 0] = float("nan")
        bad = TrainBatch(bad_x, batch.cond, batch.t, batch.eps)
        before = [p.detach().clone() for p in model.parameters()]
        with pytest.raises(ObjectiveError) as info:
            train_step(model, make_optimizer(model), bad, run.schedule, teacher)
        assert info.value.code == "non_finite_gradient"
        for param, original in zip(model.parameters(), before):
            assert torch.equal(param, original)

    def test_gradient_clipping(self):
        """Test clipping bounds the applied update but reports the raw norm."""
        run, model, batch, teacher = tiny_setup()
        metrics = train_step(
            model, make_optimizer(model), batch, run.schedule, teacher, grad_clip=1e-6
        )
        assert metrics["grad_norm"] > 1e-6

    @pytest.mark.slow
    def test_overfits_fixed_batch(self):
        """Test 200 steps on one batch halve the total loss."""
        run, model, batch, teacher = tiny_setup()
        optimizer = make_optimizer(model, lr=3e-3)
        first = train_step(model, optimizer, batch, run.schedule, teacher)["total"]
        for _ in range(199):
            last = train_step(model, optimizer, batch, run.schedule, teacher)["total"]
        assert last <= 0.5 * first
