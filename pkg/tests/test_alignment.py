"""Tests for representation alignment."""

import pytest
import torch
import torch.nn as nn

from flowalign.alignment import (
    AlignmentHead,
    MatcherKind,
    ProjectionHead,
    TeacherEncoder,
    TeacherKind,
    alignment_loss,
    cosine_distance,
    match_sequence,
)
from flowalign.errors import AlignmentError, ConfigError
from flowalign.interpolant import InterpolantSchedule
from tests.helpers import tiny_model_config


class TestTeacherEncoder:
    """Tests for the frozen teacher."""

    def setup_method(self):
        """Set up test fixtures."""
        self.teacher = TeacherEncoder((1, 8, 8), out_len=4, out_dim=8, seed=11)

    def test_deterministic(self):
        """Test the same input twice gives bit-identical output."""
        x = torch.randn(2, 1, 8, 8)
        assert torch.equal(self.teacher.encode(x), self.teacher.encode(x))

    def test_same_seed_same_arrays(self):
        """Test teachers built from one seed share their arrays."""
        other = TeacherEncoder((1, 8, 8), out_len=4, out_dim=8, seed=11)
        for name, array in self.teacher.arrays().items():
            assert (other.arrays()[name] == array).all()

    def test_unit_rows(self):
        """Test output rows are unit norm."""
        features = self.teacher.encode(torch.randn(3, 1, 8, 8, dtype=torch.float64))
        assert features.shape == (3, 4, 8)
        assert torch.allclose(features.norm(dim=-1), torch.ones(3, 4, dtype=torch.float64))

    @pytest.mark.parametrize("kind", ["frozen_random", "spectral"])
    def test_chunk_locality(self, kind):
        """Test changing one frame changes only the row whose chunk covers it."""
        teacher = TeacherEncoder((1, 8, 8), out_len=4, out_dim=8, seed=11, kind=kind)
        x = torch.randn(1, 1, 8, 8, dtype=torch.float64)
        changed = x.clone()
        changed[..., 3] += 1.0
        before = teacher.encode(x)[0]
        after = teacher.encode(changed)[0]
        differs = [not torch.equal(before[row], after[row]) for row in range(4)]
        assert differs == [False, True, False, False]

    def test_spectral_arrays(self):
        """Test the spectral teacher keeps one mixing map over its chunk summary."""
        teacher = TeacherEncoder((1, 8, 8), out_len=4, out_dim=8, seed=11, kind="spectral")
        arrays = teacher.arrays()
        assert set(arrays) == {"mix"}
        # 8 band means plus energy and rise for 2 frames
        assert arrays["mix"].shape == (12, 8)
        assert set(self.teacher.arrays()) == {"chunk_map", "mix"}

    def test_spectral_unit_rows(self):
        """Test spectral rows are unit norm."""
        teacher = TeacherEncoder((1, 8, 8), out_len=4, out_dim=8, seed=11, kind="spectral")
        features = teacher.encode(torch.rand(3, 1, 8, 8, dtype=torch.float64))
        assert features.shape == (3, 4, 8)
        assert torch.allclose(features.norm(dim=-1), torch.ones(3, 4, dtype=torch.float64))

    def test_spectral_separates_onset_from_steady_tone(self):
        """Test a rise inside a chunk differs from a steady chunk with the same band means."""
        teacher = TeacherEncoder((1, 8, 8), out_len=4, out_dim=8, seed=11, kind="spectral")
        onset = torch.zeros(1, 1, 8, 8, dtype=torch.float64)
        onset[..., 3] = 1.0
        steady = torch.zeros(1, 1, 8, 8, dtype=torch.float64)
        steady[..., 2:4] = 0.5
        assert torch.equal(onset[..., 2:4].mean(dim=-1), steady[..., 2:4].mean(dim=-1))
        rows_onset = teacher.encode(onset)[0]
        rows_steady = teacher.encode(steady)[0]
        assert not torch.allclose(rows_onset[1], rows_steady[1])
        assert torch.equal(rows_onset[0], rows_steady[0])

    def test_kind_from_code(self):
        """Test teacher kinds parse from their config spelling."""
        assert TeacherKind.from_code("spectral") is TeacherKind.SPECTRAL
        with pytest.raises(ConfigError):
            TeacherKind.from_code("wav2vec")

    def test_single_sample(self):
        """Test an unbatched latent gives unbatched features."""
        x = torch.randn(1, 8, 8)
        assert torch.equal(self.teacher.encode(x), self.teacher.encode(x[None])[0])

    def test_indivisible_chunks(self):
        """Test teacher rows must divide the frame count."""
        with pytest.raises(AlignmentError) as info:
            TeacherEncoder((1, 8, 8), out_len=3, out_dim=8, seed=0)
        assert info.value.code == "teacher_chunking"

    def test_shape_mismatch(self):
        """Test inputs of the wrong shape are rejected."""
        with pytest.raises(AlignmentError):
            self.teacher.encode(torch.zeros(1, 1, 8, 6))


class TestProjectionHead:
    """Tests for the projection head."""

    def test_zero_tap(self):
        """Test a zero tap with zero biases projects to zero."""
        head = ProjectionHead(16, 32, 8)
        for module in head.modules():
            if isinstance(module, nn.Linear):
                nn.init.zeros_(module.bias)
        assert not head(torch.zeros(2, 5, 16)).any()

    def test_shape(self):
        """Test the head is applied per token."""
        assert ProjectionHead(16, 32, 8)(torch.randn(2, 5, 16)).shape == (2, 5, 8)


class TestMatchers:
    """Tests for sequence matchers."""

    def test_pool_identical_rows(self):
        """Test pooling identical rows returns that row."""
        row = torch.randn(8)
        proj = row.expand(2, 5, 8)
        s, y = match_sequence(MatcherKind.POOL, proj, torch.randn(2, 3, 8))
        assert s.shape == (2, 1, 8) and y.shape == (2, 1, 8)
        assert torch.allclose(s[0, 0], row, atol=1e-6)

    def test_pool_column_means(self):
        """Test pooling gives column means on both sides."""
        proj = torch.randn(2, 5, 8)
        y_a = torch.randn(2, 3, 8)
        s, y = match_sequence(MatcherKind.POOL, proj, y_a)
        assert torch.allclose(s[:, 0], proj.mean(dim=1), atol=1e-6)
        assert torch.allclose(y[:, 0], y_a.mean(dim=1), atol=1e-6)

    def test_interp_identity(self):
        """Test interpolation with equal lengths is the identity."""
        proj = torch.randn(2, 4, 8)
        y_a = torch.randn(2, 4, 8)
        s, y = match_sequence(MatcherKind.INTERP, proj, y_a)
        assert torch.allclose(s, proj, atol=1e-6)
        assert torch.equal(y, y_a)

    def test_interp_endpoints(self):
        """Test interpolation maps endpoints to endpoints."""
        proj = torch.randn(1, 16, 8)
        s, _ = match_sequence(MatcherKind.INTERP, proj, torch.randn(1, 4, 8))
        assert s.shape == (1, 4, 8)
        assert torch.allclose(s[0, 0], proj[0, 0], atol=1e-6)
        assert torch.allclose(s[0, -1], proj[0, -1], atol=1e-6)

    def test_conv_selector(self):
        """Test a 0/1 selector convolution picks rows."""
        conv = nn.Conv1d(5, 2, kernel_size=1)
        with torch.no_grad():
            conv.weight.zero_()
            conv.bias.zero_()
            conv.weight[0, 3, 0] = 1.0
            conv.weight[1, 0, 0] = 1.0
        proj = torch.randn(2, 5, 8)
        s, _ = match_sequence(MatcherKind.CONV, proj, torch.randn(2, 2, 8), conv)
        assert torch.allclose(s[:, 0], proj[:, 3], atol=1e-6)
        assert torch.allclose(s[:, 1], proj[:, 0], atol=1e-6)

    def test_conv_requires_module(self):
        """Test the convolution matcher without a convolution."""
        with pytest.raises(AlignmentError) as info:
            match_sequence(MatcherKind.CONV, torch.randn(1, 5, 8), torch.randn(1, 2, 8))
        assert info.value.code == "unknown_matcher"


class TestAlignmentLoss:
    """Tests for the weighted alignment loss."""

    def setup_method(self):
        """Set up test fixtures."""
        self.schedule = InterpolantSchedule.linear()

    def test_equal_rows(self):
        """Test identical rows give zero loss."""
        s = torch.randn(3, 4, 8, dtype=torch.float64)
        t = torch.rand(3, dtype=torch.float64)
        assert float(alignment_loss(s, s.clone(), t, self.schedule)) == pytest.approx(0, abs=1e-12)

    def test_orthogonal_rows(self):
        """Test orthogonal rows at w(t)=0.5 give 0.5."""
        s = torch.tensor([[[1.0, 0.0]]], dtype=torch.float64)
        y = torch.tensor([[[0.0, 1.0]]], dtype=torch.float64)
        schedule = InterpolantSchedule.vp()
        # w(0.5) is 0.5 up to the eps_div guard
        t = torch.tensor([0.5], dtype=torch.float64)
        assert float(alignment_loss(s, y, t, schedule)) == pytest.approx(0.5, abs=1e-4)

    def test_unweighted(self):
        """Test the unweighted loss is the plain cosine distance."""
        s = torch.tensor([[[1.0, 0.0]]], dtype=torch.float64)
        y = torch.tensor([[[0.0, 1.0]]], dtype=torch.float64)
        t = torch.tensor([0.9], dtype=torch.float64)
        assert float(alignment_loss(s, y, t, self.schedule, weighted=False)) == 1.0

    def test_vanishes_at_pure_noise(self):
        """Test the loss is negligible at t=1."""
        s = torch.randn(2, 4, 8, dtype=torch.float64)
        y = -s
        t = torch.ones(2, dtype=torch.float64)
        assert float(alignment_loss(s, y, t, self.schedule)) <= 1e-11

    def test_monotone_in_time(self):
        """Test the loss does not increase with t for fixed rows."""
        s = torch.randn(1, 4, 8, dtype=torch.float64)
        y = torch.randn(1, 4, 8, dtype=torch.float64)
        values = [
            float(alignment_loss(s, y, torch.tensor([t], dtype=torch.float64), self.schedule))
            for t in torch.linspace(0, 1, 21).tolist()
        ]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_cosine_distance_zero_rows(self):
        """Test zero rows stay finite under the norm floor."""
        distance = cosine_distance(torch.zeros(1, 2, 4), torch.randn(1, 2, 4))
        assert torch.isfinite(distance).all()


class TestAlignmentHead:
    """Tests for the trainable alignment head."""

    @pytest.mark.parametrize("matcher", ["pool", "interp", "conv"])
    def test_shapes(self, matcher):
        """Test each matcher produces comparable shapes."""
        config = tiny_model_config(matcher=matcher)
        head = AlignmentHead(config)
        tap = torch.randn(2, config.num_tokens, config.hidden_dim)
        y_a = torch.randn(2, config.teacher_len, config.teacher_dim)
        s, y = head(tap, y_a)
        assert s.shape == y.shape
        assert (head.conv is not None) == (matcher == "conv")

    def test_matched_cosine_range(self):
        """Test the matched cosine lies in [-1, 1]."""
        config = tiny_model_config()
        head = AlignmentHead(config)
        tap = torch.randn(2, config.num_tokens, config.hidden_dim)
        y_a = torch.randn(2, config.teacher_len, config.teacher_dim)
        assert -1.0 <= head.matched_cosine(tap, y_a) <= 1.0

    @pytest.mark.parametrize("matcher", ["pool", "interp", "conv"])
    def test_rescaling_leaves_loss_unchanged(self, matcher):
        """Test the loss ignores the scale of the matched rows and the teacher features."""
        config = tiny_model_config(matcher=matcher)
        head = AlignmentHead(config).double()
        tap = torch.randn(3, config.num_tokens, config.hidden_dim, dtype=torch.float64)
        y_a = torch.randn(3, config.teacher_len, config.teacher_dim, dtype=torch.float64)
        t = torch.rand(3, dtype=torch.float64)
        schedule = InterpolantSchedule.linear()
        s, y = head(tap, y_a)
        base = float(alignment_loss(s, y, t, schedule))
        assert float(alignment_loss(3.0 * s, y, t, schedule)) == pytest.approx(base, rel=1e-10)
        assert float(alignment_loss(s, 0.25 * y, t, schedule)) == pytest.approx(base, rel=1e-10)
        assert float(head.loss(tap, 5.0 * y_a, t, schedule)) == pytest.approx(base, rel=1e-10)

    @pytest.mark.parametrize("matcher", ["pool", "interp", "conv"])
    def test_training_halves_loss(self, matcher):
        """Test 200 optimizer steps on the alignment loss alone at least halve it."""
        config = tiny_model_config(matcher=matcher)
        head = AlignmentHead(config)
        teacher = TeacherEncoder.from_config(config, seed=5)
        tap = torch.randn(8, config.num_tokens, config.hidden_dim)
        y_a = teacher.encode(torch.randn((8,) + config.latent_shape))
        t = torch.full((8,), 0.25)
        schedule = InterpolantSchedule.linear()
        optimizer = torch.optim.Adam(head.parameters(), lr=1e-2)

        with torch.no_grad():
            start = float(head.loss(tap, y_a, t, schedule))
        for _ in range(200):
            optimizer.zero_grad()
            loss = head.loss(tap, y_a, t, schedule)
            loss.backward()
            optimizer.step()
        with torch.no_grad():
            end = float(head.loss(tap, y_a, t, schedule))
        assert end <= 0.5 * start
