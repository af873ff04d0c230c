import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import diff_oracle, matmul_oracle
from vtt.encoding import (
    DIFF_TYPE,
    STATE_TYPE,
    assemble_encoder_input,
    difference_features,
    project_states,
)


class TestProjectStates:
    def test_identity_projection(self):
        x = torch.randn(3, 5)
        out = project_states(x, torch.eye(5), torch.zeros(5))
        assert torch.equal(out, x)

    def test_zero_weight_gives_bias(self):
        x = torch.randn(4, 5)
        bias = torch.randn(7)
        out = project_states(x, torch.zeros(7, 5), bias)
        assert torch.allclose(out, bias.expand(4, 7))

    def test_wide_projection_matches_matmul_oracle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 768))
        w = rng.normal(size=(512, 768)) * 0.02
        b = rng.normal(size=512) * 0.02
        out = project_states(
            torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b)
        ).numpy()
        expected = np.array(matmul_oracle(x.tolist(), w.tolist(), b.tolist()))
        assert np.allclose(out, expected, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            project_states(torch.randn(2, 5), torch.randn(4, 6), torch.randn(4))


class TestDifferenceFeatures:
    def test_identical_states_zero(self):
        v = torch.ones(4, 3)
        assert torch.equal(difference_features(v), torch.zeros(4, 3))

    def test_hand_case_with_wraparound(self):
        v = torch.tensor([[1.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
        out = difference_features(v, first="wrap")
        expected = torch.tensor([[-2.0, -4.0], [2.0, 0.0], [0.0, 4.0]])
        assert torch.equal(out, expected)

    def test_zero_mode_first_row(self):
        v = torch.tensor([[1.0, 0.0], [3.0, 0.0], [3.0, 4.0]])
        out = difference_features(v, first="zero")
        assert torch.equal(out[0], torch.zeros(2))
        assert torch.equal(out[1:], difference_features(v, first="wrap")[1:])

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        v = rng.normal(size=(5, 7))
        out = difference_features(torch.from_numpy(v)).numpy()
        expected = np.array(diff_oracle(v.tolist(), wrap=True))
        assert np.array_equal(out, expected)

    def test_requires_two_states(self):
        with pytest.raises(ValueError):
            difference_features(torch.randn(1, 4))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(1, 5), st.integers(0, 10_000))
    def test_translation_invariance(self, n_states, dim, seed):
        rng = np.random.default_rng(seed)
        # Integer-valued states make float addition exact, so the invariance
        # holds bitwise including the wrap-around row.
        v = torch.tensor(rng.integers(-50, 50, size=(n_states, dim)), dtype=torch.float32)
        c = torch.tensor(rng.integers(-50, 50, size=(1, dim)), dtype=torch.float32)
        assert torch.equal(difference_features(v + c), difference_features(v))

    def test_translation_invariance_floats_close(self):
        v = torch.randn(6, 8, dtype=torch.float64)
        c = torch.randn(1, 8, dtype=torch.float64)
        assert torch.allclose(difference_features(v + c), difference_features(v), atol=1e-12)


class TestAssembleEncoderInput:
    def test_noop_path(self):
        v = torch.randn(3, 4)
        d = difference_features(v)
        inp = assemble_encoder_input(v, d, torch.zeros(2, 4), torch.zeros(6, dtype=torch.bool))
        assert torch.equal(inp.features, torch.cat([v, d]))
        assert inp.n_rows == 6 and inp.n_states == 3 and inp.has_diff

    def test_full_mask_zeroes_everything(self):
        v = torch.randn(3, 4)
        d = difference_features(v)
        inp = assemble_encoder_input(v, d, torch.randn(2, 4), torch.ones(6, dtype=torch.bool))
        assert torch.equal(inp.features, torch.zeros(6, 4))

    def test_type_embedding_additive(self):
        v = torch.randn(3, 4)
        d = difference_features(v)
        types = torch.randn(2, 4)
        inp = assemble_encoder_input(v, d, types, None)
        for i in range(3):
            assert torch.allclose(inp.features[i] - v[i], types[STATE_TYPE])
            assert torch.allclose(inp.features[3 + i] - d[i], types[DIFF_TYPE])

    def test_masked_rows_carry_no_type_embedding(self):
        v = torch.randn(2, 4)
        d = difference_features(v)
        types = torch.randn(2, 4)
        plan = torch.tensor([True, False, False, True])
        inp = assemble_encoder_input(v, d, types, plan)
        assert torch.equal(inp.features[0], torch.zeros(4))
        assert torch.equal(inp.features[3], torch.zeros(4))
        assert torch.allclose(inp.features[1], v[1] + types[STATE_TYPE])

    def test_state_only_shape(self):
        v = torch.randn(4, 8)
        inp = assemble_encoder_input(v, None, None, None)
        assert inp.n_rows == 4 and not inp.has_diff
        assert torch.equal(inp.features, v)
        assert (inp.type_ids == STATE_TYPE).all()

    def test_shape_always_even_with_diffs(self):
        for n in range(2, 7):
            v = torch.randn(n, 3)
            inp = assemble_encoder_input(v, difference_features(v), torch.zeros(2, 3), None)
            assert inp.n_rows == 2 * n and inp.n_rows % 2 == 0

    def test_mask_length_mismatch(self):
        v = torch.randn(2, 4)
        with pytest.raises(ValueError, match="mask plan"):
            assemble_encoder_input(v, difference_features(v), None, torch.zeros(3, dtype=torch.bool))
