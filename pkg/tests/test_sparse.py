import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multishot.attention import dense_attention, dense_flops, masked_dense_attention
from multishot.errors import (
    PlanLayoutMismatchError,
    ShapeMismatchError,
    UnrepresentableAsMaskError,
)
from multishot.layout import (
    ExplicitIndices,
    FirstAndLastFrame,
    FirstFrame,
    ShotSpec,
    build_token_layout,
    summary_token_indices,
)
from multishot.sparse import (
    PlanMode,
    build_sparse_plan,
    pack_varlen,
    plan_manifest,
    plan_to_dense_mask,
    sparse_flops,
    sparse_self_attention,
)


def random_layout(rng, max_shots=6):
    n = int(rng.integers(1, max_shots + 1))
    return build_token_layout(
        [ShotSpec(int(rng.integers(1, 5)), int(rng.integers(1, 9))) for _ in range(n)]
    )


def random_qkv(rng, layout, d):
    return (
        rng.standard_normal((layout.total_tokens, d)),
        rng.standard_normal((layout.total_tokens, d)),
        rng.standard_normal((layout.total_tokens, d)),
    )


class TestBuildSparsePlan:
    def test_single_shot_context_is_the_whole_shot(self):
        layout = build_token_layout([ShotSpec(2, 3)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        assert plan.kv_indices == ((0, 1, 2, 3, 4, 5),)
        # Literal keeps the own-shot summary as a distinct cache entry even
        # when it is the only shot, so the first frame appears twice.
        literal = build_sparse_plan(layout, FirstFrame(), PlanMode.LITERAL)
        assert literal.kv_indices == ((0, 1, 2, 0, 1, 2, 3, 4, 5),)

    def test_dedupe_context_of_middle_shot(self):
        layout = build_token_layout([ShotSpec(2, 2)] * 3)
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        assert plan.kv_indices[1] == (0, 1, 4, 5, 6, 7, 8, 9)

    def test_literal_context_repeats_own_summary(self):
        layout = build_token_layout([ShotSpec(2, 2)] * 3)
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.LITERAL)
        # Full summary cache (all shots) then all own tokens.
        assert plan.kv_indices[1] == (0, 1, 4, 5, 8, 9, 4, 5, 6, 7)
        assert plan.kv_indices[1].count(4) == 2

    def test_literal_has_exactly_summary_count_more_entries_per_shot(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            layout = random_layout(rng)
            strategy = FirstFrame() if rng.integers(2) else FirstAndLastFrame()
            dedupe = build_sparse_plan(layout, strategy, PlanMode.DEDUPE)
            literal = build_sparse_plan(layout, strategy, PlanMode.LITERAL)
            for i in range(layout.n_shots):
                extra = len(literal.kv_indices[i]) - len(dedupe.kv_indices[i])
                assert extra == dedupe.summary_counts[i]

    def test_offsets_cumulative_and_final_total(self):
        layout = build_token_layout([ShotSpec(1, 3), ShotSpec(2, 2)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        lengths = [len(kv) for kv in plan.kv_indices]
        assert list(plan.offsets) == [0, lengths[0], lengths[0] + lengths[1]]
        assert all(b > a for a, b in zip(plan.offsets, plan.offsets[1:]))

    def test_manifest_is_one_json_record_per_shot(self):
        layout = build_token_layout([ShotSpec(1, 2), ShotSpec(1, 2)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        lines = plan_manifest(plan).strip().splitlines()
        assert len(lines) == 2
        first = json.loads(lines[0])
        assert first == {
            "shot": 0,
            "query_range": [0, 2],
            "kv_indices": list(plan.kv_indices[0]),
        }


class TestPackVarlen:
    def test_single_shot_packs_everything_once(self):
        layout = build_token_layout([ShotSpec(2, 3)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        k = np.arange(12.0).reshape(6, 2)
        v = -k
        packed_k, packed_v, offsets = pack_varlen(plan, k, v)
        assert np.array_equal(packed_k, k)
        assert np.array_equal(packed_v, v)
        assert list(offsets) == [0, 6]

    def test_whole_shot_summaries_pack_all_rows_per_segment(self):
        layout = build_token_layout([ShotSpec(1, 2), ShotSpec(1, 2)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        k = np.arange(8.0).reshape(4, 2)
        packed_k, _, offsets = pack_varlen(plan, k, k)
        assert list(offsets) == [0, 4, 8]
        assert np.array_equal(packed_k[0:4], k)
        assert np.array_equal(packed_k[4:8], k)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=30)
    def test_gather_matches_direct_indexing(self, seed):
        rng = np.random.default_rng(seed)
        layout = random_layout(rng)
        strategy = FirstFrame() if rng.integers(2) else FirstAndLastFrame()
        mode = PlanMode.DEDUPE if rng.integers(2) else PlanMode.LITERAL
        plan = build_sparse_plan(layout, strategy, mode)
        k = rng.standard_normal((layout.total_tokens, 3))
        v = rng.standard_normal((layout.total_tokens, 3))
        packed_k, packed_v, offsets = pack_varlen(plan, k, v)
        assert offsets[-1] == sum(len(kv) for kv in plan.kv_indices)
        for i, kv in enumerate(plan.kv_indices):
            seg = slice(int(offsets[i]), int(offsets[i + 1]))
            assert np.array_equal(packed_k[seg], k[list(kv)])
            assert np.array_equal(packed_v[seg], v[list(kv)])

    def test_row_count_mismatch_rejected(self):
        layout = build_token_layout([ShotSpec(1, 2)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        with pytest.raises(PlanLayoutMismatchError):
            pack_varlen(plan, np.zeros((3, 2)), np.zeros((3, 2)))


class TestSparseSelfAttention:
    def test_single_shot_equals_dense(self):
        rng = np.random.default_rng(1)
        layout = build_token_layout([ShotSpec(2, 3)])
        q, k, v = random_qkv(rng, layout, 4)
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        sparse = sparse_self_attention(q, k, v, plan)
        dense = dense_attention(q, k, v, 1 / math.sqrt(4))
        assert np.max(np.abs(sparse - dense)) <= 1e-12

    def test_all_token_summaries_equal_dense(self):
        rng = np.random.default_rng(2)
        layout = build_token_layout([ShotSpec(2, 2), ShotSpec(1, 3), ShotSpec(3, 1)])
        q, k, v = random_qkv(rng, layout, 5)
        everything = ExplicitIndices(
            per_shot=tuple(tuple(layout.shot_token_indices(i)) for i in range(3))
        )
        plan = build_sparse_plan(layout, everything, PlanMode.DEDUPE)
        sparse = sparse_self_attention(q, k, v, plan)
        dense = dense_attention(q, k, v, 1 / math.sqrt(5))
        assert np.max(np.abs(sparse - dense)) <= 1e-10

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=40, deadline=None)
    def test_matches_masked_dense_oracle(self, seed):
        rng = np.random.default_rng(seed)
        layout = random_layout(rng)
        d = int(rng.integers(4, 33))
        q, k, v = random_qkv(rng, layout, d)
        strategy = FirstFrame() if rng.integers(2) else FirstAndLastFrame()
        plan = build_sparse_plan(layout, strategy, PlanMode.DEDUPE)
        sparse = sparse_self_attention(q, k, v, plan)
        oracle = masked_dense_attention(
            q, k, v, plan_to_dense_mask(plan), 1 / math.sqrt(d)
        )
        assert np.max(np.abs(sparse - oracle)) <= 1e-10

    def test_non_summary_tokens_of_other_shots_are_invisible(self):
        rng = np.random.default_rng(3)
        layout = build_token_layout([ShotSpec(3, 2)] * 3)
        q, k, v = random_qkv(rng, layout, 6)
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        base = sparse_self_attention(q, k, v, plan)
        # Token 10 is in shot 1's middle frame: not a summary token.
        assert 10 not in summary_token_indices(layout, FirstFrame())[1]
        k2, v2 = k.copy(), v.copy()
        k2[10] = 1e6
        v2[10] = -1e6
        perturbed = sparse_self_attention(q, k2, v2, plan)
        s0, e0 = layout.ranges[0]
        s2, e2 = layout.ranges[2]
        assert np.array_equal(base[s0:e0], perturbed[s0:e0])
        assert np.array_equal(base[s2:e2], perturbed[s2:e2])

    def test_summary_tokens_of_other_shots_are_visible(self):
        rng = np.random.default_rng(4)
        layout = build_token_layout([ShotSpec(3, 2)] * 3)
        q, k, v = random_qkv(rng, layout, 6)
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        base = sparse_self_attention(q, k, v, plan)
        summary_of_shot_1 = summary_token_indices(layout, FirstFrame())[1][0]
        k2 = k.copy()
        k2[summary_of_shot_1] += 1.0
        perturbed = sparse_self_attention(q, k2, v, plan)
        s0, e0 = layout.ranges[0]
        assert not np.allclose(base[s0:e0], perturbed[s0:e0])

    def test_literal_mode_differs_from_dedupe_on_multi_shot_inputs(self):
        rng = np.random.default_rng(5)
        layout = build_token_layout([ShotSpec(2, 2)] * 2)
        q, k, v = random_qkv(rng, layout, 4)
        dedupe = sparse_self_attention(q, k, v, build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE))
        literal = sparse_self_attention(q, k, v, build_sparse_plan(layout, FirstFrame(), PlanMode.LITERAL))
        assert not np.allclose(dedupe, literal)

    def test_row_and_width_mismatches_rejected(self):
        layout = build_token_layout([ShotSpec(1, 2)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        with pytest.raises(PlanLayoutMismatchError):
            sparse_self_attention(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros((2, 2)), plan)
        with pytest.raises(ShapeMismatchError):
            sparse_self_attention(np.zeros((2, 3)), np.zeros((2, 2)), np.zeros((2, 2)), plan)


class TestPlanToDenseMask:
    def test_single_shot_mask_is_all_true(self):
        layout = build_token_layout([ShotSpec(2, 3)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        assert plan_to_dense_mask(plan).all()

    def test_first_token_summaries_two_shots(self):
        layout = build_token_layout([ShotSpec(3, 1), ShotSpec(3, 1)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        mask = plan_to_dense_mask(plan)
        for t in range(0, 3):
            assert set(np.flatnonzero(mask[t])) == {0, 1, 2, 3}
        for t in range(3, 6):
            assert set(np.flatnonzero(mask[t])) == {0, 3, 4, 5}

    def test_literal_mode_unrepresentable(self):
        layout = build_token_layout([ShotSpec(1, 2), ShotSpec(1, 2)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.LITERAL)
        with pytest.raises(UnrepresentableAsMaskError):
            plan_to_dense_mask(plan)

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    @settings(max_examples=30)
    def test_mask_rows_are_membership_indicators(self, seed):
        rng = np.random.default_rng(seed)
        layout = random_layout(rng)
        plan = build_sparse_plan(layout, FirstAndLastFrame(), PlanMode.DEDUPE)
        mask = plan_to_dense_mask(plan)
        for (qs, qe), kv in zip(plan.query_ranges, plan.kv_indices):
            members = set(kv)
            for t in range(qs, qe):
                assert set(np.flatnonzero(mask[t])) == members


class TestSparseFlops:
    def test_single_shot_equals_dense_flops(self):
        layout = build_token_layout([ShotSpec(2, 3)])
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        report = sparse_flops(plan, 2)
        assert report.total == 288 == dense_flops(6, 6, 2)
        assert report.closed_form == 288

    def test_twelve_shot_reference_shape(self):
        layout = build_token_layout([ShotSpec(13, 120)] * 12)  # L_shot = 1560, S = 120
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        report = sparse_flops(plan, 64)
        assert all(len(kv) == 1560 + 11 * 120 for kv in plan.kv_indices)
        assert report.total == 13_801_881_600
        assert report.closed_form == 13_801_881_600
        dense_total = dense_flops(12 * 1560, 12 * 1560, 64)
        assert dense_total == 89_712_230_400
        assert dense_total * 2 == report.total * 13  # ratio exactly 6.5

    def test_per_shot_sums_to_total(self):
        rng = np.random.default_rng(6)
        for _ in range(10):
            layout = random_layout(rng)
            plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
            report = sparse_flops(plan, 8)
            assert sum(report.per_shot) == report.total

    def test_closed_form_only_on_uniform_dedupe_layouts(self):
        uniform = build_token_layout([ShotSpec(2, 3)] * 4)
        plan = build_sparse_plan(uniform, FirstFrame(), PlanMode.DEDUPE)
        report = sparse_flops(plan, 8)
        assert report.closed_form == 4 * 4 * 6 * (6 + 3 * 3) * 8
        assert report.total == report.closed_form

        ragged = build_token_layout([ShotSpec(2, 3), ShotSpec(1, 4)])
        assert sparse_flops(build_sparse_plan(ragged, FirstFrame(), PlanMode.DEDUPE), 8).closed_form is None
        literal = build_sparse_plan(uniform, FirstFrame(), PlanMode.LITERAL)
        assert sparse_flops(literal, 8).closed_form is None

    @given(
        st.integers(min_value=1, max_value=8),
        st.integers(min_value=1, max_value=4),
        st.integers(min_value=1, max_value=6),
        st.integers(min_value=1, max_value=32),
    )
    @settings(max_examples=60)
    def test_closed_form_matches_enumeration_on_uniform_layouts(self, n, frames, tpf, d):
        layout = build_token_layout([ShotSpec(frames, tpf)] * n)
        plan = build_sparse_plan(layout, FirstFrame(), PlanMode.DEDUPE)
        report = sparse_flops(plan, d)
        l_shot = frames * tpf
        assert report.closed_form == 4 * n * l_shot * (l_shot + (n - 1) * tpf) * d
        assert report.total == report.closed_form
