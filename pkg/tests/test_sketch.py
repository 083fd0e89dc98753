import json
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from rpsvm.errors import CapacityError, InvalidArgumentError
from rpsvm.sketch import (
    SketchOperator, apply_sketch, build_sketch, materialize, recommend_r, sparse_operator,
)
from oracles import naive_hadamard

KINDS = ["srht", "cw", "sign", "gaussian"]


def _operators(d, r, seed):
    yield build_sketch("srht", d, r, seed)
    yield build_sketch("cw", d, r, seed)
    yield build_sketch("cw", d, r, seed, mode="block")
    yield build_sketch("sign", d, r, seed)
    yield build_sketch("gaussian", d, r, seed)


class TestConstruction:
    def test_srht_is_deterministic(self):
        a = build_sketch("srht", 4, 4, 7)
        b = build_sketch("srht", 4, 4, 7)
        np.testing.assert_array_equal(a._state["samples"], b._state["samples"])
        np.testing.assert_array_equal(a._state["signs"], b._state["signs"])

    def test_countsketch_has_one_entry_per_input_coordinate(self):
        op = build_sketch("cw", 1000, 64, 1)
        assert op._state["buckets"].shape == (1000,)
        assert set(np.unique(op._state["signs"])) <= {-1.0, 1.0}
        R = sparse_operator(op)
        assert R.nnz == 1000
        np.testing.assert_array_equal(np.diff(R.indptr), 1)
        np.testing.assert_array_equal(np.abs(R.data), 1.0)

    def test_gaussian_entries_are_centred(self):
        r, d = 50, 100
        R = materialize(build_sketch("gaussian", d, r, 3))
        assert abs(R.mean()) <= 3.0 * (1.0 / math.sqrt(r)) / math.sqrt(d * r)

    def test_sign_entries(self):
        R = materialize(build_sketch("sign", 300, 16, 5))
        np.testing.assert_array_equal(np.unique(np.abs(R)), [0.25])

    def test_srht_two_by_two_entries(self):
        for seed in range(5):
            R = materialize(build_sketch("srht", 2, 2, seed))
            np.testing.assert_allclose(np.abs(R), 1.0 / math.sqrt(2.0), atol=1e-15)

    def test_srht_equals_scaled_product(self):
        for d, r in [(16, 5), (13, 7), (64, 64)]:
            op = build_sketch("srht", d, r, 11)
            st_ = op._state
            d_pad = st_["d_pad"]
            S = np.zeros((d_pad, r))
            S[st_["samples"], np.arange(r)] = 1.0
            full = math.sqrt(d_pad / r) * np.diag(st_["signs"]) @ naive_hadamard(d_pad) @ S
            np.testing.assert_allclose(materialize(op), full[:d], atol=1e-13)

    def test_block_mode_layout(self):
        op = build_sketch("cw", 40, 16, 2, mode="block")
        assert (op.block_a, op.block_v) == (2, 4)
        R = materialize(op)
        # a nonzeros of magnitude 1/sqrt(a) per input coordinate, all in one bucket
        np.testing.assert_array_equal((R != 0).sum(axis=1), 2)
        np.testing.assert_allclose(np.abs(R[R != 0]), 1.0 / math.sqrt(2.0))
        buckets = np.nonzero(R)[1].reshape(40, 2) // 8
        np.testing.assert_array_equal(buckets[:, 0], buckets[:, 1])

    def test_block_shape_reduces_to_divisors(self):
        op = build_sketch("cw", 10, 6, 0, mode="block")
        assert op.r % (op.block_a * op.block_v) == 0

    @pytest.mark.parametrize("bad", [dict(kind="srht", d=0, r=3), dict(kind="sign", d=3, r=0)])
    def test_rejects_bad_dimensions(self, bad):
        with pytest.raises(InvalidArgumentError):
            build_sketch(bad["kind"], bad["d"], bad["r"], 0)

    def test_rejects_unknown_kind(self):
        with pytest.raises(InvalidArgumentError, match="unknown sketch kind"):
            build_sketch("fourier", 4, 2, 0)

    def test_mode_only_for_cw(self):
        with pytest.raises(InvalidArgumentError):
            build_sketch("sign", 4, 2, 0, mode="block")

    def test_materialize_cap(self):
        with pytest.raises(CapacityError):
            materialize(build_sketch("gaussian", 100, 100, 0), cap=99)

    @pytest.mark.parametrize("op", list(_operators(37, 12, 4)), ids=lambda o: f"{o.kind.value}-{o.mode}")
    def test_descriptor_round_trip(self, op):
        desc = json.loads(json.dumps(op.to_dict()))
        again = SketchOperator.from_dict(desc)
        np.testing.assert_array_equal(materialize(again), materialize(op))

    def test_descriptor_missing_key(self):
        with pytest.raises(InvalidArgumentError, match="missing"):
            SketchOperator.from_dict({"kind": "srht", "d": 4, "r": 2})


class TestApply:
    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_matrix_maps_to_zero(self, kind):
        out, rep = apply_sketch(build_sketch(kind, 20, 6, 9), np.zeros((3, 20)))
        np.testing.assert_array_equal(out, 0.0)
        assert rep.input_nnz == 0 and rep.output_nnz == 0

    def test_srht_on_first_basis_vector(self):
        op = build_sketch("srht", 4, 4, 3)
        out, _ = apply_sketch(op, np.array([[1.0, 0.0, 0.0, 0.0]]))
        DHe1 = op._state["signs"][0] * naive_hadamard(4)[0]
        expected_sq = (4 / 4) * np.sum(DHe1[op._state["samples"]] ** 2)
        assert np.sum(out**2) == pytest.approx(expected_sq, abs=1e-14)
        np.testing.assert_allclose(out[0], materialize(op)[0], atol=1e-15)

    def test_countsketch_sign_cancellation(self):
        for seed in range(200):
            op = build_sketch("cw", 2, 2, seed)
            b, s = op._state["buckets"], op._state["signs"]
            if b[0] == b[1] and s[0] != s[1]:
                break
        else:
            pytest.fail("no colliding seed found")
        out, _ = apply_sketch(op, np.array([[1.0, 1.0]]))
        assert out[0, b[0]] == 0.0

    @pytest.mark.parametrize("seed", range(3))
    @pytest.mark.parametrize("d", [1, 5, 33, 64])
    def test_matches_materialized_product(self, seed, d):
        X = np.random.default_rng(seed).standard_normal((7, d))
        for op in _operators(d, 9, seed):
            out, _ = apply_sketch(op, X)
            np.testing.assert_allclose(out, X @ materialize(op), atol=1e-10)

    def test_sparse_and_dense_inputs_agree(self):
        X = sp.random(30, 600, density=0.02, random_state=1, format="csr")
        for op in _operators(600, 40, 8):
            dense, _ = apply_sketch(op, X.toarray())
            sparse, rep = apply_sketch(op, X)
            np.testing.assert_allclose(sparse, dense, atol=1e-12)
            assert rep.input_nnz == X.nnz

    def test_gaussian_blocks_do_not_depend_on_row_batching(self):
        op = build_sketch("gaussian", 700, 8, 4)
        X = np.random.default_rng(0).standard_normal((5, 700))
        full, _ = apply_sketch(op, X)
        parts = np.vstack([apply_sketch(op, X[i:i + 1])[0] for i in range(5)])
        np.testing.assert_allclose(full, parts, rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            apply_sketch(build_sketch("sign", 5, 2, 0), np.ones((2, 6)))

    def test_non_finite_input(self):
        with pytest.raises(InvalidArgumentError):
            apply_sketch(build_sketch("sign", 2, 2, 0), np.array([[np.nan, 1.0]]))

    def test_countsketch_never_adds_nonzeros(self):
        X = sp.random(50, 2000, density=0.01, random_state=2, format="csr")
        out, _ = apply_sketch(build_sketch("cw", 2000, 256, 1), X)
        assert np.all(np.count_nonzero(out, axis=1) <= np.diff(X.indptr))


class TestDistribution:
    @pytest.mark.parametrize("kind,mode", [("srht", None), ("cw", None), ("cw", "block"),
                                           ("sign", None), ("gaussian", None)])
    def test_isotropic_in_expectation(self, kind, mode):
        d, r, seeds = 16, 8, 2000
        acc = np.zeros((d, d))
        for s in range(seeds):
            R = materialize(build_sketch(kind, d, r, s, mode=mode))
            acc += R @ R.T
        # every entry of R R^T has variance at most about 2/r
        assert np.max(np.abs(acc / seeds - np.eye(d))) <= 6.0 * math.sqrt(2.0 / r / seeds)

    @pytest.mark.parametrize("d", [8, 13, 64])
    def test_orthogonal_srht_without_replacement(self, d):
        op = build_sketch("srht", d, 1 << (d - 1).bit_length(), 5, replace=False)
        R = materialize(op)
        np.testing.assert_allclose(R @ R.T, np.eye(d), atol=1e-12)

    def test_without_replacement_only_for_srht(self):
        with pytest.raises(InvalidArgumentError):
            build_sketch("gaussian", 4, 4, 0, replace=False)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**63 - 1), d=st.integers(1, 40), r=st.integers(1, 20),
           kind=st.sampled_from(KINDS))
    def test_operator_is_a_pure_function_of_its_descriptor(self, seed, d, r, kind):
        np.testing.assert_array_equal(materialize(build_sketch(kind, d, r, seed)),
                                      materialize(build_sketch(kind, d, r, seed)))


class TestRecommendR:
    # reference values were evaluated once with awk and frozen
    def test_gaussian(self):
        assert recommend_r("gaussian", 10, 1, 0.5, 0.5) == 120

    def test_srht(self):
        assert recommend_r("srht", 10, 1024, 0.25, 0.1) == 18133

    def test_cw(self):
        assert recommend_r("cw", 5, 1, 0.5, 0.2) == 2286

    def test_sign_ignores_delta(self):
        assert recommend_r("sign", 8, 4096, 0.3) == 1538

    def test_sign_clamps_to_one(self):
        assert recommend_r("sign", 1, math.e, 0.5) == 1

    @pytest.mark.parametrize("kind,eps", [("srht", 0.6), ("gaussian", 0.0), ("sign", -0.1), ("cw", 1.0)])
    def test_epsilon_range(self, kind, eps):
        with pytest.raises(InvalidArgumentError):
            recommend_r(kind, 4, 64, eps, 0.1)

    def test_cw_accepts_epsilon_above_half(self):
        assert recommend_r("cw", 2, 1, 0.9, 0.1) >= 1

    @pytest.mark.parametrize("delta", [0.0, 1.0, None])
    def test_delta_range(self, delta):
        with pytest.raises(InvalidArgumentError):
            recommend_r("gaussian", 4, 64, 0.5, delta)

    @settings(max_examples=60, deadline=None)
    @given(rho=st.integers(1, 50), eps=st.floats(0.05, 0.5), delta=st.floats(0.01, 0.9),
           kind=st.sampled_from(KINDS))
    def test_monotone_in_epsilon(self, rho, eps, delta, kind):
        assert recommend_r(kind, rho, 1024, eps, delta) >= recommend_r(kind, rho, 1024, min(0.5, eps * 1.5), delta)
