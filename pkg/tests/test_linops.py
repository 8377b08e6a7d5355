"""Operator layer: transforms, measurement ensembles, adjoint identities."""

import numpy as np
import pytest

from cosparse.linops import (
    SamplingPattern,
    dft,
    make_finite_difference,
    make_partial_fourier_video,
    make_spread_spectrum,
    split_real,
)
from cosparse.seeds import rng_from


def adjoint_error(op, rng):
    u = rng.standard_normal(op.cols)
    if op.field == "complex":
        v = rng.standard_normal(op.rows) + 1j * rng.standard_normal(op.rows)
    else:
        v = rng.standard_normal(op.rows)
    lhs = np.vdot(v, op.forward(u))
    rhs = np.vdot(op.adjoint(v), u)
    return abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v))


class TestDft:
    def test_impulse_is_flat(self):
        out = dft(np.array([1.0, 0.0, 0.0, 0.0]))
        assert np.allclose(out, 0.5 * np.ones(4), atol=1e-14)

    def test_constant_hits_dc_bin(self):
        out = dft(np.array([1.0, 1.0, 1.0, 1.0]))
        assert np.allclose(out, [2.0, 0.0, 0.0, 0.0], atol=1e-14)

    def test_round_trip_arbitrary_length(self):
        rng = rng_from(0)
        x = rng.standard_normal(96)
        back = dft(dft(x), inverse=True)
        assert np.linalg.norm(back - x) <= 1e-12 * np.linalg.norm(x)

    def test_length_one_identity(self):
        assert dft(np.array([3.5]))[0] == 3.5


class TestSpreadSpectrum:
    def test_full_sampling_is_isometry(self):
        op, _ = make_spread_spectrum(8, 8, seed=5, exclude_conjugate_pairs=False)
        rng = rng_from(1)
        x = rng.standard_normal(8)
        assert np.max(np.abs(op.adjoint(op.forward(x)) - x)) <= 1e-12

    def test_adjoint_identity_at_protocol_size(self):
        op, _ = make_spread_spectrum(2304, 576, seed=1)
        rng = rng_from(2)
        assert adjoint_error(op, rng) <= 1e-10

    def test_deterministic_given_seed(self):
        op1, pat1 = make_spread_spectrum(64, 20, seed=9)
        op2, pat2 = make_spread_spectrum(64, 20, seed=9)
        assert np.array_equal(op1.signs, op2.signs)
        assert np.array_equal(pat1.frames[0], pat2.frames[0])

    def test_conjugate_pairs_not_doubly_selected(self):
        n = 64
        op, pat = make_spread_spectrum(n, 33, seed=3)
        rows = set(int(k) for k in pat.frames[0])
        for k in rows:
            partner = (-k) % n
            assert partner == k or partner not in rows

    def test_oversampling_under_exclusion_raises(self):
        with pytest.raises(ValueError):
            make_spread_spectrum(64, 34, seed=0)  # only n/2 + 1 = 33 admissible

    def test_normal_matches_adjoint_forward(self):
        op, _ = make_spread_spectrum(48, 20, seed=7)
        rng = rng_from(3)
        x = rng.standard_normal(48)
        assert np.allclose(op.normal(x), op.adjoint(op.forward(x)), atol=1e-14)


class TestSplitReal:
    def test_splits_measurement_vector(self):
        op, _ = make_spread_spectrum(16, 6, seed=1)
        sop, ys = split_real(op, np.array([3.0 + 4.0j] * 6))
        assert sop.rows == 12
        assert np.allclose(ys[:6], 3.0) and np.allclose(ys[6:], 4.0)
        assert np.isclose(np.linalg.norm(ys), np.linalg.norm([5.0] * 6) / np.sqrt(6) * np.sqrt(6))

    def test_norm_preserved(self):
        rng = rng_from(4)
        op, _ = make_spread_spectrum(32, 12, seed=2)
        y = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        _, ys = split_real(op, y)
        assert np.isclose(np.linalg.norm(ys), np.linalg.norm(y))

    def test_adjoint_is_real_part_of_inner_adjoint(self):
        rng = rng_from(5)
        op, _ = make_spread_spectrum(32, 12, seed=2)
        sop = split_real(op)
        v = rng.standard_normal(24)
        expected = op.adjoint(v[:12] + 1j * v[12:]).real
        assert np.allclose(sop.adjoint(v), expected, atol=1e-12)
        assert adjoint_error(sop, rng) <= 1e-10

    def test_rejects_real_operator(self):
        with pytest.raises(ValueError):
            split_real(make_finite_difference(4, 4, "vertical"))

    def test_gram_diagonal_matches_dense(self):
        op, _ = make_spread_spectrum(16, 7, seed=11)
        sop = split_real(op)
        diag = sop.gram_diagonal()
        dense = sop.to_dense()
        assert np.allclose(np.diag(dense @ dense.T), diag, atol=1e-12)
        off = dense @ dense.T - np.diag(diag)
        assert np.max(np.abs(off)) <= 1e-12


class TestFiniteDifference:
    def test_constant_image_maps_to_zero(self):
        op = make_finite_difference(5, 7, "vertical")
        assert np.allclose(op.forward(np.ones(35)), 0.0)

    def test_two_pixel_definition(self):
        op = make_finite_difference(2, 1, "vertical")
        assert np.allclose(op.forward(np.array([1.0, 4.0])), [3.0])

    def test_row_counts(self):
        assert make_finite_difference(6, 4, "vertical").rows == 5 * 4
        assert make_finite_difference(6, 4, "horizontal").rows == 6 * 3

    def test_too_short_axis_raises(self):
        with pytest.raises(ValueError):
            make_finite_difference(1, 4, "vertical")

    def test_rank_one_structure_nonzero_count(self):
        # X = x1 1^T + 1 x2^T with k vertical steps in x1: the vertical
        # difference has exactly k*n2 nonzeros (direct construction oracle)
        n = 6
        k = 3
        x1 = np.zeros(n)
        for pos, amp in ((1, 1.2), (3, -0.7), (5, 2.1)):
            x1[pos:] += amp
        x2 = np.array([0.3, 0.3, -1.0, -1.0, 0.5, 0.5])
        img = np.outer(x1, np.ones(n)) + np.outer(np.ones(n), x2)
        op = make_finite_difference(n, n, "vertical")
        out = op.forward(img.ravel())
        assert np.count_nonzero(np.abs(out) > 1e-12) == k * n

    def test_adjoint_identity(self):
        rng = rng_from(6)
        for axis in ("vertical", "horizontal"):
            op = make_finite_difference(9, 5, axis)
            for _ in range(20):
                assert adjoint_error(op, rng) <= 1e-10


class TestPartialFourierVideo:
    def test_full_sampling_is_unitary(self):
        op, _ = make_partial_fourier_video(16, 3, 16, seed=2,
                                           exclude_conjugate_pairs=False)
        rng = rng_from(7)
        x = rng.standard_normal(48)
        assert np.max(np.abs(op.adjoint(op.forward(x)) - x)) <= 1e-12

    def test_adjoint_identity(self):
        op, _ = make_partial_fourier_video(24, 5, 7, seed=4)
        rng = rng_from(8)
        for _ in range(20):
            assert adjoint_error(op, rng) <= 1e-10

    def test_patterns_vary_across_frames(self):
        _, pat = make_partial_fourier_video(64, 6, 12, seed=5)
        frames = [tuple(int(v) for v in f) for f in pat.frames]
        assert len(set(frames)) > 1

    def test_dc_always_kept(self):
        _, pat = make_partial_fourier_video(32, 4, 5, seed=6)
        for f in pat.frames:
            assert 0 in f

    def test_low_frequencies_oversampled(self):
        n1, m1 = 64, 12
        cutoff = n1 // 8
        admissible = n1 // 2 + 1
        uniform_fraction = cutoff / admissible
        fractions = []
        for seed in range(10):
            _, pat = make_partial_fourier_video(n1, 4, m1, seed=seed)
            sel = np.concatenate(pat.frames)
            fractions.append(np.mean(sel < cutoff))
        assert np.mean(fractions) > uniform_fraction

    def test_oversampled_frame_raises(self):
        with pytest.raises(ValueError):
            make_partial_fourier_video(16, 2, 10, seed=0)  # 9 admissible

    def test_pattern_json_round_trip(self):
        _, pat = make_partial_fourier_video(32, 3, 6, seed=9, density_sigma=0.2)
        clone = SamplingPattern.from_json(pat.to_json())
        assert clone.seed == pat.seed
        assert clone.density_sigma == pat.density_sigma
        for a, b in zip(clone.frames, pat.frames):
            assert np.array_equal(a, b)
