"""Signal generators, noise, metrics, and the paired-seed trial runner."""

import math

import numpy as np
import pytest

from cosparse.dictionaries import make_finite_difference_dictionary
from cosparse.experiments import (
    ExperimentSpec,
    add_awgn,
    gen_dmri_profile,
    gen_finite_diff_2d,
    gen_shepp_logan,
    load_image_pgm,
    measurement_snr_db,
    parse_dictionary_spec,
    recovery_snr_db,
    run_trials,
    split_transition_counts,
    write_pgm,
)
from cosparse.linops import make_finite_difference
from cosparse.seeds import rng_from


class TestFiniteDifferenceSignal:
    def test_balanced_split(self):
        assert split_transition_counts(1.0, 28) == (14, 14)

    def test_extreme_split(self):
        assert split_transition_counts(27.0, 28) == (27, 1)

    def test_round_half_up_preserves_total(self):
        for alpha in (1.0, 2.0, 3.0, 9.0, 19.0):
            k1, k2 = split_transition_counts(alpha, 20)
            assert k1 + k2 == 20

    def test_vertical_difference_count_matches_split(self):
        n = 32
        alpha, total = 9.0, 20
        k1, _ = split_transition_counts(alpha, total)
        x = gen_finite_diff_2d(alpha, total, n, seed=5)
        out = make_finite_difference(n, n, "vertical").forward(x)
        assert np.count_nonzero(np.abs(out) > 1e-12) == k1 * n

    def test_too_many_transitions_rejected(self):
        with pytest.raises(ValueError):
            gen_finite_diff_2d(40.0, 41, 16, seed=0)

    def test_deterministic(self):
        a = gen_finite_diff_2d(3.0, 12, 16, seed=9)
        b = gen_finite_diff_2d(3.0, 12, 16, seed=9)
        assert np.array_equal(a, b)


class TestPhantom:
    def test_intensity_range(self):
        img = gen_shepp_logan(96, 96)
        assert img.min() >= 0.0
        assert img.max() <= 1.02

    def test_skull_ring_is_mirror_symmetric(self):
        # the bright ring comes from the two centered ellipses only, so its
        # support must match its left-right mirror exactly
        img = gen_shepp_logan(96, 96)
        ring = img > 0.5
        assert np.array_equal(ring, ring[:, ::-1])

    def test_bulk_left_right_symmetry(self):
        # interior features are nearly mirror symmetric; the standard table
        # breaks exact symmetry only in a few small low-contrast ellipses
        img = gen_shepp_logan(128, 128)
        diff = np.abs(img - img[:, ::-1])
        assert np.mean(diff > 1e-12) < 0.12
        assert diff.max() <= 0.21

    def test_complex_flag_duplicates_real_part(self):
        img = gen_shepp_logan(32, 32, complex_valued=True)
        assert np.array_equal(img.real, img.imag)

    def test_minimum_size_enforced(self):
        with pytest.raises(ValueError):
            gen_shepp_logan(8, 32)


class TestPgmIo:
    def test_binary_round_trip(self, tmp_path):
        rng = rng_from(80)
        img = np.round(rng.uniform(0, 1, (9, 7)) * 255) / 255.0
        path = tmp_path / "img.pgm"
        write_pgm(path, img)
        back = load_image_pgm(path)
        assert back.shape == (9, 7)
        assert np.max(np.abs(back - img)) <= 1e-12

    def test_ascii_parsing_with_comments(self, tmp_path):
        path = tmp_path / "a.pgm"
        path.write_bytes(b"P2\n# comment line\n2 2\n255\n0 255\n255 0\n")
        img = load_image_pgm(path)
        assert np.array_equal(img, [[0.0, 1.0], [1.0, 0.0]])

    def test_sixteen_bit_binary(self, tmp_path):
        data = np.array([[0, 65535], [32768, 1]], dtype=">u2")
        path = tmp_path / "b.pgm"
        path.write_bytes(b"P5\n2 2\n65535\n" + data.tobytes())
        img = load_image_pgm(path)
        assert np.isclose(img[0, 1], 1.0)
        assert np.isclose(img[1, 0], 32768 / 65535)

    def test_center_crop(self, tmp_path):
        img = np.arange(100 * 110).reshape(100, 110) % 251 / 255.0
        path = tmp_path / "c.pgm"
        write_pgm(path, np.round(img * 255) / 255.0)
        cropped = load_image_pgm(path, crop=(96, 104))
        assert cropped.shape == (96, 104)
        full = load_image_pgm(path)
        assert np.array_equal(cropped, full[2:98, 3:107])

    def test_malformed_header_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P6\n2 2\n255\n\x00\x00\x00\x00")
        with pytest.raises(ValueError):
            load_image_pgm(path)

    def test_truncated_data_rejected(self, tmp_path):
        path = tmp_path / "short.pgm"
        path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
        with pytest.raises(ValueError):
            load_image_pgm(path)


class TestSpatioTemporalProfile:
    def test_temporal_variation_below_spatial(self):
        img = gen_dmri_profile(64, 24, seed=0)
        d = make_finite_difference_dictionary(64, 24)
        vec = img.ravel()
        spatial = d.band_l1_norms(vec)[0]   # along axis 0 (space)
        temporal = d.band_l1_norms(vec)[1]  # along axis 1 (time)
        assert temporal < spatial

    def test_static_content_has_zero_temporal_difference(self):
        img = gen_dmri_profile(64, 24, seed=1)
        static = np.tile(img[:, :1], (1, 24))
        out = make_finite_difference(64, 24, "horizontal").forward(static.ravel())
        assert np.allclose(out, 0.0)

    def test_deterministic(self):
        assert np.array_equal(gen_dmri_profile(48, 16, seed=3),
                              gen_dmri_profile(48, 16, seed=3))

    def test_size_floor(self):
        with pytest.raises(ValueError):
            gen_dmri_profile(16, 16, seed=0)


class TestNoise:
    def test_realized_snr_tracks_target(self):
        rng = rng_from(81)
        y = rng.standard_normal(400) + 1j * rng.standard_normal(400)
        realized = []
        for seed in range(20):
            yn, s2 = add_awgn(y, 40.0, seed, "complex")
            realized.append(measurement_snr_db(yn, s2))
        realized = np.array(realized)
        assert np.all((realized > 39.5) & (realized < 40.5))
        assert abs(realized.mean() - 40.0) <= 0.1

    def test_infinite_target_is_noiseless(self):
        y = np.ones(8, dtype=complex)
        yn, s2 = add_awgn(y, math.inf, 0, "complex")
        assert s2 == 0.0
        assert np.array_equal(yn, y)

    def test_complex_noise_is_circular(self):
        y = np.ones(10000, dtype=complex)
        yn, s2 = add_awgn(y, 10.0, 7, "complex")
        w = yn - y
        vr = np.var(w.real)
        vi = np.var(w.imag)
        assert abs(vr - vi) <= 0.05 * max(vr, vi)
        assert abs(vr + vi - s2) <= 0.05 * s2

    def test_zero_signal_rejected(self):
        with pytest.raises(ValueError):
            add_awgn(np.zeros(4), 30.0, 0, "real")


class TestRecoverySnr:
    def test_exact_recovery_is_infinite(self):
        x = np.arange(1.0, 5.0)
        assert recovery_snr_db(x, x.copy()) == math.inf

    def test_zero_estimate_is_zero_db(self):
        x = np.arange(1.0, 5.0)
        assert abs(recovery_snr_db(x, np.zeros(4))) <= 1e-12

    def test_ten_percent_error_is_twenty_db(self):
        rng = rng_from(82)
        x = rng.standard_normal(50)
        e = rng.standard_normal(50)
        e *= np.linalg.norm(x) / (10 * np.linalg.norm(e))
        assert abs(recovery_snr_db(x, x + e) - 20.0) <= 1e-9

    def test_zero_reference_rejected(self):
        with pytest.raises(ValueError):
            recovery_snr_db(np.zeros(3), np.ones(3))


def tiny_spec(**overrides):
    base = dict(
        name="unit",
        generator="finite_diff_2d",
        gen_params={"n": 16, "total_transitions": 6, "alpha": 3.0},
        operator="spread_spectrum",
        sampling_ratio=0.4,
        measurement_snr_db=40.0,
        algorithms=("l1", "co_l1"),
        trials=1,
        base_seed=11,
        dictionary="finite_difference",
        outer={"max_outer": 3},
        inner={"max_iterations": 20},
    )
    base.update(overrides)
    return ExperimentSpec(**base)


class TestTrialRunner:
    def test_single_trial_median_equals_record(self):
        table = run_trials(tiny_spec())
        rec = [r for r in table.records if r.algorithm == "co_l1"][0]
        assert table.medians[("co_l1", None)]["median_snr_db"] == rec.recovery_snr_db

    def test_algorithm_order_does_not_change_records(self):
        t1 = run_trials(tiny_spec(algorithms=("l1", "co_l1")))
        t2 = run_trials(tiny_spec(algorithms=("co_l1", "l1")))
        by_algo_1 = {r.algorithm: r.recovery_snr_db for r in t1.records}
        by_algo_2 = {r.algorithm: r.recovery_snr_db for r in t2.records}
        assert by_algo_1 == by_algo_2

    def test_threaded_run_matches_serial(self):
        spec = tiny_spec(trials=3)
        serial = run_trials(spec, threads=1)
        threaded = run_trials(spec, threads=3)
        assert [r.recovery_snr_db for r in serial.records] == \
               [r.recovery_snr_db for r in threaded.records]

    def test_failed_trials_recorded_not_silently_dropped(self):
        # the fixed-scale hybrid without scales must fail loudly per trial
        spec = tiny_spec(algorithms=("l1", "co_irw_l1_eps"))
        table = run_trials(spec)
        failed = [r for r in table.records if r.failed]
        assert len(failed) == 1 and failed[0].algorithm == "co_irw_l1_eps"
        assert ("co_irw_l1_eps", None) not in table.medians
        assert ("l1", None) in table.medians

    def test_sweep_values_paired_across_algorithms(self):
        spec = tiny_spec(sweep_param="alpha", sweep_values=(1.0, 3.0), trials=2)
        table = run_trials(spec)
        seeds = {}
        for r in table.records:
            seeds.setdefault((r.sweep_value, r.trial_index), set()).add(r.seed)
        assert all(len(s) == 1 for s in seeds.values())

    def test_realized_snr_recorded_near_target(self):
        table = run_trials(tiny_spec())
        for r in table.records:
            assert abs(r.measurement_snr_db - 40.0) <= 0.5

    def test_spec_round_trips_through_dict(self):
        spec = tiny_spec(sweep_param="alpha", sweep_values=(1.0, 2.0))
        clone = ExperimentSpec.from_dict(spec.to_dict())
        assert clone == spec


class TestDictionarySpecParsing:
    def test_finite_difference_alias(self):
        assert parse_dictionary_spec("fd") == {"kind": "finite_difference"}

    def test_wavelet_spec(self):
        assert parse_dictionary_spec("uwt:db1+db2:2") == {
            "kind": "uwt", "filters": ["db1", "db2"], "levels": 2}

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            parse_dictionary_spec("curvelet:db1:1")
