"""Perturbation curves, their areas, calibration, randomized attribution
maps, and the map file formats."""

import struct

import numpy as np
import pytest

from xprobe import (
    Additive,
    AttributionFormatError,
    AttributionMap,
    ConfidenceCache,
    Conjunctive,
    DegenerateCalibrationError,
    Direction,
    GREY,
    ImageTensor,
    ModelCalibration,
    OracleError,
    PatchRuleOracle,
    PerturbationCurve,
    SyntheticOracle,
    auc,
    calibrate_model,
    compose_fractional,
    generate_randomized_map,
    load_attribution,
    make_baseline,
    make_grid,
    normalize_score,
    perturbation_curve,
    save_attribution,
    save_attribution_png,
)

from conftest import flat_image


class TestAttributionMap:
    def test_validation(self):
        with pytest.raises(AttributionFormatError):
            AttributionMap(np.zeros((0, 3)))
        with pytest.raises(AttributionFormatError):
            AttributionMap(np.full((2, 2), 1.5))
        with pytest.raises(AttributionFormatError):
            AttributionMap(np.full((2, 2), np.nan))
        with pytest.raises(AttributionFormatError):
            AttributionMap(np.zeros(4))

    def test_digest_tracks_content(self):
        a = AttributionMap(np.full((2, 2), 0.5))
        b = AttributionMap(np.full((2, 2), 0.5))
        c = AttributionMap(np.full((2, 2), 0.25))
        assert a.digest == b.digest
        assert a.digest != c.digest


class TestAuc:
    def test_constant_curve_is_exact(self):
        for c in (0.0, 0.3, 1.0):
            curve = PerturbationCurve(Direction.INSERTION, tuple([c] * 11))
            assert auc(curve) == c

    def test_linear_ramp_is_half(self):
        confs = tuple(t / 9 for t in range(10))
        curve = PerturbationCurve(Direction.INSERTION, confs)
        assert auc(curve) == pytest.approx(0.5, abs=1e-12)

    def test_single_step_average(self):
        curve = PerturbationCurve(Direction.DELETION, (1.0, 0.0))
        assert auc(curve) == 0.5

    def test_degenerate_curve_rejected(self):
        with pytest.raises(OracleError):
            auc(PerturbationCurve(Direction.INSERTION, (0.5,)))


class TestPerturbationCurve:
    def test_endpoints_hit_baseline_and_image(self, grid3, image9):
        oracle = SyntheticOracle(Additive(weights=(1.0 / 9.0,) * 9), grid3)
        amap = AttributionMap(np.linspace(0, 1, 81).reshape(9, 9))
        ins = perturbation_curve(oracle, image9, GREY, amap, 10, 0, Direction.INSERTION)
        dele = perturbation_curve(oracle, image9, GREY, amap, 10, 0, Direction.DELETION)
        # insertion starts fully baselined, deletion starts at the image
        assert ins.confidences[0] == 0.0
        assert ins.confidences[-1] == pytest.approx(1.0, abs=1e-9)
        assert dele.confidences[0] == pytest.approx(1.0, abs=1e-9)
        assert dele.confidences[-1] == 0.0

    def test_deletion_is_insertion_with_roles_swapped_entrywise(self, grid3, image9):
        """The deletion curve must equal, entry for entry, the confidences of
        insertion compositions computed with image and baseline exchanged."""
        oracle = SyntheticOracle(Additive(weights=(1.0 / 9.0,) * 9), grid3)
        rng = np.random.default_rng(3)
        amap = AttributionMap(rng.permutation(81).reshape(9, 9) / 80.0)
        steps = 6
        base = make_baseline(image9, GREY)
        dele = perturbation_curve(oracle, image9, GREY, amap, steps, 0, Direction.DELETION)
        for t in range(steps + 1):
            swapped = compose_fractional(
                ImageTensor(base.pixels, _validate=False),
                ImageTensor(image9.pixels, _validate=False),
                amap.values,
                t / steps,
                Direction.INSERTION,
            )
            conf = float(oracle.score_batch(swapped.pixels[None], 0)[0])
            assert conf == dele.confidences[t]

    def test_monotone_for_additive_oracle(self, grid3, image9):
        oracle = SyntheticOracle(Additive(weights=(1.0 / 9.0,) * 9), grid3)
        amap = AttributionMap(np.linspace(0, 1, 81).reshape(9, 9))
        ins = perturbation_curve(oracle, image9, GREY, amap, 27, 0, Direction.INSERTION)
        diffs = np.diff(ins.confidences)
        assert np.all(diffs >= -1e-12)

    def test_cache_suppresses_rescoring(self, grid3, image9):
        oracle = SyntheticOracle(Additive(weights=(1.0 / 9.0,) * 9), grid3)
        cache = ConfidenceCache()
        amap = AttributionMap(np.linspace(0, 1, 81).reshape(9, 9))
        perturbation_curve(oracle, image9, GREY, amap, 10, 0, Direction.INSERTION, cache)
        evals = oracle.evaluations
        again = perturbation_curve(oracle, image9, GREY, amap, 10, 0, Direction.INSERTION, cache)
        assert oracle.evaluations == evals
        assert len(again.confidences) == 11

    def test_step_count_validated(self, grid3, image9):
        oracle = SyntheticOracle(Conjunctive(required=(0,)), grid3)
        amap = AttributionMap(np.zeros((3, 3)))
        with pytest.raises(OracleError):
            perturbation_curve(oracle, image9, GREY, amap, 0, 0, Direction.INSERTION)


class TestCalibration:
    def test_synthetic_endpoints(self, grid3, image9):
        oracle = SyntheticOracle(Conjunctive(required=(0, 4, 8), hi=1.0, lo=0.05), grid3)
        cal = calibrate_model(oracle, [image9])
        assert cal.top1_avg == 1.0
        assert cal.baseline_avg == 0.05
        assert normalize_score(1.0, cal) == pytest.approx(1.0)
        assert normalize_score(0.05, cal) == pytest.approx(0.0)

    def test_scores_may_leave_unit_interval(self):
        cal = ModelCalibration("m", top1_avg=0.8, baseline_avg=0.2)
        assert normalize_score(0.9, cal) > 1.0
        assert normalize_score(0.1, cal) < 0.0

    def test_degenerate_spread_raises(self):
        cal = ModelCalibration("m", top1_avg=0.4, baseline_avg=0.4)
        with pytest.raises(DegenerateCalibrationError):
            normalize_score(0.5, cal)

    def test_needs_images(self, grid3):
        oracle = SyntheticOracle(Conjunctive(required=(0,)), grid3)
        with pytest.raises(OracleError):
            calibrate_model(oracle, [])


class TestRandomizedMap:
    def test_indicator_oracle_peaks_on_its_patch(self, image9):
        grid = make_grid(9, 9, 3, 3)
        oracle = PatchRuleOracle(lambda m: 1.0 if m & 1 else 0.0, grid)
        amap = generate_randomized_map(oracle, image9, 0, n_masks=400, cell_grid=grid, seed=5)
        assert amap.shape == (3, 3)
        assert amap.values[0, 0] == 1.0
        assert float(amap.values.max()) == 1.0
        assert np.all(amap.values.ravel()[1:] < 0.6)

    def test_indifferent_oracle_gives_flat_half_map(self, grid3, image9):
        # zero confidence everywhere leaves no min-max spread to normalize
        oracle = PatchRuleOracle(lambda m: 0.0, grid3)
        amap = generate_randomized_map(oracle, image9, 0, n_masks=50, cell_grid=grid3, seed=1)
        assert np.all(amap.values == 0.5)

    def test_seed_reproducibility(self, grid3, image9):
        oracle = SyntheticOracle(Additive(weights=(1.0 / 9.0,) * 9), grid3)
        a = generate_randomized_map(oracle, image9, 0, n_masks=100, cell_grid=grid3, seed=42)
        b = generate_randomized_map(oracle, image9, 0, n_masks=100, cell_grid=grid3, seed=42)
        c = generate_randomized_map(oracle, image9, 0, n_masks=100, cell_grid=grid3, seed=43)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_parameter_validation(self, grid3, image9):
        oracle = SyntheticOracle(Conjunctive(required=(0,)), grid3)
        with pytest.raises(OracleError):
            generate_randomized_map(oracle, image9, 0, n_masks=0, cell_grid=grid3)
        with pytest.raises(OracleError):
            generate_randomized_map(oracle, image9, 0, keep_prob=1.0, cell_grid=grid3)


class TestMapFiles:
    def test_binary_roundtrip(self, tmp_path):
        rng = np.random.default_rng(8)
        amap = AttributionMap(rng.uniform(0, 1, size=(5, 7)))
        path = tmp_path / "map.fmap"
        save_attribution(amap, path)
        loaded = load_attribution(path)
        assert loaded.shape == (5, 7)
        assert np.allclose(loaded.values, amap.values, atol=1e-7)

    def test_png_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        amap = AttributionMap(rng.uniform(0, 1, size=(6, 4)))
        path = tmp_path / "map.png"
        save_attribution_png(amap, path)
        loaded = load_attribution(path)
        assert loaded.shape == (6, 4)
        assert np.allclose(loaded.values, amap.values, atol=1.0 / 65535)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.fmap"
        path.write_bytes(b"FMAP" + struct.pack("<II", 2, 2) + b"\x00" * 8)
        with pytest.raises(AttributionFormatError, match="truncated"):
            load_attribution(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        path = tmp_path / "long.fmap"
        payload = np.zeros(4, dtype="<f4").tobytes()
        path.write_bytes(b"FMAP" + struct.pack("<II", 2, 2) + payload + b"x")
        with pytest.raises(AttributionFormatError, match="trailing"):
            load_attribution(path)

    def test_out_of_range_values_rejected(self, tmp_path):
        path = tmp_path / "range.fmap"
        payload = np.full(4, 2.0, dtype="<f4").tobytes()
        path.write_bytes(b"FMAP" + struct.pack("<II", 2, 2) + payload)
        with pytest.raises(AttributionFormatError):
            load_attribution(path)

    def test_zero_dims_rejected(self, tmp_path):
        path = tmp_path / "zero.fmap"
        path.write_bytes(b"FMAP" + struct.pack("<II", 0, 3))
        with pytest.raises(AttributionFormatError, match="zero"):
            load_attribution(path)

    def test_eight_bit_png_rejected(self, tmp_path):
        from PIL import Image

        path = tmp_path / "eight.png"
        Image.fromarray(np.zeros((3, 3), dtype=np.uint8), mode="L").save(path)
        with pytest.raises(AttributionFormatError, match="16-bit"):
            load_attribution(path)

    def test_unknown_format_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(AttributionFormatError, match="not a recognized"):
            load_attribution(path)
