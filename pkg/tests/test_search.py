"""Beam search for minimal sufficient explanations, checked against the
exhaustive enumerator."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xprobe import (
    Additive,
    BeamConfig,
    Conjunctive,
    Disjunctive,
    GridError,
    Minimality,
    MseRecord,
    OracleError,
    PatchRuleOracle,
    PatchSet,
    SyntheticOracle,
    brute_force_mses,
    check_minimality,
    find_mses,
    make_grid,
    read_mse_jsonl,
    write_mse_jsonl,
)

from conftest import flat_image

# C(9, 4) = 126 is the widest level of the 9-patch subset lattice; a beam at
# least that wide never truncates, so the search degenerates to exhaustive.
FULL_WIDTH_9 = 126


def masks(records):
    return {r.patches.bits for r in records}


def random_spec(rng, n_patches):
    kind = int(rng.integers(0, 3))
    if kind == 0:
        k = int(rng.integers(1, 5))
        required = tuple(sorted(rng.choice(n_patches, size=k, replace=False).tolist()))
        return Conjunctive(required=required)
    if kind == 1:
        ids = rng.permutation(n_patches).tolist()
        groups = []
        take = int(rng.integers(2, 4))
        for _ in range(take):
            size = int(rng.integers(1, 4))
            if len(ids) < size:
                break
            groups.append(tuple(sorted(ids[:size])))
            ids = ids[size:]
        return Disjunctive(groups=tuple(groups))
    raw = rng.uniform(0, 1, size=n_patches) ** 2
    weights = raw / raw.sum() * float(rng.uniform(0.6, 1.4))
    return Additive(weights=tuple(weights.tolist()))


class TestBruteForce:
    def test_conjunctive_single_mse(self, grid3, image9):
        oracle = SyntheticOracle(Conjunctive(required=(0, 4, 8)), grid3)
        records = brute_force_mses(oracle, image9, grid3)
        assert masks(records) == {0b100010001}
        assert records[0].confidence == 1.0
        assert records[0].full_confidence == 1.0

    def test_disjunctive_one_mse_per_group(self, grid3, image9):
        oracle = SyntheticOracle(Disjunctive(groups=((0, 1), (7, 8))), grid3)
        records = brute_force_mses(oracle, image9, grid3)
        assert masks(records) == {0b000000011, 0b110000000}

    def test_additive_uniform_full_set_is_the_only_mse(self, grid3, image9):
        oracle = SyntheticOracle(Additive(weights=(1.0 / 9.0,) * 9), grid3)
        records = brute_force_mses(oracle, image9, grid3)
        # dropping any patch leaves 8/9 < 0.9, so only the full set explains
        assert masks(records) == {0b111111111}
        assert records[0].patches.size == 9

    def test_constant_oracle_every_singleton(self, grid3, image9):
        oracle = PatchRuleOracle(lambda m: 0.8, grid3)
        records = brute_force_mses(oracle, image9, grid3)
        assert masks(records) == {1 << i for i in range(9)}

    def test_grid_too_large_rejected(self, image9):
        grid = make_grid(224, 224, 7, 7)
        oracle = PatchRuleOracle(lambda m: 0.5, grid)
        img = flat_image(224, 224)
        with pytest.raises(GridError):
            brute_force_mses(oracle, img, grid)


class TestThresholdSemantics:
    def test_exact_threshold_qualifies(self, grid3, image9):
        # full = 1.0, threshold = 0.9; the pair sits exactly on it
        def rule(m):
            if m == 0b111111111:
                return 1.0
            if m == 0b11:
                return 0.9
            return 0.1

        oracle = PatchRuleOracle(rule, grid3)
        records = brute_force_mses(oracle, image9, grid3, confidence_fraction=0.9)
        assert 0b11 in masks(records)
        found = find_mses(oracle, image9, grid3, BeamConfig(beam_width=FULL_WIDTH_9))
        assert 0b11 in masks(found)

    def test_subset_at_threshold_breaks_minimality(self, grid3, image9):
        def rule(m):
            if m == 0b111111111:
                return 1.0
            if m in (0b11, 0b01):
                return 0.9
            return 0.1

        oracle = PatchRuleOracle(rule, grid3)
        records = brute_force_mses(oracle, image9, grid3, confidence_fraction=0.9)
        assert 0b01 in masks(records)
        assert 0b11 not in masks(records)


class TestBeamAgainstBruteForce:
    def test_randomized_instances_match_exactly(self, grid3, image9):
        rng = np.random.default_rng(2024)
        config = BeamConfig(beam_width=FULL_WIDTH_9, minimality=Minimality.EXHAUSTIVE)
        for i in range(12):
            oracle = SyntheticOracle(random_spec(rng, 9), grid3, name=f"inst-{i}")
            expected = masks(brute_force_mses(oracle, image9, grid3))
            found = masks(find_mses(oracle, image9, grid3, config))
            assert found == expected, f"instance {i} ({type(oracle.spec).__name__})"

    def test_beam_output_sorted_by_size_then_mask(self, grid3, image9):
        oracle = SyntheticOracle(Disjunctive(groups=((8,), (0, 1), (2, 3))), grid3)
        records = find_mses(oracle, image9, grid3, BeamConfig(beam_width=FULL_WIDTH_9))
        keys = [(r.patches.size, r.patches.bits) for r in records]
        assert keys == sorted(keys)

    def test_deterministic_across_runs(self, grid3, image9):
        rng = np.random.default_rng(7)
        oracle = SyntheticOracle(random_spec(rng, 9), grid3)
        a = find_mses(oracle, image9, grid3, BeamConfig(beam_width=9))
        b = find_mses(oracle, image9, grid3, BeamConfig(beam_width=9))
        assert [(r.patches.bits, r.confidence) for r in a] == [
            (r.patches.bits, r.confidence) for r in b
        ]


class TestBeamSemantics:
    def test_immediate_vs_exhaustive_on_nonmonotone_landscape(self, image9):
        # {0} explains on its own, every pair scores low, and {0,1,2} scores
        # high again: immediate checking cannot see the deep counterexample
        grid = make_grid(8, 8, 2, 2)
        img = flat_image(8, 8)

        def rule(m):
            if m == 0b0001:
                return 1.0
            if m == 0b0111:
                return 1.0
            if m == 0b1111:
                return 1.0
            return 0.2

        oracle = PatchRuleOracle(rule, grid)
        immediate = find_mses(oracle, img, grid, BeamConfig(beam_width=16))
        exhaustive = find_mses(
            oracle, img, grid, BeamConfig(beam_width=16, minimality=Minimality.EXHAUSTIVE)
        )
        assert masks(immediate) == {0b0001, 0b0111}
        assert masks(exhaustive) == {0b0001}
        assert masks(exhaustive) == masks(brute_force_mses(oracle, img, grid))

    def test_max_mses_stops_early(self, grid3, image9):
        oracle = PatchRuleOracle(lambda m: 0.95, grid3)
        records = find_mses(oracle, image9, grid3, BeamConfig(max_mses=3))
        assert len(records) == 3

    def test_max_patch_count_bounds_level(self, grid3, image9):
        oracle = SyntheticOracle(Conjunctive(required=(0, 4, 8)), grid3)
        shallow = find_mses(oracle, image9, grid3, BeamConfig(beam_width=FULL_WIDTH_9, max_patch_count=2))
        assert shallow == []
        deep = find_mses(oracle, image9, grid3, BeamConfig(beam_width=FULL_WIDTH_9, max_patch_count=3))
        assert masks(deep) == {0b100010001}

    def test_narrow_beam_is_sound_if_incomplete(self, grid3, image9):
        # a width-1 beam may miss explanations but must never invent one
        rng = np.random.default_rng(11)
        for _ in range(8):
            oracle = SyntheticOracle(random_spec(rng, 9), grid3)
            expected = masks(brute_force_mses(oracle, image9, grid3))
            found = masks(
                find_mses(oracle, image9, grid3, BeamConfig(beam_width=1, minimality=Minimality.EXHAUSTIVE))
            )
            assert found <= expected


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10**9))
def test_default_beam_finds_small_additive_mses(seed):
    """For monotone additive oracles whose weights sum into the unclamped
    region, the dominant singleton of any size-2 or smaller explanation ranks
    first, so the default width-5 beam must recover every such explanation;
    it must also never return a non-explanation."""
    grid = make_grid(9, 9, 3, 3)
    img = flat_image(9, 9)
    rng = np.random.default_rng(seed)
    raw = rng.uniform(0, 1, size=9) ** 4
    weights = raw / raw.sum() * float(rng.uniform(0.5, 1.0))
    oracle = SyntheticOracle(Additive(weights=tuple(weights.tolist())), grid)
    expected = masks(brute_force_mses(oracle, img, grid))
    found = masks(find_mses(oracle, img, grid, BeamConfig(beam_width=5)))
    assert found <= expected
    small = {m for m in expected if m.bit_count() <= 2}
    assert small <= found


class TestCheckMinimality:
    def test_singletons_trivially_minimal(self, grid3, image9):
        oracle = SyntheticOracle(Conjunctive(required=(0,)), grid3)
        assert check_minimality(
            oracle, image9, PatchSet.from_indices(grid3, [0]), 0.9, Minimality.EXHAUSTIVE
        )

    def test_exhaustive_size_cap(self):
        grid = make_grid(25, 25, 5, 5)
        img = flat_image(25, 25)
        oracle = PatchRuleOracle(lambda m: 0.5, grid)
        big = PatchSet((1 << 21) - 1, grid)
        with pytest.raises(GridError):
            check_minimality(
                oracle, img, big, 0.9, Minimality.EXHAUSTIVE, class_id=0, full_confidence=0.5
            )


class TestRecordIO:
    def test_jsonl_roundtrip(self, grid3, image9, tmp_path):
        oracle = SyntheticOracle(Disjunctive(groups=((0, 1), (7, 8))), grid3)
        records = find_mses(oracle, image9, grid3, BeamConfig(beam_width=FULL_WIDTH_9))
        path = tmp_path / "records.jsonl"
        write_mse_jsonl(records, path)
        loaded = read_mse_jsonl(path, grid3)
        assert loaded == records

    def test_corrupt_line_reports_position(self, grid3, tmp_path):
        path = tmp_path / "bad.jsonl"
        rec = MseRecord("img", 0, PatchSet(1, grid3), 1.0, 1.0, Minimality.IMMEDIATE)
        path.write_text(rec.to_json() + "\n{broken\n")
        with pytest.raises(OracleError, match="line 2"):
            read_mse_jsonl(path, grid3)

    def test_config_validation(self):
        with pytest.raises(OracleError):
            BeamConfig(confidence_fraction=0.0)
        with pytest.raises(OracleError):
            BeamConfig(beam_width=0)
        with pytest.raises(OracleError):
            BeamConfig(max_mses=0)
