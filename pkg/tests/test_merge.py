import numpy as np
import pytest

from dler_lab.merge import (IncompatibleSnapshotError, ParamSnapshot,
                            linear_merge, read_snapshot, select_merge,
                            write_snapshot)


def snap(values, state_count=1):
    vec = np.asarray(values, dtype=np.float64)
    return ParamSnapshot(vector=vec, state_count=state_count,
                         vocab_size=vec.size // state_count)


def test_hand_example_exact():
    base = snap([1.0, 2.0, 3.0, 4.0])
    tuned = snap([1.1, 2.0, 3.5, 3.0])
    merged = select_merge(base, tuned, top_fraction=0.25, scale=0.7)
    # largest |delta| is coordinate 3 (|-1.0|); 4 + 0.7 * (3.0 - 4.0)
    assert merged.vector.tolist() == [1.0, 2.0, 3.0, 4.0 + 0.7 * (3.0 - 4.0)]
    assert abs(merged.vector[3] - 3.3) < 1e-12


def test_full_fraction_unit_scale_returns_tuned_exactly():
    rng = np.random.default_rng(0)
    base = snap(rng.standard_normal(32), state_count=4)
    tuned = snap(rng.standard_normal(32), state_count=4)
    merged = select_merge(base, tuned, top_fraction=1.0, scale=1.0)
    assert np.array_equal(merged.vector, tuned.vector)


def test_identical_inputs_identical_output():
    base = snap([0.5, -1.5, 2.5])
    merged = select_merge(base, snap([0.5, -1.5, 2.5]), 0.5, 0.7)
    assert np.array_equal(merged.vector, base.vector)


def test_ceil_count_of_changed_coordinates():
    base = snap(np.zeros(10))
    tuned = snap(np.arange(1.0, 11.0))
    for fraction, expect in [(0.25, 3), (0.5, 5), (0.01, 1), (1.0, 10)]:
        merged = select_merge(base, tuned, fraction, scale=1.0)
        assert int((merged.vector != base.vector).sum()) == expect
        changed = np.nonzero(merged.vector != base.vector)[0]
        # top deltas are the largest values here
        assert set(changed) == set(range(10 - expect, 10))


def test_stable_tie_break_prefers_lower_index():
    base = snap(np.zeros(4))
    tuned = snap([1.0, -1.0, 1.0, 1.0])
    merged = select_merge(base, tuned, top_fraction=0.5, scale=1.0)
    assert merged.vector.tolist() == [1.0, -1.0, 0.0, 0.0]


def test_kept_set_depends_only_on_abs_delta():
    rng = np.random.default_rng(3)
    base = snap(rng.standard_normal(64))
    delta = rng.standard_normal(64)
    tuned_a = snap(base.vector + delta)
    shift = snap(base.vector - 5.0)
    tuned_b = snap(shift.vector + delta)
    merged_a = select_merge(base, tuned_a, 0.25, 1.0)
    merged_b = select_merge(shift, tuned_b, 0.25, 1.0)
    assert np.array_equal(merged_a.vector != base.vector,
                          merged_b.vector != shift.vector)


def test_select_merge_validation():
    base, tuned = snap([1.0, 2.0]), snap([2.0, 1.0])
    with pytest.raises(ValueError):
        select_merge(base, tuned, top_fraction=0.0, scale=0.7)
    with pytest.raises(ValueError):
        select_merge(base, tuned, top_fraction=1.5, scale=0.7)


def test_linear_merge_endpoints_and_midpoint():
    base = snap([0.0, 2.0])
    tuned = snap([2.0, 0.0])
    assert np.array_equal(linear_merge(base, tuned, 0.0).vector, base.vector)
    assert np.array_equal(linear_merge(base, tuned, 1.0).vector, tuned.vector)
    assert linear_merge(base, tuned, 0.5).vector.tolist() == [1.0, 1.0]
    with pytest.raises(ValueError):
        linear_merge(base, tuned, 1.5)


def test_incompatible_snapshots():
    with pytest.raises(IncompatibleSnapshotError):
        select_merge(snap([1.0, 2.0]), snap([1.0, 2.0, 3.0]), 0.5, 1.0)
    a = snap([1.0, 2.0])
    b = ParamSnapshot(vector=np.array([1.0, 2.0]), state_count=2, vocab_size=1)
    with pytest.raises(IncompatibleSnapshotError):
        linear_merge(a, b, 0.5)


def test_snapshot_validation():
    with pytest.raises(ValueError):
        snap([1.0, np.nan])
    with pytest.raises(ValueError):
        ParamSnapshot(vector=np.zeros(5), state_count=2, vocab_size=2)


def test_snapshot_file_roundtrip(tmp_path, base_params):
    src = ParamSnapshot.from_params(base_params)
    path = tmp_path / "s.dlrp"
    write_snapshot(path, src)
    back = read_snapshot(path)
    assert np.array_equal(back.vector, src.vector)
    assert back.state_count == src.state_count
    assert back.vocab_size == src.vocab_size
    restored = back.to_params(base_params.vocab, diff_min=base_params.diff_min)
    assert np.array_equal(restored.logits, base_params.logits)
