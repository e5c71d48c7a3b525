import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jointrecon.segment import threshold
from jointrecon.types import (
    DualField,
    Grid,
    HardSegmentation,
    IterationRecord,
    JointConfig,
    KSpaceData,
    LabelRelaxation,
    RealImage,
    RegionMeans,
    SamplingMask,
    SolveReport,
    validate,
)


def test_valid_relaxation_has_no_violations():
    v = LabelRelaxation.uniform(Grid(4, 5), 3)
    assert validate(v) == []


def test_row_sum_violation_reported():
    vals = np.full((4, 4, 2), 0.5)
    vals[1, 2] = (1.0, 0.5)
    out = validate(LabelRelaxation(vals))
    assert len(out) == 1 and "row-sum violation" in out[0]


def test_negative_entry_reported():
    vals = np.full((3, 3, 2), 0.5)
    vals[0, 0] = (1.1, -0.1)
    assert any("negative" in msg for msg in validate(LabelRelaxation(vals)))


def test_empty_mask_reported():
    out = validate(SamplingMask(np.zeros((4, 4), dtype=bool)))
    assert any("empty mask" in msg for msg in out)


def test_small_grid_reported():
    assert validate(Grid(1, 5))
    assert validate(Grid(2, 2)) == []


def test_kspace_length_mismatch():
    mask = SamplingMask(np.eye(4, dtype=bool))
    assert validate(KSpaceData(mask, np.zeros(4, complex))) == []
    assert any("samples length" in msg for msg in validate(KSpaceData(mask, np.zeros(3, complex))))


def test_region_means_distinct():
    assert validate(RegionMeans([0.0, 1.0])) == []
    assert validate(RegionMeans([1.0, 1.0]))
    assert validate(RegionMeans([1.0]))


def test_hard_segmentation_label_range():
    assert validate(HardSegmentation(np.zeros((3, 3), int), 2)) == []
    assert validate(HardSegmentation(np.full((3, 3), 2), 2))


def test_dual_field_radius():
    vals = np.zeros((3, 3, 2))
    vals[1, 1] = (0.6, 0.8)
    assert validate(DualField(vals, radius=1.0)) == []
    assert validate(DualField(2 * vals, radius=1.0))


def test_config_sign_constraints():
    assert validate(JointConfig()) == []
    bad = JointConfig(alpha=0.0, delta=-1.0, mu=1.0, max_outer=0)
    msgs = " ".join(validate(bad))
    for name in ("alpha", "delta", "mu", "max_outer"):
        assert name in msgs


def test_report_length_bound():
    rep = SolveReport([IterationRecord(k) for k in range(3)], max_outer=2)
    assert validate(rep)
    rep.max_outer = 3
    assert validate(rep) == []


def test_values_are_immutable():
    img = RealImage(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        img.values[0, 0] = 1.0
    src = np.zeros((3, 3))
    img = RealImage(src)
    src[0, 0] = 5.0
    assert img.values[0, 0] == 0.0


def test_shape_checks():
    with pytest.raises(ValueError):
        RealImage(np.zeros(9))
    with pytest.raises(ValueError):
        LabelRelaxation(np.zeros((3, 3)))


def test_mask_row_major_indices():
    sel = np.zeros((3, 4), dtype=bool)
    sel[1, 2] = sel[2, 0] = True
    m = SamplingMask(sel)
    assert m.m == 2
    assert list(m.indices) == [1 * 4 + 2, 2 * 4 + 0]


def test_mirrored_mask():
    sel = np.zeros((4, 4), dtype=bool)
    sel[1, 3] = True
    mir = SamplingMask(sel).mirrored()
    assert mir[3, 1] and mir.sum() == 1


@settings(max_examples=50, deadline=None)
@given(
    arrays(np.float64, (4, 5, 3), elements=st.floats(0.0, 1.0)),
    arrays(np.float64, (4, 5), elements=st.floats(0.1, 10.0)),
)
def test_argmax_invariant_under_row_rescaling(v, scale):
    a = threshold(v).labels
    b = threshold(v * scale[..., None]).labels
    assert np.array_equal(a, b)
