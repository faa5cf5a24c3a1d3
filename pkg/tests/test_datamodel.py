import numpy as np
import pytest

from tritask3d.datamodel import (
    BoundingBox3D,
    Detection,
    Grade,
    GradePrediction,
    VolumeSample,
    validate_sample,
)


def _sample(mask, box, grade=Grade.HGG):
    image = np.zeros((4,) + mask.shape[1:], dtype=np.float32)
    return VolumeSample("case", image, mask, grade, box)


def test_et_outside_tc_reports_nesting():
    mask = np.zeros((3, 8, 8, 8), dtype=np.uint8)
    mask[0, 2:6, 2:6, 2:6] = 1
    mask[1, 3:5, 3:5, 3:5] = 1
    mask[2, 0, 0, 0] = 1  # ET voxel outside TC (and outside WT)
    box = BoundingBox3D((0, 0, 0), (6, 6, 6))
    violations = validate_sample(_sample(mask, box))
    assert "nesting: ET ⊄ TC" in violations


def test_empty_wt_with_box_flagged():
    mask = np.zeros((3, 8, 8, 8), dtype=np.uint8)
    box = BoundingBox3D((1, 1, 1), (3, 3, 3))
    assert validate_sample(_sample(mask, box)) == ["box inconsistent with empty WT"]


def test_phantom_is_valid(phantom32):
    assert validate_sample(phantom32) == []


def test_region_volume_ordering(phantom32):
    wt, tc, et = (phantom32.mask[c].sum() for c in range(3))
    assert et <= tc <= wt


def test_box_volume_positive(phantom32):
    assert phantom32.box.volume > 0
    assert phantom32.box.is_well_ordered()


def test_nonbinary_mask_reported():
    mask = np.zeros((3, 4, 4, 4), dtype=np.uint8)
    mask[0, 0, 0, 0] = 2
    assert "mask not binary" in validate_sample(_sample(mask, None))


def test_box_must_match_tight_bound():
    mask = np.zeros((3, 8, 8, 8), dtype=np.uint8)
    mask[:, 2:5, 2:5, 2:5] = 1
    loose = BoundingBox3D((1, 1, 1), (6, 6, 6))
    assert any("tight WT bound" in v for v in validate_sample(_sample(mask, loose)))
    tight = BoundingBox3D((2, 2, 2), (5, 5, 5))
    assert validate_sample(_sample(mask, tight)) == []


def test_grade_prediction_probability_bounds():
    GradePrediction((0.0, 1.0), 0.7)
    with pytest.raises(ValueError):
        GradePrediction((0.0, 1.0), 1.2)
    assert GradePrediction((0.0, 1.0), 0.7).grade is Grade.HGG
    assert GradePrediction((1.0, 0.0), 0.2).grade is Grade.LGG


def test_detection_score_bounds():
    box = BoundingBox3D((0, 0, 0), (1, 1, 1))
    Detection(box, 0.5)
    with pytest.raises(ValueError):
        Detection(box, -0.1)
