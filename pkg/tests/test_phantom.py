import numpy as np
import pytest

from tritask3d.dataio import PhantomSpec, make_dataset, read_manifest, synth_case
from tritask3d.dataio.phantom import GradeRule
from tritask3d.datamodel import Grade, validate_sample


def test_nesting_by_construction(rng):
    spec = PhantomSpec(extent=(32, 32, 32), wt_radius_range=(6.0, 10.0))
    sample = synth_case(spec, rng)
    wt, tc, et = sample.mask
    assert not np.any(tc > wt)
    assert not np.any(et > tc)


def test_zero_et_gives_lgg(rng):
    spec = PhantomSpec(
        extent=(32, 32, 32), wt_radius_range=(6.0, 9.0), et_fraction_range=(0.0, 0.0)
    )
    sample = synth_case(spec, rng)
    assert sample.mask[2].sum() == 0
    assert sample.grade is Grade.LGG


def test_validator_sweep_100_phantoms():
    spec = PhantomSpec(extent=(24, 24, 24), wt_radius_range=(4.0, 7.0))
    for i in range(100):
        sample = synth_case(spec, np.random.default_rng([11, i]), f"p{i}")
        assert validate_sample(sample) == [], f"phantom {i} invalid"


def test_fraction_ranges_must_nest():
    with pytest.raises(ValueError):
        PhantomSpec(tc_fraction_range=(0.5, 1.1))


def test_grade_rule_threshold():
    rule = GradeRule(threshold=0.5)
    mask = np.zeros((3, 4, 4, 4), dtype=np.uint8)
    mask[0, :2] = 1
    mask[1, :1] = 1
    assert rule(mask) is Grade.LGG
    mask[2, :1] = 1  # ET covers half of WT
    assert rule(mask) is Grade.HGG


def test_make_dataset_alternates_grades(tmp_path):
    spec = PhantomSpec(extent=(24, 24, 24), wt_radius_range=(4.0, 7.0))
    samples = make_dataset(spec, 6, tmp_path / "ds", seed=3, balance=True)
    grades = [s.grade for s in samples]
    assert grades == [Grade.HGG, Grade.LGG] * 3

    manifest = read_manifest(tmp_path / "ds" / "manifest.txt")
    assert len(manifest) == 6
    assert all(manifest[s.case_id] == s.grade for s in samples)


def test_make_dataset_writes_box_corners(tmp_path):
    spec = PhantomSpec(extent=(24, 24, 24), wt_radius_range=(4.0, 7.0))
    samples = make_dataset(spec, 2, tmp_path / "ds", seed=5)
    lines = (tmp_path / "ds" / "manifest.txt").read_text().splitlines()
    for line in lines:
        parts = line.split()
        assert len(parts) == 8  # case_id grade z0 y0 x0 z1 y1 x1
        sample = next(s for s in samples if s.case_id == parts[0])
        assert tuple(int(v) for v in parts[2:5]) == sample.box.min_corner
