import csv

import numpy as np
import pytest

from camimpact.scan import (
    ScanConfig, ScanRecord, estimate_period, rad_to_rpm, rpm_to_rad, run_point, scan,
    write_diagram_csv)


def test_rpm_conversion():
    assert rpm_to_rad(60.0) == pytest.approx(2 * np.pi)
    assert rad_to_rpm(rpm_to_rad(673.2)) == pytest.approx(673.2)
    np.testing.assert_allclose(rad_to_rpm(rpm_to_rad(np.array([1.0, 2.0]))), [1.0, 2.0])


def test_estimate_period():
    base = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]])
    assert estimate_period(np.tile(base[:1], (20, 1))) == 1
    assert estimate_period(np.tile(base[:2], (10, 1))) == 2
    assert estimate_period(np.tile(base, (8, 1))) == 3
    rng = np.random.default_rng(0)
    assert estimate_period(rng.standard_normal((64, 2))) is None
    assert estimate_period(base[:1]) is None


def test_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(700.0, 600.0, 10)
    with pytest.raises(ValueError):
        ScanConfig(600.0, 700.0, 1)
    with pytest.raises(ValueError):
        ScanConfig(600.0, 700.0, 5, direction="sideways")
    np.testing.assert_allclose(ScanConfig(600.0, 700.0, 3).speeds_rpm(), [700.0, 650.0, 600.0])
    np.testing.assert_allclose(ScanConfig(600.0, 700.0, 3, direction="up").speeds_rpm(),
                               [600.0, 650.0, 700.0])


def test_below_detachment_has_no_impacts(scenario):
    d = scan(ScanConfig(90.0, 100.0, 2, transient_periods=60, record_periods=16), scenario)
    assert len(d.records) == 2
    for r in d.records:
        assert r.error is None and r.n_impacts == 0 and r.period == 1


def test_period1_above_corner_and_aperiodic_below(scenario):
    d = scan(ScanConfig(665.0, 685.0, 2), scenario).sorted()
    low, high = d.records
    assert high.is_period1_single_impact
    assert high.impact_phases[-1] > scenario.phase_offset
    assert low.period is None and low.n_impacts > 0


def test_continuation_does_not_change_period1_attractor(scenario):
    cfg = dict(transient_periods=300, record_periods=8)
    a = scan(ScanConfig(690.0, 700.0, 2, continuation=True, **cfg), scenario).sorted()
    b = scan(ScanConfig(690.0, 700.0, 2, continuation=False, workers=1, **cfg), scenario).sorted()
    for ra, rb in zip(a.records, b.records):
        assert ra.is_period1_single_impact and rb.is_period1_single_impact
        np.testing.assert_allclose(ra.strobe_states[-1], rb.strobe_states[-1], rtol=1e-8)


def test_failed_point_is_a_gap_row(scenario):
    from camimpact.follower import FollowerState
    r = run_point(scenario, 300.0, FollowerState(-10.0, 0.0), 1, 1)
    assert r.error is not None and r.n_impacts == 0 and r.period is None
    assert not r.is_period1_single_impact


def test_single_impact_flag():
    strobe = np.ones((4, 2))
    one = ScanRecord(1.0, np.full(4, 2.0), strobe, 1, 4)
    two = ScanRecord(1.0, np.array([2.0, 2.5, 2.0, 2.5]), strobe, 1, 4)
    wrapped = ScanRecord(1.0, np.array([0.0, 2 * np.pi, 0.0]), strobe, 1, 3)
    assert one.is_period1_single_impact and wrapped.is_period1_single_impact
    assert not two.is_period1_single_impact


def test_diagram_csv(tmp_path, scenario):
    d = scan(ScanConfig(90.0, 100.0, 2, transient_periods=10, record_periods=4), scenario)
    paths = write_diagram_csv(d, tmp_path)
    with open(paths["summary"]) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["omega_rpm", "period_or_minus1", "n_impacts", "error"]
    assert [float(r[0]) for r in rows[1:]] == [100.0, 90.0]
    assert paths["impacts"].read_text().splitlines() == ["omega_rpm,phase_rad"]
