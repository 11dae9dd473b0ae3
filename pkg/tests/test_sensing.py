import math

import pytest

from searchplan.sensing import (SensorModel, detection_prob, footprint_distance, footprint_side,
                                search_confidence)


def test_sensor_validation():
    with pytest.raises(ValueError):
        SensorModel(0.0, 1, 2)
    with pytest.raises(ValueError):
        SensorModel(math.pi, 1, 2)
    with pytest.raises(ValueError):
        SensorModel.from_degrees(60, 5, 5)
    assert SensorModel.from_degrees(60, 17, 93).fov_angle == pytest.approx(math.pi / 3)


def test_footprint_examples(sensor):
    assert footprint_side(0, sensor) == 0
    assert footprint_side(10, sensor) == pytest.approx(11.547, abs=5e-4)
    assert footprint_side(17.3205, sensor) == pytest.approx(20.000, abs=5e-4)
    assert footprint_distance(footprint_side(23.0, sensor), sensor) == pytest.approx(23.0)
    with pytest.raises(ValueError):
        footprint_side(-1, sensor)


def test_rounded_reference_footprints(sensor):
    # the stated 20 m and 60 m footprints at 17 m and 53 m are rounded values
    assert footprint_side(17, sensor) == pytest.approx(19.63, abs=5e-3)
    assert footprint_side(53, sensor) == pytest.approx(61.20, abs=5e-3)


def test_detection_examples(sensor):
    assert detection_prob(17, sensor) == 0
    assert detection_prob(55, sensor) == pytest.approx(0.5)
    assert detection_prob(120, sensor) == 0
    assert detection_prob(17 + 1e-9, sensor) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        detection_prob(-0.1, sensor)


def test_confidence_examples(sensor):
    assert search_confidence(10, sensor) == 0
    assert search_confidence(93, sensor) == 0
    assert search_confidence(55, sensor) == pytest.approx(0.5 * (2 * 55 * math.tan(math.pi / 6)) ** 2)
    assert search_confidence(55, sensor) == pytest.approx(2016.7, abs=0.05)
