import xml.etree.ElementTree as ET

import pytest

from dvpdsim.svg import line_chart, stacked_area

NS = "{http://www.w3.org/2000/svg}"


def test_stacked_area_is_valid_and_deterministic():
    x = [5, 10, 15]
    layers = {"cond": [1.0, 2.0, 3.0], "sw": [4.0, 4.0, 4.0]}
    a = stacked_area(x, layers, title="Loss & stuff", x_label="load (%)", y_label="W")
    assert a == stacked_area(x, layers, title="Loss & stuff", x_label="load (%)", y_label="W")
    root = ET.fromstring(a)
    polys = root.findall(f"{NS}polygon")
    assert len(polys) == 2
    # Each band closes back along the previous top: 2 * len(x) vertices.
    assert all(len(p.get("points").split()) == 6 for p in polys)
    assert "Loss &amp; stuff" in a


def test_stacked_area_top_band_reaches_total():
    a = stacked_area([0, 1], {"a": [1.0, 1.0], "b": [1.0, 1.0]})
    top = ET.fromstring(a).findall(f"{NS}polygon")[1].get("points").split()
    bottom = ET.fromstring(a).findall(f"{NS}polygon")[0].get("points").split()
    # Upper edge of band b is higher on the page (smaller y) than band a's.
    assert float(top[0].split(",")[1]) < float(bottom[0].split(",")[1])


def test_stacked_area_validates_lengths():
    with pytest.raises(ValueError):
        stacked_area([1, 2], {"a": [1.0]})
    with pytest.raises(ValueError):
        stacked_area([], {})


def test_line_chart_has_one_polyline_per_series():
    svg = line_chart({"pwm": ([5, 10], [70.0, 80.0]), "lapsa": ([5, 10], [86.0, 86.0])}, y_range=(60, 90))
    root = ET.fromstring(svg)
    assert len(root.findall(f"{NS}polyline")) == 2
    with pytest.raises(ValueError):
        line_chart({})
