import math

import numpy as np
import pytest

from perclab import emit_plotdata, NotFoundResultError, ParameterError
from perclab.plotdata import DECAY_HEADER, counterclockwise
from perclab.utils import read_csv, write_csv


def signed_area(xs, ys):
    return sum(x0 * y1 - x1 * y0 for x0, y0, x1, y1 in zip(xs, ys, xs[1:], ys[1:])) / 2


def test_decay(datadir):
    path = emit_plotdata(datadir, "decay")

    assert path == datadir / "plot_decay.csv"
    rows = read_csv(path)
    assert [(row["series"], row["t"]) for row in rows] == [
        ("p=0.7", "4"), ("p=0.7", "8"), ("p=0.9", "8")
    ]
    assert float(rows[0]["log_frequency"]) == pytest.approx(math.log(0.5))
    assert rows[2]["log_frequency"] == ""


def test_header_only(tmp_path):
    write_csv(tmp_path / "decay.csv", ["d", "p", "t", "frequency", "stderr"], [])

    path = emit_plotdata(tmp_path, "decay")

    assert path.read_text() == ",".join(DECAY_HEADER) + "\n"


def test_slopes(datadir):
    rows = read_csv(emit_plotdata(datadir, "slopes"))

    assert [row["quantity"] for row in rows] == ["beta", "theta"]
    assert rows[0]["n"] == "4"
    assert float(rows[0]["p_mid"]) == pytest.approx(0.7)
    assert float(rows[0]["slope"]) == 1.5
    assert rows[1]["n"] == ""
    assert float(rows[1]["ci_hi"]) == 0.375


def test_crystal_polygon(datadir):
    rows = [row for row in read_csv(emit_plotdata(datadir, "crystal")) if row["series"] == "p=0.7"]

    xs = [float(row["x"]) for row in rows]
    ys = [float(row["y"]) for row in rows]
    assert len(rows) == 5
    assert (xs[0], ys[0]) == (xs[-1], ys[-1])
    assert signed_area(xs, ys) == pytest.approx(4.0)
    assert all(row["z"] == "" for row in rows)


@pytest.mark.parametrize("facet, sign", (("0", 1.0), ("1", -1.0)))
def test_crystal_facets_face_outwards(datadir, facet, sign):
    rows = read_csv(emit_plotdata(datadir, "crystal"))
    loop = [row for row in rows if row["series"] == "l1" and row["facet"] == facet]

    xs = [float(row["x"]) for row in loop]
    ys = [float(row["y"]) for row in loop]
    assert len(loop) == 5
    assert {row["z"] for row in loop} == {repr(sign)}
    assert signed_area(xs, ys) == pytest.approx(4.0 * sign)


def test_counterclockwise():
    points = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0]])

    assert counterclockwise(points).tolist() == [2, 1, 0, 3]


def test_missing_result_dir(tmp_path):
    with pytest.raises(NotFoundResultError) as e_info:
        emit_plotdata(tmp_path / "nothing", "decay")

    assert str(e_info.value) == f"Result directory {tmp_path / 'nothing'} not found"


@pytest.mark.parametrize(
    "kind, message",
    (("decay", "Missing result file {}/decay.csv"), ("slopes", "No slope files in {}")),
)
def test_missing_result_files(tmp_path, kind, message):
    with pytest.raises(NotFoundResultError) as e_info:
        emit_plotdata(tmp_path, kind)

    assert str(e_info.value) == message.format(tmp_path)


def test_unknown_kind(tmp_path):
    with pytest.raises(ParameterError) as e_info:
        emit_plotdata(tmp_path, "histogram")

    assert str(e_info.value) == (
        "Unknown plot kind 'histogram', expected one of ['crystal', 'decay', 'slopes']"
    )
