import io as stdio

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from subdiffusion import io
from subdiffusion.errors import InputError, ParseError
from subdiffusion.trace import CovarianceCurve, LaplaceCurve, SpectralCurve, Trace


def test_trace_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    tr = Trace(0.013, rng.standard_normal(1000) * 1e3, 2.5, {"seed": 4, "h": 0.74, "regime": "overdamped"})
    path = tmp_path / "t.csv"
    io.write_trace_csv(path, tr)
    back = io.read_trace_csv(path)
    assert np.array_equal(back.values, tr.values)
    assert back.dt == tr.dt and back.start_time == tr.start_time
    assert back.meta["seed"] == 4 and back.meta["h"] == 0.74 and back.meta["regime"] == "overdamped"


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=50))
def test_trace_roundtrip_is_exact(values):
    buf = stdio.StringIO()
    io.write_trace_csv(buf, Trace(0.1, values))
    buf.seek(0)
    assert np.array_equal(io.read_trace_csv(buf).values, np.asarray(values, dtype=float))


def test_non_numeric_cell_names_line():
    text = "# dt=0.1\ntime,value\n0,1.0\n0.1,abc\n"
    with pytest.raises(ParseError) as info:
        io.read_table(stdio.StringIO(text))
    assert info.value.line == 4 and "line 4" in str(info.value)


def test_missing_header():
    with pytest.raises(ParseError):
        io.read_table(stdio.StringIO("0,1\n1,2\n"))
    with pytest.raises(ParseError):
        io.read_table(stdio.StringIO("# only=metadata\n"))


def test_wrong_field_count():
    with pytest.raises(ParseError) as info:
        io.read_table(stdio.StringIO("a,b\n1,2\n3\n"))
    assert info.value.line == 3


def test_missing_file(tmp_path):
    with pytest.raises(InputError):
        io.read_table(tmp_path / "nope.csv")


def test_table_digits():
    s = io.table_to_string({"a": [1 / 3]}, {"note": "x"})
    assert s.splitlines() == ["# note=x", "a", "0.333333333"]
    with pytest.raises(InputError):
        io.table_to_string({"a": [1, 2], "b": [1]})


def test_curve_roundtrips(tmp_path):
    curves = [
        CovarianceCurve([0, 1, 2], [1.0, 0.5, 0.25], "displacement", meta={"h": 0.7}),
        CovarianceCurve([0, 1], [0.0, 1.0], "msd", stderr=[0.0, 0.1]),
        SpectralCurve([0.5, 1.0], [2.0, 1.0], {"curve": "velocity"}),
        LaplaceCurve([0.1, 1.0], [5.0, 0.5]),
    ]
    for i, c in enumerate(curves):
        p = tmp_path / f"c{i}.csv"
        io.write_curve_csv(p, c)
        back = io.read_curve_csv(p)
        assert type(back) is type(c)
        a = back.values
        assert np.array_equal(a, c.values)
    assert io.read_curve_csv(tmp_path / "c0.csv").meta["h"] == 0.7
    assert io.read_curve_csv(tmp_path / "c0.csv").kind == "displacement"
    with pytest.raises(ParseError):
        io.read_curve_csv(stdio.StringIO("x,y\n1,2\n"))
