"""CSV reading and writing for traces, curves and summary tables.

Files carry ``# key=value`` metadata lines, then a header row, then one
numeric row per sample. Traces use 17 significant digits (exact round
trip for doubles); summary tables use 9.
"""

from __future__ import annotations

import ast
import io
import os
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import InputError, ParseError
from .trace import CovarianceCurve, LaplaceCurve, SpectralCurve, Trace

TRACE_DIGITS = 17
TABLE_DIGITS = 9


def _format_meta_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _parse_meta_value(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def write_table(dest, columns: Mapping[str, Iterable], meta: Mapping | None = None,
                digits: int = TABLE_DIGITS) -> None:
    """Write equal-length numeric ``columns`` with a header row.

    ``dest`` is a path or a writable text stream.
    """
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float).ravel() for k in names]
    if len({d.size for d in data}) > 1:
        raise InputError("table columns differ in length")
    fmt = f"%.{int(digits)}g"
    own = not hasattr(dest, "write")
    fh: TextIO = open(dest, "w", newline="") if own else dest
    try:
        for k, v in (meta or {}).items():
            if v is None:
                continue
            fh.write(f"# {k}={_format_meta_value(v)}\n")
        fh.write(",".join(names) + "\n")
        if data:
            rows = np.column_stack(data)
            for row in rows:
                fh.write(",".join(fmt % x for x in row) + "\n")
    finally:
        if own:
            fh.close()


def read_table(src) -> tuple[list[str], np.ndarray, dict]:
    """Parse a CSV written by :func:`write_table`.

    Returns ``(header, data, meta)`` with ``data`` of shape (rows, columns).
    Raises :class:`ParseError` naming the offending line.
    """
    if hasattr(src, "read"):
        lines = src.read().splitlines()
    else:
        if not os.path.exists(src):
            raise InputError(f"no such file: {src}")
        with open(src, newline="") as fh:
            lines = fh.read().splitlines()
    meta: dict = {}
    header = None
    rows = []
    for num, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                meta[k.strip()] = _parse_meta_value(v)
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            if any(_is_number(c) for c in cells):
                raise ParseError("missing header row", num)
            header = cells
            continue
        if len(cells) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(cells)}", num)
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(c for c in cells if not _is_number(c))
            raise ParseError(f"non-numeric value {bad!r}", num) from None
    if header is None:
        raise ParseError("missing header row", max(len(lines), 1))
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return header, data, meta


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


# ---------------------------------------------------------------------------
# Traces
# ---------------------------------------------------------------------------

def write_trace_csv(dest, trace: Trace, value_name: str = "value") -> None:
    """``time,value`` rows with dt and metadata as comment lines."""
    meta = {"dt": trace.dt, "start_time": trace.start_time, **trace.meta}
    write_table(dest, {"time": trace.times, value_name: trace.values}, meta, TRACE_DIGITS)


def read_trace_csv(src) -> Trace:
    """Read a trace; dt comes from metadata when present, else from the
    time column, which must then be uniform."""
    header, data, meta = read_table(src)
    if len(header) != 2 or header[0] not in ("time", "t"):
        raise ParseError(f"expected header 'time,value', found {','.join(header)!r}", 1)
    if data.shape[0] == 0:
        raise ParseError("trace has no samples", 2)
    t, v = data[:, 0], data[:, 1]
    dt = meta.pop("dt", None)
    start = meta.pop("start_time", t[0])
    if dt is None:
        if t.size < 2:
            raise ParseError("cannot infer dt from a single sample", 2)
        steps = np.diff(t)
        dt = float(np.mean(steps))
        if not np.allclose(steps, dt, rtol=1e-6, atol=0):
            raise InputError("time column is not uniformly spaced")
    return Trace(float(dt), v, float(start), meta)


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------

def write_curve_csv(dest, curve, digits: int = TRACE_DIGITS) -> None:
    """Write a covariance, spectral or Laplace curve in its native layout."""
    if isinstance(curve, CovarianceCurve):
        meta = {"kind": curve.kind, **curve.meta}
        if curve.stderr is not None:
            cols = {"lag": curve.lags, "mean": curve.values, "stderr": curve.stderr}
        else:
            cols = {"lag": curve.lags, "value": curve.values}
    elif isinstance(curve, SpectralCurve):
        meta = dict(curve.meta)
        cols = {"omega": curve.omegas, "value": curve.values}
    elif isinstance(curve, LaplaceCurve):
        meta = dict(curve.meta)
        cols = {"s": curve.s, "value": curve.values}
    else:
        raise InputError(f"cannot write {type(curve).__name__} as a curve")
    write_table(dest, cols, meta, digits)


def read_curve_csv(src):
    """Inverse of :func:`write_curve_csv`, dispatching on the header."""
    header, data, meta = read_table(src)
    key = tuple(header)
    if key == ("lag", "value"):
        kind = meta.pop("kind", "displacement")
        return CovarianceCurve(data[:, 0], data[:, 1], kind, meta=meta)
    if key == ("lag", "mean", "stderr"):
        kind = meta.pop("kind", "msd")
        return CovarianceCurve(data[:, 0], data[:, 1], kind, stderr=data[:, 2], meta=meta)
    if key == ("omega", "value"):
        return SpectralCurve(data[:, 0], data[:, 1], meta)
    if key == ("s", "value"):
        return LaplaceCurve(data[:, 0], data[:, 1], meta)
    raise ParseError(f"unrecognised curve header {','.join(header)!r}", 1)


def table_to_string(columns: Mapping[str, Iterable], meta: Mapping | None = None,
                    digits: int = TABLE_DIGITS) -> str:
    buf = io.StringIO()
    write_table(buf, columns, meta, digits)
    return buf.getvalue()
