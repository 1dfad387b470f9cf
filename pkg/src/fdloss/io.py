"""File formats: PFM float maps, binary PGM/PPM images and CSV reports.

All writes go to a temporary file in the target directory and are renamed
into place, so readers never observe partial files.
"""

from __future__ import annotations

import csv
import io as _io
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .core import (
    FDLossError,
    MalformedHeader,
    TruncatedData,
    UnsupportedChannelCount,
    UnsupportedMaxval,
)
from .losses import TERM_NAMES, LossBreakdown
from .metrics import BinnedReport, DepthMetricsReport
from .optimize import OptimizeTrace, RunEvaluation


class IoFailure(FDLossError, OSError):
    pass


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(data)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


# -- PFM --------------------------------------------------------------------


def _next_line(buf: bytes, pos: int) -> tuple[str, int]:
    end = buf.find(b"\n", pos)
    if end < 0:
        raise MalformedHeader("unterminated PFM header line")
    try:
        return buf[pos:end].decode("ascii").strip(), end + 1
    except UnicodeDecodeError:
        raise MalformedHeader("PFM header is not ASCII") from None


def decode_pfm(buf: bytes) -> np.ndarray:
    """Parse PFM bytes into a float32 ``(H, W)`` or ``(H, W, 3)`` array, top row first."""
    tag, pos = _next_line(buf, 0)
    if tag == "Pf":
        channels = 1
    elif tag == "PF":
        channels = 3
    elif tag.startswith("P"):
        raise UnsupportedChannelCount(f"unsupported PFM tag {tag!r}")
    else:
        raise MalformedHeader(f"not a PFM file (tag {tag!r})")
    dims, pos = _next_line(buf, pos)
    m = re.fullmatch(r"(\d+)\s+(\d+)", dims)
    if not m:
        raise MalformedHeader(f"bad PFM dimensions line {dims!r}")
    width, height = int(m.group(1)), int(m.group(2))
    scale_line, pos = _next_line(buf, pos)
    try:
        scale = float(scale_line)
    except ValueError:
        raise MalformedHeader(f"bad PFM scale line {scale_line!r}") from None
    if scale == 0:
        raise MalformedHeader("PFM scale must be non-zero")
    count = width * height * channels
    payload = buf[pos : pos + 4 * count]
    if len(payload) < 4 * count:
        raise TruncatedData(f"PFM payload has {len(payload)} bytes, expected {4 * count}")
    dtype = np.dtype("<f4") if scale < 0 else np.dtype(">f4")
    data = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    shape = (height, width) if channels == 1 else (height, width, 3)
    # rows are stored bottom to top
    return np.flipud(data.reshape(shape)).copy()


def encode_pfm(field) -> bytes:
    arr = np.asarray(field)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        tag = "Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = "PF"
    else:
        raise UnsupportedChannelCount(f"PFM stores 1 or 3 channels, got shape {arr.shape}")
    height, width = arr.shape[:2]
    header = f"{tag}\n{width} {height}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(np.flipud(arr), dtype="<f4").tobytes()


def read_pfm(path) -> np.ndarray:
    return decode_pfm(_read_bytes(path))


def write_pfm(field, path) -> None:
    atomic_write(path, encode_pfm(field))


# -- PGM / PPM --------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def decode_pnm(buf: bytes) -> np.ndarray:
    """Binary P5/P6 with maxval 255 to a float64 ``(H, W, C)`` image in ``[0, 1]``."""
    tokens = []
    pos = 0
    for _ in range(4):
        m = _PNM_TOKEN.match(buf, pos)
        if not m:
            raise MalformedHeader("truncated PGM/PPM header")
        tokens.append(m.group(1))
        pos = m.end()
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise MalformedHeader(f"unsupported magic {magic!r}; only binary P5/P6")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MalformedHeader("non-integer PGM/PPM header field") from None
    if maxval != 255:
        raise UnsupportedMaxval(f"only maxval 255 is supported, got {maxval}")
    if pos >= len(buf) or not buf[pos : pos + 1].isspace():
        raise MalformedHeader("missing whitespace after maxval")
    pos += 1
    channels = 1 if magic == b"P5" else 3
    count = width * height * channels
    payload = buf[pos : pos + count]
    if len(payload) < count:
        raise TruncatedData(f"image payload has {len(payload)} bytes, expected {count}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return data.astype(np.float64) / 255.0


def encode_pnm(img) -> bytes:
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise UnsupportedChannelCount(f"PGM/PPM stores 1 or 3 channels, got shape {arr.shape}")
    height, width, channels = arr.shape
    # round half up
    q = np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    magic = "P5" if channels == 1 else "P6"
    return f"{magic}\n{width} {height}\n255\n".encode("ascii") + q.tobytes()


def read_pgm_ppm(path) -> np.ndarray:
    return decode_pnm(_read_bytes(path))


def write_pgm_ppm(img, path) -> None:
    atomic_write(path, encode_pnm(img))


def read_image(path) -> np.ndarray:
    """PGM/PPM or PFM image, chosen by file extension."""
    if str(path).lower().endswith(".pfm"):
        arr = read_pfm(path).astype(np.float64)
        return arr[:, :, None] if arr.ndim == 2 else arr
    return read_pgm_ppm(path)


# -- CSV --------------------------------------------------------------------


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def csv_bytes(header, rows) -> bytes:
    out = _io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return out.getvalue().encode("utf-8")


METRIC_COLUMNS = DepthMetricsReport.columns()
LOSS_COLUMNS = ("scale",) + TERM_NAMES + ("total",)
TRACE_COLUMNS = ("step", "total") + TERM_NAMES
BIN_COLUMNS = (
    ("bin_lower", "bin_upper", "count")
    + tuple(f"pooled_{c}" for c in METRIC_COLUMNS)
    + ("mean_abs_rel", "mean_rmse", "abs_rel_p25", "abs_rel_p50", "abs_rel_p75")
)
EVAL_COLUMNS = ("region",) + METRIC_COLUMNS


def report_table(report) -> tuple[tuple[str, ...], list[tuple]]:
    """Header and rows for any report type; column order is fixed per type.

    * DepthMetricsReport: the seven metrics then ``pixel_count``; one row.
    * LossBreakdown: ``scale``, the eight terms, the weighted ``total``; one row
      per scale then a ``sum`` row with term sums and the overall total.
    * OptimizeTrace: ``step``, ``total``, the eight terms summed over scales.
    * BinnedReport: bin edges, count, pooled metrics, per-sample summaries.
    * RunEvaluation: ``region`` (all/active/inactive) then the metrics.
    """
    if isinstance(report, DepthMetricsReport):
        return METRIC_COLUMNS, [report.as_tuple()]
    if isinstance(report, LossBreakdown):
        rows = [(s + 1,) + t.as_tuple() + (tot,) for s, (t, tot) in enumerate(zip(report.scales, report.scale_totals))]
        sums = tuple(float(v) for v in np.sum([t.as_tuple() for t in report.scales], axis=0))
        rows.append(("sum",) + sums + (report.total,))
        return LOSS_COLUMNS, rows
    if isinstance(report, OptimizeTrace):
        return TRACE_COLUMNS, [(k, report.totals[k]) + tuple(report.terms[k]) for k in range(len(report))]
    if isinstance(report, BinnedReport):
        rows = []
        for b in report.bins:
            pooled = b.pooled.as_tuple() if b.pooled else (None,) * len(METRIC_COLUMNS)
            rows.append(
                (b.lower, b.upper, b.count)
                + pooled
                + (b.mean_abs_rel, b.mean_rmse, b.abs_rel_p25, b.abs_rel_p50, b.abs_rel_p75)
            )
        return BIN_COLUMNS, rows
    if isinstance(report, RunEvaluation):
        rows = []
        for name, m in report.regions().items():
            rows.append((name,) + (m.as_tuple() if m else (None,) * len(METRIC_COLUMNS)))
        return EVAL_COLUMNS, rows
    raise TypeError(f"no CSV layout for {type(report).__name__}")


def write_csv(report, path) -> None:
    header, rows = report_table(report)
    atomic_write(path, csv_bytes(header, rows))


def write_rows(header, rows, path) -> None:
    atomic_write(path, csv_bytes(header, rows))


def read_csv(path) -> list[dict[str, str]]:
    text = _read_bytes(path).decode("utf-8")
    return list(csv.DictReader(_io.StringIO(text)))
