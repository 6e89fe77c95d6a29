"""Cloud file formats and report serialization.

Three cloud formats: plain-text XYZ (one point per line, '#' comments),
a minimal ASCII PLY subset (x, y, z float properties; anything else is
skipped), and a raw binary format with an 8-byte magic, a u64 count and
3N little-endian f32 coordinates. Extensions .xyz / .ply / .pcq select
the format when none is given.

Report JSON is byte-stable: keys sorted, floats rounded to 9 significant
digits, so identical inputs always serialize to identical bytes.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .cloud import PointCloud, as_cloud
from .errors import CloudParseError, EmptyCloudError, InvalidParamsError
from .metrics import AggregateReport, QualityReport

__all__ = [
    "read_cloud",
    "write_cloud",
    "write_report",
    "report_json",
    "report_csv",
    "round_floats",
    "FORMATS",
    "RAW_MAGIC",
]

FORMATS = ("xyz", "ply", "raw")

_EXT_TO_FORMAT = {".xyz": "xyz", ".ply": "ply", ".pcq": "raw"}

RAW_MAGIC = b"PCQAL\x00\x00\x01"


def _infer_format(path: str) -> str:
    for ext, fmt in _EXT_TO_FORMAT.items():
        if str(path).lower().endswith(ext):
            return fmt
    raise InvalidParamsError(
        f"cannot infer cloud format from {path!r}; expected extension "
        f"{tuple(_EXT_TO_FORMAT)} or an explicit format")


def _check_format(fmt: str) -> str:
    if fmt not in FORMATS:
        raise InvalidParamsError(f"format must be one of {FORMATS}, got {fmt!r}")
    return fmt


def _stem(path: str) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


def read_cloud(path, format: str | None = None) -> PointCloud:
    """Read a point cloud; the label is set to the file stem.

    Raises CloudParseError (with line or byte offset where applicable),
    EmptyCloudError when the file parses to zero points, and
    NonFiniteCoordinateError for inf/nan coordinates.
    """
    fmt = _check_format(format) if format else _infer_format(path)
    if fmt == "raw":
        with open(path, "rb") as fh:
            data = fh.read()
        pts = _parse_raw(data, str(path))
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        pts = _parse_xyz(text, str(path)) if fmt == "xyz" else _parse_ply(text, str(path))
    if len(pts) == 0:
        raise EmptyCloudError(f"{path}: no points")
    return as_cloud(np.asarray(pts, dtype=np.float64), label=_stem(path))


def _parse_xyz(text: str, path: str) -> list:
    pts = []
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.strip()
        if not body or body.startswith("#"):
            continue
        tokens = body.split()
        if len(tokens) != 3:
            raise CloudParseError(
                f"expected 3 coordinates, found {len(tokens)}", path=path, line=ln)
        try:
            pts.append([float(t) for t in tokens])
        except ValueError:
            raise CloudParseError(f"bad coordinate in {tokens}", path=path, line=ln) from None
    return pts


def _parse_ply(text: str, path: str) -> np.ndarray:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError("missing 'ply' magic line", path=path, line=1)
    elements = []  # (name, count, [property names]) in declaration order
    header_end = None
    for ln, line in enumerate(lines[1:], start=2):
        tokens = line.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1:2] != ["ascii"]:
                raise CloudParseError(
                    f"only ascii PLY is supported, got {' '.join(tokens[1:])}",
                    path=path, line=ln)
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise CloudParseError("malformed element line", path=path, line=ln)
            try:
                count = int(tokens[2])
            except ValueError:
                raise CloudParseError("bad element count", path=path, line=ln) from None
            elements.append([tokens[1], count, []])
        elif tokens[0] == "property":
            if not elements:
                raise CloudParseError("property before any element", path=path, line=ln)
            # list properties (e.g. face indices) occupy one data line anyway
            elements[-1][2].append(tokens[-1])
        elif tokens[0] == "end_header":
            header_end = ln
            break
    if header_end is None:
        raise CloudParseError("missing end_header", path=path, line=len(lines))

    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise CloudParseError("no vertex element", path=path, line=header_end)
    props = vertex[2]
    try:
        cols = [props.index(axis) for axis in ("x", "y", "z")]
    except ValueError:
        raise CloudParseError(
            f"vertex element lacks x/y/z properties, has {props}",
            path=path, line=header_end) from None

    data_lines = [(ln, line) for ln, line in enumerate(lines[header_end:], start=header_end + 1)
                  if line.strip()]
    cursor = 0
    pts = None
    for name, count, eprops in elements:
        rows = data_lines[cursor:cursor + count]
        if len(rows) < count:
            raise CloudParseError(
                f"element {name} declares {count} rows, found {len(rows)}",
                path=path, line=len(lines))
        cursor += count
        if name != "vertex":
            continue
        pts = []
        for ln, line in rows:
            tokens = line.split()
            if len(tokens) < len(eprops):
                raise CloudParseError(
                    f"vertex row has {len(tokens)} values, expected {len(eprops)}",
                    path=path, line=ln)
            try:
                pts.append([float(tokens[c]) for c in cols])
            except ValueError:
                raise CloudParseError("bad vertex coordinate", path=path, line=ln) from None
    return np.asarray(pts, dtype=np.float64)


def _parse_raw(data: bytes, path: str) -> np.ndarray:
    if data[:8] != RAW_MAGIC:
        raise CloudParseError("bad magic", path=path, offset=0)
    if len(data) < 16:
        raise CloudParseError("truncated header", path=path, offset=len(data))
    (count,) = struct.unpack_from("<Q", data, 8)
    need = 16 + 12 * count
    if len(data) < need:
        raise CloudParseError(
            f"truncated payload: {count} points need {need} bytes, file has {len(data)}",
            path=path, offset=len(data))
    if len(data) > need:
        raise CloudParseError(f"{len(data) - need} trailing bytes", path=path, offset=need)
    flat = np.frombuffer(data, dtype="<f4", count=3 * count, offset=16)
    return flat.astype(np.float64).reshape(count, 3)


def write_cloud(path, cloud, format: str | None = None) -> None:
    """Write a cloud; XYZ and PLY use 9 significant digits."""
    fmt = _check_format(format) if format else _infer_format(path)
    pts = as_cloud(cloud).points
    if fmt == "raw":
        with open(path, "wb") as fh:
            fh.write(RAW_MAGIC)
            fh.write(struct.pack("<Q", pts.shape[0]))
            fh.write(pts.astype("<f4").tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "ply":
            fh.write("ply\nformat ascii 1.0\n"
                     f"element vertex {pts.shape[0]}\n"
                     "property float x\nproperty float y\nproperty float z\n"
                     "end_header\n")
        for x, y, z in pts:
            fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")


def round_floats(obj):
    """Recursively round floats to 9 significant digits for stable JSON."""
    if isinstance(obj, bool):
        return obj
    if isinstance(obj, float):
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def report_json(obj) -> str:
    """Canonical report JSON: sorted keys, 9-significant-digit floats."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(round_floats(obj), sort_keys=True, indent=2) + "\n"


def _quality_rows(report):
    cols = ["kind", "label", "tau", "coverage", "spurious", "sp_bar",
            "quality", "f1", "n_pred", "n_gt"]
    rows = [cols]

    def fmt(v):
        if v is None or v == "":
            return ""
        if isinstance(v, float):
            return f"{v:.9g}"
        return str(v)

    def add(kind, label, d, n_pred="", n_gt="", tau=""):
        rows.append([fmt(x) for x in (
            kind, label, d.get("tau", tau), d["coverage"], d["spurious"],
            d["sp_bar"], d["quality"], d["f1"], n_pred, n_gt)])

    if isinstance(report, QualityReport):
        d = report.to_dict()
        add("pair", d["label"] or "", d, d["n_pred"], d["n_gt"])
    else:
        for r in report.per_pair:
            d = r.to_dict()
            add("pair", d["label"] or "", d, d["n_pred"], d["n_gt"])
        for label, d in report.per_category.items():
            add("category", label, d)
        add("overall", "", report.overall)
    return rows


def report_csv(report) -> str:
    """Flat CSV with a leading kind column (pair / category / overall)."""
    if not isinstance(report, (QualityReport, AggregateReport)):
        raise InvalidParamsError(
            f"csv export supports quality reports, got {type(report).__name__}")
    return "\n".join(",".join(row) for row in _quality_rows(report)) + "\n"


def write_report(report, path, format: str = "json") -> None:
    """Serialize a QualityReport or AggregateReport to JSON or CSV.

    JSON output is byte-stable for identical inputs.
    """
    if format == "json":
        payload = report_json(report)
    elif format == "csv":
        payload = report_csv(report)
    else:
        raise InvalidParamsError(f"format must be 'json' or 'csv', got {format!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(payload)
