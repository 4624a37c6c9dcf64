"""File formats: curve CSV, versioned JSON reports, SVG profile plots, run manifests.

Floats are written with 17 significant digits everywhere so that identical runs give
byte-identical files and every value round-trips exactly.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io as _io
import json
import math
import os
from typing import Optional

import numpy as np

from .geodesic import DomainConfig, ProfileCurve, derived_scalars

SCHEMA_VERSION = 1
CSV_COLUMNS = ("s", "x", "r", "theta", "H", "Psi", "Phi", "Lambda", "kappa", "event")


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return format(v, ".17g")


# ---------------------------------------------------------------------------
# CSV

def curve_rows(curve: ProfileCurve, events=True):
    """Sample rows (event column empty) merged with refined event rows, ordered by s."""
    d = {"H": curve.H, "Psi": curve.Psi, "Phi": curve.Phi, "Lambda": curve.Lambda,
         "kappa": curve.kappa}
    rows = []
    for i in range(len(curve.s)):
        rows.append((float(curve.s[i]), 0, [curve.s[i], curve.x[i], curve.r[i], curve.theta[i]]
                     + [d[k][i] for k in CSV_COLUMNS[4:9]], ""))
    if events and curve.events:
        ev = curve.events
        e = derived_scalars([q.x for q in ev], [q.r for q in ev], [q.theta for q in ev],
                            curve.alpha)
        for j, q in enumerate(ev):
            rows.append((q.s, 1, [q.s, q.x, q.r, q.theta] + [e[k][j] for k in CSV_COLUMNS[4:9]],
                         q.kind))
    rows.sort(key=lambda t: (t[0], t[1]))
    return [vals + [kind] for _, _, vals, kind in rows]


def curve_csv_text(curve: ProfileCurve, events=True) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in curve_rows(curve, events):
        w.writerow([fmt(v) for v in row[:-1]] + [row[-1]])
    return buf.getvalue()


def write_curve_csv(path, curve: ProfileCurve, events=True):
    _write_text(path, curve_csv_text(curve, events))


def read_curve_csv(path, cfg: DomainConfig, closed=False) -> ProfileCurve:
    """Samples of a curve CSV (event rows are dropped and recomputed)."""
    s, x, r, t = [], [], [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row.get("event"):
                continue
            s.append(float(row["s"]))
            x.append(float(row["x"]))
            r.append(float(row["r"]))
            t.append(float(row["theta"]))
    return ProfileCurve(s, x, r, t, cfg, closed=closed)


def write_table_csv(path, header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    _write_text(path, buf.getvalue())


# ---------------------------------------------------------------------------
# JSON

def plain(obj):
    """Recursively convert dataclasses, numpy values and tuples into JSON-ready objects."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "record"):
            return plain(obj.record())
        return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for k, (key, v) in enumerate(items):
            out.append(pad + json.dumps(key) + ": ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if k < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (dict, list)) for v in obj):
            out.append("[")
            for k, v in enumerate(obj):
                _emit(v, indent, level + 1, out)
                if k < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for k, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if k < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, float):
        # non-finite values become strings: strict JSON has no nan/inf
        out.append(fmt(obj) if math.isfinite(obj) else json.dumps(fmt(obj)))
    elif isinstance(obj, int):
        out.append(str(obj))
    else:
        out.append(json.dumps(obj))


def dumps(obj, indent=2) -> str:
    out = []
    _emit(plain(obj), indent, 0, out)
    return "".join(out) + "\n"


def report_json(kind, payload) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": kind}
    doc.update(plain(payload))
    return dumps(doc)


def write_report(path, kind, payload):
    _write_text(path, report_json(kind, payload))


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# SVG

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2",
           "#7f7f7f", "#bcbd22", "#17becf")


def svg_profiles(curves, cylinder_radius=None, cone_slope=None, width=640, title=None) -> str:
    """SVG text for overlaid profile curves [(label, x, r), ...] in the (x, r) plane.

    The view box is fixed by the data extents; the coordinate axes and the cylinder line
    are dashed, a reference cone r = cone_slope * x is dotted.
    """
    xs = np.concatenate([np.asarray(c[1], dtype=float) for c in curves] + [np.zeros(1)])
    rs = np.concatenate([np.asarray(c[2], dtype=float) for c in curves] + [np.zeros(1)])
    if cylinder_radius:
        rs = np.append(rs, cylinder_radius)
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    r0, r1 = float(np.min(rs)), float(np.max(rs))
    span = max(x1 - x0, r1 - r0, 1e-9)
    m = 0.05 * span
    x0, x1, r0, r1 = x0 - m, x1 + m, r0 - m, r1 + m
    height = int(round(width * (r1 - r0) / (x1 - x0)))
    sw = 0.004 * span

    def pt(x, r):
        return f"{x:.6f},{-r:.6f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="{x0:.6f} {-r1:.6f} {x1 - x0:.6f} {r1 - r0:.6f}">']
    if title:
        out.append(f"<title>{title}</title>")
    dash = f'stroke-dasharray="{4 * sw:.6f},{3 * sw:.6f}"'
    out.append(f'<g fill="none" stroke="#888888" stroke-width="{sw:.6f}" {dash}>')
    out.append(f'<line x1="{x0:.6f}" y1="0" x2="{x1:.6f}" y2="0"/>')
    out.append(f'<line x1="0" y1="{-r0:.6f}" x2="0" y2="{-r1:.6f}"/>')
    if cylinder_radius:
        out.append(f'<line x1="{x0:.6f}" y1="{-cylinder_radius:.6f}" x2="{x1:.6f}" '
                   f'y2="{-cylinder_radius:.6f}"/>')
    out.append("</g>")
    if cone_slope:
        xe = min(x1, r1 / cone_slope)
        out.append(f'<line x1="0" y1="0" x2="{xe:.6f}" y2="{-cone_slope * xe:.6f}" '
                   f'stroke="#444444" stroke-width="{sw:.6f}" '
                   f'stroke-dasharray="{sw:.6f},{2 * sw:.6f}"/>')
    for k, (label, x, r) in enumerate(curves):
        col = _COLORS[k % len(_COLORS)]
        pts = " ".join(pt(a, b) for a, b in zip(np.asarray(x, float), np.asarray(r, float)))
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="{1.5 * sw:.6f}" '
                   f'points="{pts}"><title>{label}</title></polyline>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(path, curves, **kw):
    _write_text(path, svg_profiles(curves, **kw))


# ---------------------------------------------------------------------------
# manifests

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclasses.dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    version: str
    wall_time: float
    outputs: list            # [{"path": ..., "sha256": ...}]

    @classmethod
    def build(cls, command, argv, config, version, wall_time, paths):
        outs = [{"path": p, "sha256": sha256_file(p)} for p in paths if p and os.path.exists(p)]
        return cls(command, list(argv), dict(config), version, float(wall_time), outs)

    def write(self, path):
        _write_text(path, dumps({"schema_version": SCHEMA_VERSION, "kind": "manifest",
                                 **dataclasses.asdict(self)}))

    @classmethod
    def read(cls, path):
        d = load_json(path)
        return cls(d["command"], d["argv"], d["config"], d["version"], d["wall_time"],
                   d["outputs"])


def _write_text(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)
