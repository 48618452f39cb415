"""Reading and writing BoundsProfile files (CSV and JSON).

The CSV layout is one row per bin::

    # provenance: estimated:nr(q=0.05)
    # notes: key=value;key=value
    # grid: r_min=0.003,r_max=0.011,delta=0.001
    bin_index,bin_lower_edge,lower,upper,weight
    1,0.003,0.0031,0.0052,14.0
    ...

Floats are written with ``repr`` so a write/read round trip is exact.
"""

from __future__ import annotations

import csv
import io
import json
import os

import numpy as np

from .domain import BoundsProfile, MarginGrid, Provenance
from .exceptions import FormatError, InvalidInputError

PROFILE_HEADER = ("bin_index", "bin_lower_edge", "lower", "upper", "weight")


def _grid_text(grid: MarginGrid) -> str:
    return f"r_min={grid.r_min!r},r_max={grid.r_max!r},delta={grid.delta!r}"


def profile_to_csv(profile: BoundsProfile) -> str:
    buf = io.StringIO()
    buf.write(f"# provenance: {profile.provenance}\n")
    if profile.provenance.notes:
        buf.write(f"# notes: {';'.join(profile.provenance.notes)}\n")
    buf.write(f"# grid: {_grid_text(profile.grid)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(PROFILE_HEADER)
    edges = profile.grid.lower_edges
    for i in range(profile.n_bins):
        writer.writerow([i + 1, repr(float(edges[i])), repr(float(profile.lower[i])),
                         repr(float(profile.upper[i])), repr(float(profile.weight[i]))])
    return buf.getvalue()


def _parse_grid(text: str, line: int) -> MarginGrid:
    try:
        fields = dict(part.split("=", 1) for part in text.split(","))
        return MarginGrid(float(fields["r_min"]), float(fields["r_max"]), float(fields["delta"]))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad grid line {text!r}: {exc}", line=line) from None


def profile_from_csv(text: str) -> BoundsProfile:
    """Parse the CSV produced by :func:`profile_to_csv`.

    Raises FormatError (with a line number) on a missing header, a missing
    grid comment, non-numeric cells or a bin count that does not match
    the grid.
    """
    lines = text.splitlines()
    meta = {}
    start = 0
    for start, raw in enumerate(lines):
        if not raw.startswith("#"):
            break
        key, sep, value = raw[1:].partition(":")
        if sep:
            meta[key.strip()] = (value.strip(), start + 1)
    else:
        start = len(lines)
    if "grid" not in meta:
        raise FormatError("missing '# grid:' comment line", line=1)
    grid = _parse_grid(*meta["grid"])
    try:
        prov = Provenance.parse(meta.get("provenance", ("estimated:unknown", 0))[0])
    except InvalidInputError as exc:
        raise FormatError(str(exc), line=meta["provenance"][1]) from None
    if "notes" in meta and meta["notes"][0]:
        prov = Provenance(prov.kind, prov.label, tuple(meta["notes"][0].split(";")))

    reader = csv.reader(lines[start:])
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != PROFILE_HEADER:
        raise FormatError(f"expected header {','.join(PROFILE_HEADER)}", line=start + 1)
    rows = []
    for offset, row in enumerate(reader, start=start + 2):
        if not row:
            continue
        if len(row) != len(PROFILE_HEADER):
            raise FormatError(f"expected {len(PROFILE_HEADER)} fields, got {len(row)}", line=offset)
        try:
            idx = int(row[0])
            vals = [float(v) for v in row[2:]]
        except ValueError:
            raise FormatError(f"non-numeric field in {row!r}", line=offset) from None
        if idx != len(rows) + 1:
            raise FormatError(f"bin_index {idx} out of sequence", line=offset)
        rows.append(vals)
    if len(rows) != grid.n_bins:
        raise FormatError(f"{len(rows)} bins listed but the grid has {grid.n_bins}",
                          line=start + 1)
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    try:
        return BoundsProfile(grid, arr[:, 0], arr[:, 1], arr[:, 2], prov)
    except InvalidInputError as exc:
        raise FormatError(str(exc)) from None


def profile_to_dict(profile: BoundsProfile) -> dict:
    return {
        "provenance": {"kind": profile.provenance.kind, "label": profile.provenance.label,
                       "notes": list(profile.provenance.notes)},
        "grid": profile.grid.to_dict(),
        "bin_lower_edge": profile.grid.lower_edges.tolist(),
        "lower": profile.lower.tolist(),
        "upper": profile.upper.tolist(),
        "weight": profile.weight.tolist(),
    }


def profile_from_dict(data: dict) -> BoundsProfile:
    try:
        g = data["grid"]
        grid = MarginGrid(float(g["r_min"]), float(g["r_max"]), float(g["delta"]))
        p = data.get("provenance", {})
        prov = Provenance(p.get("kind", "estimated"), p.get("label", "unknown"),
                          tuple(p.get("notes", ())))
        return BoundsProfile(grid, data["lower"], data["upper"], data["weight"], prov)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed profile JSON: {exc}") from None


def write_profile(profile: BoundsProfile, path, fmt=None) -> None:
    """Write ``profile`` to ``path``; the format follows the suffix unless given."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "csv")
    if fmt == "json":
        text = json.dumps(profile_to_dict(profile), indent=2) + "\n"
    elif fmt == "csv":
        text = profile_to_csv(profile)
    else:
        raise InvalidInputError(f"unknown profile format {fmt!r}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_profile(path) -> BoundsProfile:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if os.fspath(path).endswith(".json"):
        try:
            return profile_from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return profile_from_csv(text)
