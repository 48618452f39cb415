"""Core data types: operation records, the margin grid and bounds profiles.

Margins are dimensionless fractions throughout (``0.007`` means 0.7%).
Bin indices are 1-based in every public function, matching the
``bin_index`` column of the profile files; arrays stored on a
:class:`BoundsProfile` are ordinary 0-based numpy arrays, so bin ``i``
lives at position ``i - 1``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from .exceptions import FormatError, InvalidInputError, OutOfDomainError

CSV_HEADER = ("product_id", "timestamp", "current_margin", "next_margin")

# Relative snap used when a grid coordinate lands within float noise of
# an integer (e.g. (0.011 - 0.003) / 0.001 = 7.999999999999999).
_SNAP = 1e-9


def _snap(k):
    r = np.round(k)
    return np.where(np.abs(k - r) < _SNAP, r, k)


@dataclass(frozen=True)
class OperationRecord:
    product_id: str
    timestamp: datetime
    current_margin: float
    next_margin: float

    def __post_init__(self):
        if not (math.isfinite(self.current_margin) and math.isfinite(self.next_margin)):
            raise InvalidInputError("margins must be finite")
        if self.timestamp.tzinfo is None:
            object.__setattr__(self, "timestamp", self.timestamp.replace(tzinfo=timezone.utc))


@dataclass(frozen=True)
class MarginGrid:
    """Uniform discretization of ``[r_min, r_max]`` with step ``delta``."""

    r_min: float = 0.003
    r_max: float = 0.011
    delta: float = 0.001

    def __post_init__(self):
        for name in ("r_min", "r_max", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidInputError(f"{name} must be finite")
        if not self.r_min < self.r_max:
            raise InvalidInputError("r_min must be smaller than r_max")
        if self.delta <= 0:
            raise InvalidInputError("delta must be positive")

    @property
    def n_bins(self) -> int:
        return int(math.ceil(float(_snap((self.r_max - self.r_min) / self.delta))))

    @property
    def lower_edges(self) -> np.ndarray:
        return self.r_min + self.delta * np.arange(self.n_bins)

    @property
    def upper_edges(self) -> np.ndarray:
        return np.minimum(self.r_min + self.delta * np.arange(1, self.n_bins + 1), self.r_max)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.lower_edges + self.upper_edges)

    def lower_edge(self, i: int) -> float:
        return float(self.lower_edges[i - 1])

    def upper_edge(self, i: int) -> float:
        return float(self.upper_edges[i - 1])

    def bins(self, margins) -> np.ndarray:
        """Vectorized :func:`bin_of`; 0 marks an out-of-domain margin."""
        r = np.asarray(margins, dtype=float)
        if not np.all(np.isfinite(r)):
            raise InvalidInputError("margins must be finite")
        k = np.floor(_snap((r - self.r_min) / self.delta)).astype(np.int64) + 1
        k = np.minimum(k, self.n_bins)
        inside = (r >= self.r_min) & (r <= self.r_max)
        return np.where(inside, k, 0)

    def bin_of(self, margin: float) -> Optional[int]:
        """Return the 1-based bin holding ``margin`` or None outside the domain.

        A margin on an interior bin edge belongs to the higher bin; ``r_max``
        itself belongs to the last bin.
        """
        i = int(self.bins(margin))
        return i or None

    def to_dict(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "delta": self.delta}


def bin_of(grid: MarginGrid, margin: float) -> Optional[int]:
    return grid.bin_of(margin)


@dataclass(frozen=True)
class Provenance:
    """Where a profile came from: ``kind`` is "estimated" or "adjusted"."""

    kind: str
    label: str
    notes: tuple = ()

    def __post_init__(self):
        if self.kind not in ("estimated", "adjusted"):
            raise InvalidInputError(f"unknown provenance kind {self.kind!r}")

    def __str__(self):
        return f"{self.kind}:{self.label}"

    @classmethod
    def parse(cls, text: str) -> "Provenance":
        kind, _, label = text.partition(":")
        return cls(kind, label)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class BoundsProfile:
    """Per-bin lower/upper next-margin bounds with per-bin weights."""

    grid: MarginGrid
    lower: np.ndarray
    upper: np.ndarray
    weight: np.ndarray
    provenance: Provenance = field(default_factory=lambda: Provenance("estimated", "manual"))

    def __post_init__(self):
        for name in ("lower", "upper", "weight"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (self.grid.n_bins,):
                raise InvalidInputError(
                    f"{name} has shape {arr.shape}, expected ({self.grid.n_bins},)"
                )
            object.__setattr__(self, name, arr)
        if np.any(self.weight < 0) or not np.all(np.isfinite(self.weight)):
            raise InvalidInputError("weights must be finite and non-negative")

    @property
    def n_bins(self) -> int:
        return self.grid.n_bins

    def bounds_at(self, margin: float) -> tuple:
        i = self.grid.bin_of(margin)
        if i is None:
            raise OutOfDomainError(f"margin {margin!r} outside [{self.grid.r_min}, {self.grid.r_max}]")
        return float(self.lower[i - 1]), float(self.upper[i - 1])

    def replace(self, **changes) -> "BoundsProfile":
        kw = dict(grid=self.grid, lower=self.lower, upper=self.upper,
                  weight=self.weight, provenance=self.provenance)
        kw.update(changes)
        return BoundsProfile(**kw)

    def allclose(self, other: "BoundsProfile", atol=1e-12) -> bool:
        return (
            self.grid == other.grid
            and np.allclose(self.lower, other.lower, rtol=0, atol=atol)
            and np.allclose(self.upper, other.upper, rtol=0, atol=atol)
            and np.array_equal(self.weight, other.weight)
        )


@dataclass(frozen=True)
class CostPricePair:
    cost: float
    margin: float

    @property
    def price(self) -> float:
        return price_from_margin(self.cost, self.margin)


def price_from_margin(cost: float, margin: float) -> float:
    """Cost-based pricing: ``(1 + margin) * cost``."""
    if not math.isfinite(cost) or cost <= 0:
        raise InvalidInputError("cost must be positive")
    if not math.isfinite(margin):
        raise InvalidInputError("margin must be finite")
    return (1.0 + margin) * cost


@dataclass(frozen=True, eq=False)
class BinnedData:
    """Next margins grouped by current-margin bin.

    ``next_margins[i - 1]`` is the sorted multiset R_i for bin ``i``;
    ``current_margins`` is aligned with it.
    """

    grid: MarginGrid
    next_margins: tuple
    current_margins: tuple
    n_excluded: int = 0

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(r) for r in self.next_margins], dtype=float)

    @property
    def n_records(self) -> int:
        return int(self.counts.sum()) + self.n_excluded

    def points(self) -> np.ndarray:
        """All in-domain (current, next) pairs as a (K, 2) array."""
        if not any(len(r) for r in self.next_margins):
            return np.empty((0, 2))
        cur = np.concatenate(self.current_margins)
        nxt = np.concatenate(self.next_margins)
        return np.column_stack([cur, nxt])


def group_by_bin(records, grid: MarginGrid) -> BinnedData:
    """Group next margins by the bin of their current margin.

    ``records`` is either a sequence of :class:`OperationRecord` or a
    ``(current, next)`` pair of arrays. Out-of-domain records are counted
    in ``n_excluded`` and dropped.
    """
    if isinstance(records, tuple) and len(records) == 2 and not isinstance(records[0], OperationRecord):
        cur = np.asarray(records[0], dtype=float).ravel()
        nxt = np.asarray(records[1], dtype=float).ravel()
    else:
        cur = np.array([r.current_margin for r in records], dtype=float)
        nxt = np.array([r.next_margin for r in records], dtype=float)
    if cur.shape != nxt.shape:
        raise InvalidInputError("current and next margins differ in length")
    b = grid.bins(cur)
    grouped_next, grouped_cur = [], []
    for i in range(1, grid.n_bins + 1):
        mask = b == i
        order = np.argsort(nxt[mask], kind="stable")
        grouped_next.append(_frozen(nxt[mask][order]))
        grouped_cur.append(_frozen(cur[mask][order]))
    return BinnedData(grid, tuple(grouped_next), tuple(grouped_cur), int(np.sum(b == 0)))


def parse_timestamp(text: str) -> datetime:
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def _parse_margin(text: str, name: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"{name} {text!r} is not a number", line=line) from None
    if not math.isfinite(value):
        raise FormatError(f"{name} {text!r} is not finite", line=line)
    return value


def load_operations(source, *, percent: bool = False) -> list:
    """Read operation records from a CSV stream, path or string buffer.

    The header must be exactly ``product_id,timestamp,current_margin,next_margin``.
    With ``percent=True`` margins in the file are percentages and are
    divided by 100 on the way in.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return load_operations(fh, percent=percent)
    if isinstance(source, io.BufferedIOBase) or "b" in getattr(source, "mode", ""):
        source = io.TextIOWrapper(source, encoding="utf-8", newline="")

    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
        raise FormatError(f"expected header {','.join(CSV_HEADER)}", line=1)
    scale = 0.01 if percent else 1.0
    records = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise FormatError(f"expected 4 fields, got {len(row)}", line=line)
        pid, ts, cur, nxt = row
        try:
            timestamp = parse_timestamp(ts)
        except ValueError:
            raise FormatError(f"timestamp {ts!r} is not RFC 3339", line=line) from None
        records.append(OperationRecord(
            pid.strip(),
            timestamp,
            _parse_margin(cur, "current_margin", line) * scale,
            _parse_margin(nxt, "next_margin", line) * scale,
        ))
    return records


def write_operations(records: Iterable[OperationRecord], sink: IO[str]) -> None:
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow([r.product_id, format_timestamp(r.timestamp),
                         repr(float(r.current_margin)), repr(float(r.next_margin))])


def split_by_product(records: Sequence[OperationRecord]) -> dict:
    out: dict = {}
    for r in records:
        out.setdefault(r.product_id, []).append(r)
    return out
