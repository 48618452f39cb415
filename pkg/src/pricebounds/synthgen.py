"""Synthetic pricing operations with known bound envelopes.

Each scenario has a lower and an upper envelope of the next margin as a
function of the current margin. Lower envelopes are monotone and convex,
upper envelopes monotone and concave, so the discretized truth is
feasible for the full shape-constrained adjustment.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from .domain import BoundsProfile, MarginGrid, OperationRecord, Provenance
from .exceptions import InvalidInputError


@dataclass(frozen=True)
class Envelope:
    """``c0 + c1 x + c2 x^2 + kink_slope * max(0, x - kink_at)`` with ``x = r - r_min``."""

    c0: float
    c1: float = 0.0
    c2: float = 0.0
    kink_at: float = 0.0
    kink_slope: float = 0.0

    def __call__(self, r, r_min):
        x = np.asarray(r, dtype=float) - r_min
        return (self.c0 + self.c1 * x + self.c2 * x * x
                + self.kink_slope * np.maximum(0.0, x - self.kink_at))


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    lower: Envelope
    upper: Envelope
    r_min: float = 0.003
    r_max: float = 0.011
    current_beta: tuple = (2.0, 2.0)
    next_beta: tuple = (1.0, 1.0)
    stay_rate: float = 0.05
    outlier_rate: float = 0.05
    outlier_spread: float = 0.5
    seed: int = 0
    start: str = "2023-01-01T00:00:00Z"
    span_days: float = 365.0

    def __post_init__(self):
        validate_scenario(self)

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return replace(self, seed=int(seed))


def validate_scenario(spec: ScenarioSpec) -> None:
    """Check the envelope shapes on a fine grid; raises InvalidInputError."""
    if not spec.r_min < spec.r_max:
        raise InvalidInputError("r_min must be smaller than r_max")
    for name in ("stay_rate", "outlier_rate"):
        v = getattr(spec, name)
        if not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{name} must lie in [0, 1]")
    if spec.stay_rate + spec.outlier_rate > 1.0:
        raise InvalidInputError("stay_rate + outlier_rate exceeds 1")
    if spec.outlier_spread <= 0:
        raise InvalidInputError("outlier_spread must be positive")
    if min(spec.current_beta) <= 0 or min(spec.next_beta) <= 0:
        raise InvalidInputError("beta parameters must be positive")
    r = np.linspace(spec.r_min, spec.r_max, 1001)
    lb, ub = spec.lower(r, spec.r_min), spec.upper(r, spec.r_min)
    tol = 1e-12
    if np.any(lb > ub + tol):
        raise InvalidInputError(f"{spec.name}: lower envelope exceeds upper envelope")
    if np.any(np.diff(lb) < -tol) or np.any(np.diff(ub) < -tol):
        raise InvalidInputError(f"{spec.name}: envelopes must be non-decreasing")
    if np.any(np.diff(lb, 2) < -tol):
        raise InvalidInputError(f"{spec.name}: lower envelope must be convex")
    if np.any(np.diff(ub, 2) > tol):
        raise InvalidInputError(f"{spec.name}: upper envelope must be concave")


# Product archetypes: a wide band that widens with the margin, a tight
# band, and a lower bound that stays flat before rising.
SCENARIOS = {
    "A": ScenarioSpec("A", Envelope(0.003, 0.55, 12.0), Envelope(0.005, 0.95, -25.0)),
    "B": ScenarioSpec("B", Envelope(0.0035, 0.8, 5.0), Envelope(0.0044, 0.9, -10.0)),
    "C": ScenarioSpec("C", Envelope(0.003, 0.0, 0.0, kink_at=0.003, kink_slope=0.9),
                      Envelope(0.006, 0.7, -12.0)),
}


def true_profile(spec: ScenarioSpec, grid: MarginGrid) -> BoundsProfile:
    """Discretized truth: the envelope range over each current-margin bin.

    Both envelopes are non-decreasing, so bin ``i`` spans next margins from
    the lower envelope at its left edge to the upper envelope at its right
    edge. Every bin gets weight 1.
    """
    lower = spec.lower(grid.lower_edges, spec.r_min)
    upper = spec.upper(grid.upper_edges, spec.r_min)
    return BoundsProfile(grid, lower, upper, np.ones(grid.n_bins),
                         Provenance("estimated", f"truth:{spec.name}"))


def generate(spec: ScenarioSpec, n: int, grid: MarginGrid = None):
    """Draw ``n`` operations; returns ``(records, true_profile, is_outlier)``.

    Current margins are Beta-distributed over ``[r_min, r_max]``. A
    ``stay_rate`` share keeps its margin when that margin lies inside the
    envelope, an ``outlier_rate`` share lands outside the envelope by up to
    ``outlier_spread`` band widths, and the rest follow a Beta draw inside
    the envelope.
    """
    n = int(n)
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    grid = grid or MarginGrid(spec.r_min, spec.r_max, 0.001)
    rng = np.random.default_rng(spec.seed)
    width = spec.r_max - spec.r_min
    cur = spec.r_min + width * rng.beta(*spec.current_beta, size=n)
    lb, ub = spec.lower(cur, spec.r_min), spec.upper(cur, spec.r_min)
    band = ub - lb
    nxt = lb + band * rng.beta(*spec.next_beta, size=n)

    kind = rng.random(n)
    outlier = kind < spec.outlier_rate
    stay = (kind >= spec.outlier_rate) & (kind < spec.outlier_rate + spec.stay_rate)
    stay &= (cur >= lb) & (cur <= ub)
    nxt = np.where(stay, cur, nxt)
    # Outliers sit strictly outside the band, on a random side.
    gap = spec.outlier_spread * np.maximum(band, 1e-4) * (1.0 - rng.random(n))
    below = rng.random(n) < 0.5
    nxt = np.where(outlier, np.where(below, lb - gap, ub + gap), nxt)

    start = datetime.fromisoformat(spec.start.replace("Z", "+00:00")).astimezone(timezone.utc)
    seconds = np.sort(rng.random(n)) * spec.span_days * 86400.0
    records = [
        OperationRecord(spec.name, start + timedelta(seconds=int(s)), float(c), float(x))
        for s, c, x in zip(seconds, cur, nxt)
    ]
    return records, true_profile(spec, grid), outlier


def scenario_from_dict(data: dict) -> ScenarioSpec:
    try:
        data = dict(data)
        data["lower"] = Envelope(**data["lower"])
        data["upper"] = Envelope(**data["upper"])
        for key in ("current_beta", "next_beta"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        return ScenarioSpec(**data)
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed scenario: {exc}") from None


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    out = asdict(spec)
    out["current_beta"] = list(spec.current_beta)
    out["next_beta"] = list(spec.next_beta)
    return out


def load_scenarios(path) -> list:
    """Read a JSON file holding one scenario object or a list of them.

    Strings naming a built-in scenario ("A", "B", "C") are accepted in the
    list as well.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidInputError(f"{path}: invalid JSON ({exc.msg}, line {exc.lineno})") from None
    items = data if isinstance(data, list) else [data]
    specs = []
    for item in items:
        if isinstance(item, str):
            if item not in SCENARIOS:
                raise InvalidInputError(f"unknown built-in scenario {item!r}")
            specs.append(SCENARIOS[item])
        else:
            specs.append(scenario_from_dict(item))
    return specs
