"""Problem instances: locations, travel costs, battery limits, persistence.

An instance is a set of planar locations with elevations, a dense travel
cost matrix, a designated start, the subset of locations allowed to host a
charging station, and the battery envelope of the vehicle. Instances are
value objects: once built they never change, and two instances compare
equal exactly when every field matches.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import IO, Union

import numpy as np

PathOrFile = Union[str, os.PathLike, IO[str]]


class InstanceParseError(ValueError):
    """A persisted instance file is malformed (bad type, shape, or value)."""


class InstanceValidationError(ValueError):
    """Instance fields parse fine but violate a semantic invariant."""


@dataclass(frozen=True)
class Location:
    """One visitable point: planar coordinates plus an elevation."""

    id: int
    x: float
    y: float
    elevation: float


@dataclass(frozen=True)
class BatteryParams:
    """Battery envelope and charging behaviour.

    q_max: usable capacity, upper bound for every level check.
    q_charge: charge gained by one stop at a station.
    q_standard: preferred operating level the route solver is pulled toward.
    q_init: level at departure from the start location.
    """

    q_max: float = 6.0
    q_charge: float = 3.0
    q_standard: float = 3.0
    q_init: float = 3.0

    def __post_init__(self):
        if not (0.0 <= self.q_standard <= self.q_max):
            raise InstanceValidationError(
                f"q_standard must lie in [0, q_max], got {self.q_standard}"
            )
        if not (0.0 <= self.q_init <= self.q_max):
            raise InstanceValidationError(
                f"q_init must lie in [0, q_max], got {self.q_init}"
            )
        if not self.q_charge > 0.0:
            raise InstanceValidationError(f"q_charge must be positive, got {self.q_charge}")


@dataclass(frozen=True)
class GenParams:
    """Knobs for the random instance generator.

    m of the n locations become station candidates (the m lowest by
    elevation). The cost of a move is distance_scale times the Euclidean
    distance plus elevation_scale times the signed climb, so downhill moves
    can be cheaper than the reverse direction and may even be negative.
    """

    n: int
    m: int
    elevation_scale: float = 1.0
    distance_scale: float = 1.0
    seed: int = 0
    start: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise InstanceValidationError(f"need at least two locations, got n={self.n}")
        if not (0 <= self.m <= self.n):
            raise InstanceValidationError(f"m must lie in [0, n], got m={self.m}")
        if not self.distance_scale > 0.0:
            raise InstanceValidationError(
                f"distance_scale must be positive, got {self.distance_scale}"
            )
        if not (0 <= self.start < self.n):
            raise InstanceValidationError(f"start must be a location id, got {self.start}")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    locations: tuple[Location, ...]
    cost: np.ndarray
    candidates: tuple[int, ...]
    start: int
    battery: BatteryParams

    def __post_init__(self):
        n = len(self.locations)
        if n < 2:
            raise InstanceValidationError("instance needs at least two locations")
        ids = [loc.id for loc in self.locations]
        if sorted(ids) != list(range(n)):
            raise InstanceValidationError("location ids must be exactly 0..n-1")
        if ids != sorted(ids):
            # keep a canonical order so equality and iteration are stable
            object.__setattr__(
                self, "locations", tuple(sorted(self.locations, key=lambda l: l.id))
            )
        cost = np.asarray(self.cost, dtype=np.float64)
        if cost.shape != (n, n):
            raise InstanceValidationError(
                f"cost must be {n}x{n}, got shape {cost.shape}"
            )
        if not np.all(np.isfinite(cost)):
            raise InstanceValidationError("cost matrix contains non-finite entries")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        if len(set(self.candidates)) != len(self.candidates):
            raise InstanceValidationError("candidate ids must be distinct")
        for c in self.candidates:
            if not (0 <= c < n):
                raise InstanceValidationError(f"candidate id {c} out of range")
        object.__setattr__(self, "candidates", tuple(int(c) for c in self.candidates))
        if not (0 <= self.start < n):
            raise InstanceValidationError(f"start must be a location id, got {self.start}")

    @property
    def n(self) -> int:
        return len(self.locations)

    @property
    def m(self) -> int:
        return len(self.candidates)

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.locations == other.locations
            and np.array_equal(self.cost, other.cost)
            and self.candidates == other.candidates
            and self.start == other.start
            and self.battery == other.battery
        )

    def __hash__(self):
        return hash((self.locations, self.candidates, self.start, self.battery))


def generate_instance(params: GenParams, battery: BatteryParams | None = None) -> ProblemInstance:
    """Draw a random instance; identical params give a bit-identical result.

    Coordinates are uniform in the unit square and elevations uniform in
    [0, 1). Candidates are the m lowest-elevation locations, ties going to
    the lower id.
    """
    if battery is None:
        battery = BatteryParams()
    rng = np.random.default_rng(params.seed)
    xy = rng.random((params.n, 2))
    elevation = rng.random(params.n)

    locations = tuple(
        Location(id=i, x=float(xy[i, 0]), y=float(xy[i, 1]), elevation=float(elevation[i]))
        for i in range(params.n)
    )
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    climb = elevation[None, :] - elevation[:, None]  # climb[i, j] = elev_j - elev_i
    cost = params.distance_scale * dist + params.elevation_scale * climb
    np.fill_diagonal(cost, 0.0)

    # stable sort keeps lower ids first among equal elevations
    ranked = np.argsort(elevation, kind="stable")
    candidates = tuple(sorted(int(i) for i in ranked[: params.m]))
    return ProblemInstance(
        locations=locations,
        cost=cost,
        candidates=candidates,
        start=params.start,
        battery=battery,
    )


# ---------------------------------------------------------------------------
# Persistence. The on-disk form is a single JSON document:
#
#   {
#     "n": 4, "m": 2, "start": 0,
#     "battery": {"q_max": .., "q_charge": .., "q_standard": .., "q_init": ..},
#     "locations": [{"id": 0, "x": .., "y": .., "elevation": ..}, ...],
#     "candidates": [0, 3],
#     "cost": [[...], ...]        # n rows of n entries, row major
#   }
#
# Floats round-trip at full precision (shortest repr that reparses exactly).


def save_instance(inst: ProblemInstance, sink: PathOrFile) -> None:
    doc = {
        "n": inst.n,
        "m": inst.m,
        "start": inst.start,
        "battery": {
            "q_max": inst.battery.q_max,
            "q_charge": inst.battery.q_charge,
            "q_standard": inst.battery.q_standard,
            "q_init": inst.battery.q_init,
        },
        "locations": [
            {"id": loc.id, "x": loc.x, "y": loc.y, "elevation": loc.elevation}
            for loc in inst.locations
        ],
        "candidates": list(inst.candidates),
        "cost": [[float(v) for v in row] for row in inst.cost],
    }
    text = json.dumps(doc, indent=1)
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            fh.write(text)


def _require(doc: dict, key: str, kind, where: str = ""):
    label = f"{where}{key}"
    if key not in doc:
        raise InstanceParseError(f"missing field '{label}'")
    value = doc[key]
    if kind is int:
        # bools are ints in Python; reject them explicitly
        if isinstance(value, bool) or not isinstance(value, int):
            raise InstanceParseError(f"field '{label}' must be an integer")
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InstanceParseError(f"field '{label}' must be a number")
        if not math.isfinite(float(value)):
            raise InstanceParseError(f"field '{label}' must be finite")
        return float(value)
    elif not isinstance(value, kind):
        raise InstanceParseError(f"field '{label}' must be of type {kind.__name__}")
    return value


def load_instance(source: PathOrFile) -> ProblemInstance:
    """Parse and validate a persisted instance.

    Structural problems (missing fields, wrong types, non-finite numbers,
    shape mismatches) raise InstanceParseError naming the offending field.
    Well-formed documents that break a semantic invariant (for example a
    candidate list whose length disagrees with m) raise
    InstanceValidationError.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise InstanceParseError("top-level document must be an object")

    n = _require(doc, "n", int)
    m = _require(doc, "m", int)
    start = _require(doc, "start", int)
    if n < 0:
        raise InstanceParseError("field 'n' must be non-negative")

    bat_doc = _require(doc, "battery", dict)
    bat_kwargs = {
        key: _require(bat_doc, key, float, where="battery.")
        for key in ("q_max", "q_charge", "q_standard", "q_init")
    }

    locs_doc = _require(doc, "locations", list)
    if len(locs_doc) != n:
        raise InstanceParseError(f"field 'locations' must hold {n} entries, got {len(locs_doc)}")
    locations = []
    for idx, entry in enumerate(locs_doc):
        if not isinstance(entry, dict):
            raise InstanceParseError(f"field 'locations[{idx}]' must be an object")
        where = f"locations[{idx}]."
        locations.append(
            Location(
                id=_require(entry, "id", int, where=where),
                x=_require(entry, "x", float, where=where),
                y=_require(entry, "y", float, where=where),
                elevation=_require(entry, "elevation", float, where=where),
            )
        )

    cand_doc = _require(doc, "candidates", list)
    for idx, value in enumerate(cand_doc):
        if isinstance(value, bool) or not isinstance(value, int):
            raise InstanceParseError(f"field 'candidates[{idx}]' must be an integer")

    cost_doc = _require(doc, "cost", list)
    if len(cost_doc) != n:
        raise InstanceParseError(f"field 'cost' must hold {n} rows, got {len(cost_doc)}")
    cost = np.empty((n, n), dtype=np.float64)
    for i, row in enumerate(cost_doc):
        if not isinstance(row, list) or len(row) != n:
            raise InstanceParseError(f"field 'cost[{i}]' must be a row of {n} numbers")
        for j, value in enumerate(row):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InstanceParseError(f"field 'cost[{i}][{j}]' must be a number")
            v = float(value)
            if not math.isfinite(v):
                raise InstanceParseError(f"field 'cost[{i}][{j}]' must be finite")
            cost[i, j] = v

    # semantic invariants from here on
    if len(cand_doc) != m:
        raise InstanceValidationError(
            f"candidate list holds {len(cand_doc)} ids but m = {m}"
        )
    battery = BatteryParams(**bat_kwargs)
    return ProblemInstance(
        locations=tuple(locations),
        cost=cost,
        candidates=tuple(cand_doc),
        start=start,
        battery=battery,
    )
