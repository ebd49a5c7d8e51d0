"""Decode annealed assignments and score station configurations.

The scoring pipeline mirrors how a route would actually be driven: decode
the one-hot assignment into a visiting order, walk the tour accumulating
travel cost, and replay the battery as a sequence of discrete events. A
stop at a station charges the battery when the vehicle departs (or, with
charge_at_arrival, when it arrives); the travel cost of the move is paid
separately. Checking the level after each individual event is what catches
the two failure modes a net per-step balance hides: a dip below empty that
a recharge immediately cancels out, and a charge spike above capacity that
the next move immediately drains back down.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anneal import SaSchedule
from .instance import ProblemInstance
from .qubo import PenaltyWeights, default_penalty_weights
from .route_sa import solve_route_sa

__all__ = [
    "StationConfig",
    "Tour",
    "BatteryTrace",
    "Evaluation",
    "EvalParams",
    "DecodeError",
    "decode_tour",
    "encode_tour",
    "travel_cost",
    "simulate_battery",
    "constraint_penalty",
    "evaluate_config",
]


class DecodeError(ValueError):
    """An assignment does not encode a tour; the message names the broken
    constraint (multiplicity, continuity, start, or closure)."""


@dataclass(frozen=True)
class StationConfig:
    """Which candidate sites host a station: one bit per candidate, in
    candidate-list order."""

    bits: tuple[int, ...]

    def __post_init__(self):
        clean = tuple(int(b) for b in self.bits)
        for b in clean:
            if b not in (0, 1):
                raise ValueError(f"station bits must be 0 or 1, got {b}")
        object.__setattr__(self, "bits", clean)

    @classmethod
    def from_bitstring(cls, text: str) -> "StationConfig":
        if not text or any(ch not in "01" for ch in text):
            raise ValueError(f"expected a nonempty string of 0s and 1s, got {text!r}")
        return cls(tuple(int(ch) for ch in text))

    def to_bitstring(self) -> str:
        return "".join(str(b) for b in self.bits)

    def as_array(self) -> np.ndarray:
        return np.array(self.bits, dtype=np.uint8)

    def station_ids(self, inst: ProblemInstance) -> tuple[int, ...]:
        """Location ids that host a station under this configuration."""
        if len(self.bits) != inst.m:
            raise ValueError(
                f"configuration has {len(self.bits)} bits, instance has {inst.m} candidates"
            )
        return tuple(loc for bit, loc in zip(self.bits, inst.candidates) if bit)

    def __len__(self):
        return len(self.bits)


def _station_flags(inst: ProblemInstance, stations) -> np.ndarray:
    """Per-location boolean mask of station hosts."""
    if isinstance(stations, StationConfig):
        bits = stations.as_array()
    else:
        bits = np.asarray(stations, dtype=np.uint8)
    if bits.shape != (inst.m,):
        raise ValueError(f"station vector must have length {inst.m}")
    flags = np.zeros(inst.n, dtype=bool)
    for bit, loc in zip(bits, inst.candidates):
        if bit:
            flags[loc] = True
    return flags


@dataclass(frozen=True)
class Tour:
    """A visiting order. order[0] is the start; closed tours append the
    return move to the start, open tours end at the last location."""

    order: tuple[int, ...]
    closed: bool = True

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))
        if len(set(self.order)) != len(self.order):
            raise ValueError("tour order must not repeat locations")
        if not self.order:
            raise ValueError("tour order must not be empty")

    @property
    def moves(self) -> tuple[tuple[int, int], ...]:
        hops = list(zip(self.order, self.order[1:]))
        if self.closed:
            hops.append((self.order[-1], self.order[0]))
        return tuple(hops)


def decode_tour(assignment, inst: ProblemInstance, close_tour: bool = True) -> Tour:
    """Read a one-hot assignment back into a Tour.

    Succeeds exactly when each step sets one move, every location departs
    once, each move starts where the previous one ended, the first move
    leaves the start, and (for close_tour) the last move returns to it.
    """
    n = inst.n
    bits = np.asarray(assignment).reshape(-1)
    if bits.shape != (n ** 3,):
        raise ValueError(f"assignment must have length {n ** 3}, got {bits.size}")
    set_vars = np.flatnonzero(bits)
    per_step: list[tuple[int, int] | None] = [None] * n
    for v in set_vars:
        v = int(v)
        t = v % n
        j = (v // n) % n
        i = v // (n * n)
        if per_step[t] is not None:
            raise DecodeError(f"step {t} sets more than one move")
        per_step[t] = (i, j)
    for t, move in enumerate(per_step):
        if move is None:
            raise DecodeError(f"step {t} sets no move")
    moves = [m for m in per_step if m is not None]
    departures = [i for i, _ in moves]
    if len(set(departures)) != n:
        dupe = next(i for i in departures if departures.count(i) > 1)
        raise DecodeError(f"location {dupe} departs more than once")
    if departures[0] != inst.start:
        raise DecodeError(
            f"tour must start at location {inst.start}, first move departs {departures[0]}"
        )
    for t in range(n - 1):
        if moves[t][1] != moves[t + 1][0]:
            raise DecodeError(
                f"continuity broken at step {t}: arrival {moves[t][1]} "
                f"but step {t + 1} departs {moves[t + 1][0]}"
            )
    if close_tour:
        if moves[-1][1] != inst.start:
            raise DecodeError(
                f"closed tour must return to {inst.start}, last move arrives {moves[-1][1]}"
            )
        return Tour(order=tuple(departures), closed=True)
    return Tour(order=tuple(departures), closed=False)


def encode_tour(tour: Tour, n: int) -> np.ndarray:
    """One-hot assignment of a tour over all n locations (inverse of
    decode_tour for closed tours). Open tours still occupy all n steps;
    the final move returns to the start so the encoding stays one-hot."""
    if len(tour.order) != n:
        raise ValueError(f"tour visits {len(tour.order)} of {n} locations")
    bits = np.zeros(n ** 3, dtype=np.uint8)
    for t in range(n - 1):
        i, j = tour.order[t], tour.order[t + 1]
        bits[(i * n + j) * n + t] = 1
    bits[(tour.order[-1] * n + tour.order[0]) * n + (n - 1)] = 1
    return bits


def travel_cost(tour: Tour, inst: ProblemInstance) -> float:
    """Summed cost of the tour's moves."""
    return float(sum(inst.cost[i, j] for i, j in tour.moves))


@dataclass(frozen=True)
class BatteryTrace:
    """Battery levels around every move, never clamped.

    Index t covers the t-th move: the level when the step begins, the
    level after the step's charge event, and the level after paying the
    move's travel cost. Which of the two events comes first in time
    depends on the charging convention; each flag is tied to its own
    recorded level (charge above capacity, post-move below empty,
    post-move above capacity) either way.
    """

    before_charge: np.ndarray
    after_charge: np.ndarray
    after_move: np.ndarray
    charge_overflow: np.ndarray
    move_underflow: np.ndarray
    move_overflow: np.ndarray
    closed: bool

    def __post_init__(self):
        for name in ("before_charge", "after_charge", "after_move"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("charge_overflow", "move_underflow", "move_overflow"):
            arr = np.asarray(getattr(self, name), dtype=bool)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_steps(self) -> int:
        return len(self.before_charge)

    def violation_at(self, t: int) -> bool:
        return bool(
            self.charge_overflow[t] or self.move_underflow[t] or self.move_overflow[t]
        )


def simulate_battery(inst: ProblemInstance, tour: Tour, stations,
                     charge_at_arrival: bool = False) -> BatteryTrace:
    """Replay the battery along a tour as separate charge and move events.

    By default the vehicle tops up when it departs a station location; with
    charge_at_arrival it pays the move first and charges on arrival
    instead. Levels are recorded as-is, without clamping, so a transient
    above capacity or below empty is visible in the trace even when a later
    event moves the level back inside the envelope.
    """
    flags = _station_flags(inst, stations)
    bat = inst.battery
    moves = tour.moves
    k = len(moves)
    before = np.empty(k)
    after_charge = np.empty(k)
    after_move = np.empty(k)
    q = bat.q_init
    for t, (i, j) in enumerate(moves):
        before[t] = q
        if not charge_at_arrival:
            if flags[i]:
                q += bat.q_charge
            after_charge[t] = q
            q -= inst.cost[i, j]
            after_move[t] = q
        else:
            q -= inst.cost[i, j]
            after_move[t] = q
            if flags[j]:
                q += bat.q_charge
            after_charge[t] = q
    # each flag is defined by its recorded level alone, so a transient the
    # other event repairs within the same step still registers
    return BatteryTrace(before, after_charge, after_move,
                        charge_overflow=after_charge > bat.q_max,
                        move_underflow=after_move < 0.0,
                        move_overflow=after_move > bat.q_max,
                        closed=tour.closed)


def constraint_penalty(trace: BatteryTrace, y_penalty: float,
                       check_final: bool = False) -> float:
    """Penalty for battery-envelope violations along a trace.

    Each move with at least one violation costs y_penalty exactly once,
    however many of its checks fail. The closing move of a closed tour is
    exempt unless check_final is set; every move of an open tour is always
    checked.
    """
    checked = trace.n_steps
    if trace.closed and not check_final:
        checked -= 1
    b = 0.0
    for t in range(checked):
        if trace.violation_at(t):
            b += y_penalty
    return b


@dataclass(frozen=True)
class EvalParams:
    """Scoring knobs threaded through evaluate_config."""

    y_penalty: float = 10.0
    close_tour: bool = True
    check_final: bool = False
    charge_at_arrival: bool = False

    def __post_init__(self):
        if self.y_penalty < 0.0:
            raise ValueError("y_penalty must be non-negative")


@dataclass(frozen=True)
class Evaluation:
    """Outcome of scoring one station configuration.

    y = a + b, where a is the tour's travel cost and b the battery
    penalty; feasible means b == 0. When no restart of the annealer
    produced a decodable assignment, tour is None and the score falls back
    to a sentinel of one full penalty per step.
    """

    tour: Tour | None
    a: float
    b: float
    y: float
    feasible: bool


def evaluate_config(inst: ProblemInstance, config: StationConfig,
                    weights: PenaltyWeights | None = None,
                    schedule: SaSchedule | None = None,
                    params: EvalParams | None = None) -> Evaluation:
    """Anneal the routing model for one station layout and score the result.

    Restarts are tried in order of increasing energy until one decodes; if
    none does, the sentinel evaluation (a=0, b=n*y_penalty, infeasible) is
    returned.
    """
    if params is None:
        params = EvalParams()
    if weights is None:
        weights = default_penalty_weights(inst)
    result = solve_route_sa(inst, config.as_array(), weights, schedule,
                            close_tour=params.close_tour)
    ranked = sorted(
        range(len(result.per_restart_energies)),
        key=lambda r: (result.per_restart_energies[r], r),
    )
    for r in ranked:
        try:
            tour = decode_tour(result.per_restart_bits[r], inst,
                               close_tour=params.close_tour)
        except DecodeError:
            continue
        a = travel_cost(tour, inst)
        trace = simulate_battery(inst, tour, config,
                                 charge_at_arrival=params.charge_at_arrival)
        b = constraint_penalty(trace, params.y_penalty, params.check_final)
        return Evaluation(tour=tour, a=a, b=b, y=a + b, feasible=(b == 0.0))
    b = inst.n * params.y_penalty
    return Evaluation(tour=None, a=0.0, b=b, y=b, feasible=False)
