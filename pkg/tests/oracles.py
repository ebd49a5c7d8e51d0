"""Independent reference implementations used to check the library.

Everything in this module is written straight from the definitions, with
plain loops and no shared code with the package under test. These are the
fixed points the test suite trusts: slow, obvious, and easy to audit.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


# ---------------------------------------------------------------------------
# Quadratic binary models


def qubo_energy_naive(constant, linear, quadratic, bits):
    """Energy of a binary assignment, computed term by term.

    linear: {var: coeff}, quadratic: {(lo, hi): coeff} with lo < hi.
    """
    e = float(constant)
    for v, c in linear.items():
        e += c * bits[v]
    for (u, v), c in quadratic.items():
        assert u < v
        e += c * bits[u] * bits[v]
    return e


def enumerate_qubo_min(constant, linear, quadratic, n_vars):
    """Exact minimum by full enumeration of all 2**n_vars assignments.

    Ties resolved toward the assignment whose bit vector, read as an
    integer with variable 0 in the least significant position, is lowest.
    Returns (energy, bits-as-tuple).
    """
    assert n_vars <= 22, "oracle enumeration kept deliberately small"
    best_e = math.inf
    best_bits = None
    for code in range(2 ** n_vars):
        bits = [(code >> v) & 1 for v in range(n_vars)]
        e = qubo_energy_naive(constant, linear, quadratic, bits)
        if e < best_e:
            best_e = e
            best_bits = tuple(bits)
    return best_e, best_bits


# ---------------------------------------------------------------------------
# One-hot route encoding: x[i, j, t] means "travel from i to j at step t",
# flattened as i * n * n + j * n + t. Steps are 0-based here; a tour of n
# locations occupies steps 0 .. n-1 (the step n-1 move closes the loop).


def bits_from_order(order, n, closed=True):
    """One-hot assignment for a visiting order (first entry = start)."""
    assert sorted(order) == list(range(n))
    bits = [0] * (n ** 3)
    for t in range(n - 1):
        i, j = order[t], order[t + 1]
        bits[i * n * n + j * n + t] = 1
    if closed:
        i, j = order[-1], order[0]
        bits[i * n * n + j * n + (n - 1)] = 1
    return bits


def route_penalty_groups(bits, n, start, close_tour):
    """The four constraint residuals of the one-hot encoding, from scratch.

    Returns (visit_once, continuity, start_fix, closure) where each entry is
    the unweighted sum of squared residuals of that constraint family.
    """
    # plain ints: unsigned numpy scalars would wrap on the (count - 1) terms
    x = lambda i, j, t: int(bits[i * n * n + j * n + t])
    visit_once = 0.0
    for i in range(n):
        departures = sum(x(i, j, t) for j in range(n) for t in range(n))
        visit_once += (departures - 1) ** 2
    continuity = 0.0
    for t in range(n - 1):
        for j in range(n):
            arrivals = sum(x(i, j, t) for i in range(n))
            departs_next = sum(x(j, k, t + 1) for k in range(n))
            continuity += (arrivals - departs_next) ** 2
    start_fix = 0.0
    for i in range(n):
        if i == start:
            continue
        start_fix += sum(x(i, j, 0) for j in range(n)) ** 2
    closure = 0.0
    if close_tour:
        for j in range(n):
            if j == start:
                continue
            closure += sum(x(i, j, n - 1) for i in range(n)) ** 2
    return visit_once, continuity, start_fix, closure


def tour_cost_oracle(order, cost, closed=True):
    c = 0.0
    for t in range(len(order) - 1):
        c += cost[order[t]][order[t + 1]]
    if closed:
        c += cost[order[-1]][order[0]]
    return c


def all_orders(n, start):
    """Every visiting order of n locations beginning at `start`."""
    rest = [i for i in range(n) if i != start]
    for perm in itertools.permutations(rest):
        yield (start,) + perm


# ---------------------------------------------------------------------------
# Battery bookkeeping


def battery_series_from_bits(bits, n, drain):
    """Charge-level deviations under the aggregate (net per step) dynamics.

    drain[i][j] is the net charge removed by taking move (i, j): travel cost
    minus recharge picked up at i. The level before step t is the initial
    level minus the summed drain of all earlier steps; any set bit counts,
    whether or not the assignment is a sane tour. Returns the list of levels
    q_1 .. q_n (q_1 is the initial level).
    """
    x = lambda i, j, t: bits[i * n * n + j * n + t]
    levels = []
    spent = 0.0
    for t in range(n):
        levels.append(-spent)  # offset from the initial level
        for i in range(n):
            for j in range(n):
                if x(i, j, t):
                    spent += drain[i][j]
    return levels


def battery_quadratic_oracle(bits, n, drain, q_init, q_standard):
    """Sum over steps of (level - q_standard)^2 under aggregate dynamics."""
    total = 0.0
    for rel in battery_series_from_bits(bits, n, drain):
        total += (q_init + rel - q_standard) ** 2
    return total


def split_walk(order, closed, cost, is_station, q_init, q_charge, q_max):
    """Split-event battery walk along a tour, one record per move.

    At each move the vehicle charges at the departure location first (if it
    hosts a station), then pays the travel cost. Levels are never clamped.
    Returns a list of dicts with the three levels and three violation flags.
    """
    moves = list(zip(order, order[1:]))
    if closed:
        moves.append((order[-1], order[0]))
    q = q_init
    out = []
    for i, j in moves:
        rec = {"before": q}
        if is_station[i]:
            q += q_charge
        rec["after_charge"] = q
        rec["charge_overflow"] = q > q_max
        q -= cost[i][j]
        rec["after_move"] = q
        rec["move_underflow"] = q < 0.0
        rec["move_overflow"] = q > q_max
        out.append(rec)
    return out


def split_penalty(records, y_penalty, check_final=False):
    """Per-step penalty: one hit per violating move, capped at one even when
    several checks fail at the same move. The final move of a closed tour is
    exempt unless check_final is set."""
    checked = records if check_final else records[:-1]
    b = 0.0
    for rec in checked:
        if rec["charge_overflow"] or rec["move_underflow"] or rec["move_overflow"]:
            b += y_penalty
    return b


def aggregate_checker(order, closed, cost, is_station, q_init, q_charge, q_max):
    """End-of-step feasibility check that nets each move with the recharge
    available around it, mimicking bookkeeping that treats charging and
    consumption as simultaneous. Returns the number of steps whose net level
    leaves [0, q_max]. Blind to transients inside a step by construction.
    The checked range mirrors split_penalty's default: all but the final move.
    """
    moves = list(zip(order, order[1:]))
    if closed:
        moves.append((order[-1], order[0]))
    q = q_init
    violations = 0
    for i, j in moves[:-1]:
        q = q - cost[i][j] + (q_charge if is_station[j] else 0.0)
        if q < 0.0 or q > q_max:
            violations += 1
    return violations


def best_tour_soft(cost, drain_station, q_init, q_standard, lam4, n, start):
    """Minimum over closed tours of travel cost + lam4 * battery deviation.

    drain_station[i][j] must already account for recharging at i. Returns
    (best_value, best_order).
    """
    best_v, best_o = math.inf, None
    for order in all_orders(n, start):
        bits = bits_from_order(order, n, closed=True)
        dev = battery_quadratic_oracle(bits, n, drain_station, q_init, q_standard)
        v = tour_cost_oracle(order, cost, closed=True) + lam4 * dev
        if v < best_v:
            best_v, best_o = v, order
    return best_v, best_o


def best_tour_y(cost, is_station, q, n, start, y_penalty, check_final=False):
    """Minimum over closed tours of cost + split-event penalty.

    q = (q_init, q_charge, q_max). Returns (best_y, best_order).
    """
    q_init, q_charge, q_max = q
    best_y, best_o = math.inf, None
    for order in all_orders(n, start):
        recs = split_walk(order, True, cost, is_station, q_init, q_charge, q_max)
        y = tour_cost_oracle(order, cost, True) + split_penalty(recs, y_penalty, check_final)
        if y < best_y:
            best_y, best_o = y, order
    return best_y, best_o


# ---------------------------------------------------------------------------
# Surrogate features


def features_oracle(s):
    """[1, s_i ..., s_i * s_j for i < j in lexicographic order]."""
    s = list(s)
    feats = [1.0] + [float(v) for v in s]
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            feats.append(float(s[i] * s[j]))
    return feats


def lstsq_coeffs(configs, ys):
    """Ordinary least squares on the quadratic feature expansion."""
    X = np.array([features_oracle(s) for s in configs], dtype=float)
    y = np.asarray(ys, dtype=float)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    return coef
