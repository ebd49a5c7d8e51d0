"""Quadratic binary models for the routing problem.

The route is encoded one-hot: variable x[i, j, t] = 1 means "travel from
location i to location j at step t", flattened to index i*n*n + j*n + t.
A model is a constant plus sparse linear and pairwise coefficients over
those binary variables. Assignments are flat 0/1 vectors of length n**3
(any integer array-like works).

Three builders are exposed. build_tsp_qubo encodes travel cost plus the
tour constraints as weighted squared penalties. build_battery_qubo encodes
the summed squared deviation of the battery level from its preferred value,
expanded in closed form. build_total_qubo combines the two.
"""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import IO, Union

import numpy as np

from .instance import ProblemInstance

__all__ = [
    "QuboModel",
    "PenaltyWeights",
    "default_penalty_weights",
    "flatten",
    "unflatten",
    "build_tsp_qubo",
    "build_battery_qubo",
    "build_total_qubo",
    "energy",
]


def flatten(i: int, j: int, t: int, n: int) -> int:
    """Variable index of the move (i -> j at step t) for an n-location model."""
    if not (0 <= i < n and 0 <= j < n and 0 <= t < n):
        raise ValueError(f"move ({i}, {j}, {t}) out of range for n={n}")
    return (i * n + j) * n + t


def unflatten(v: int, n: int) -> tuple[int, int, int]:
    """Inverse of flatten."""
    if not (0 <= v < n ** 3):
        raise ValueError(f"variable {v} out of range for n={n}")
    v, t = divmod(v, n)
    i, j = divmod(v, n)
    return i, j, t


class _SortedIntMap(Mapping):
    """Read-only {int: float} backed by a sorted index array."""

    __slots__ = ("_idx", "_val")

    def __init__(self, idx: np.ndarray, val: np.ndarray):
        self._idx = idx
        self._val = val

    def __getitem__(self, key):
        pos = np.searchsorted(self._idx, key)
        if pos < len(self._idx) and self._idx[pos] == key:
            return float(self._val[pos])
        raise KeyError(key)

    def __iter__(self):
        return (int(v) for v in self._idx)

    def __len__(self):
        return len(self._idx)


class _SortedPairMap(Mapping):
    """Read-only {(lo, hi): float} backed by sorted composite keys."""

    __slots__ = ("_n", "_key", "_lo", "_hi", "_val")

    def __init__(self, n_vars: int, lo: np.ndarray, hi: np.ndarray, val: np.ndarray):
        self._n = n_vars
        self._key = lo.astype(np.int64) * n_vars + hi
        self._lo = lo
        self._hi = hi
        self._val = val

    def __getitem__(self, key):
        u, v = key
        pos = np.searchsorted(self._key, int(u) * self._n + int(v))
        if pos < len(self._key) and self._key[pos] == int(u) * self._n + int(v):
            return float(self._val[pos])
        raise KeyError(key)

    def __iter__(self):
        return ((int(u), int(v)) for u, v in zip(self._lo, self._hi))

    def __len__(self):
        return len(self._lo)


class QuboModel:
    """Constant + linear + pairwise coefficients over binary variables.

    Coefficients live in sorted parallel arrays so that million-term models
    stay compact; the `linear` and `quadratic` attributes expose them as
    ordinary read-only mappings ({var: coeff} and {(lo, hi): coeff} with
    lo < hi). Exactly-zero coefficients are never stored.
    """

    __slots__ = ("n_vars", "constant", "_lin_idx", "_lin_val", "_q_lo", "_q_hi", "_q_val")

    def __init__(self, n_vars, constant, _lin_idx, _lin_val, _q_lo, _q_hi, _q_val):
        self.n_vars = int(n_vars)
        self.constant = float(constant)
        self._lin_idx = _lin_idx
        self._lin_val = _lin_val
        self._q_lo = _q_lo
        self._q_hi = _q_hi
        self._q_val = _q_val

    @classmethod
    def from_dicts(cls, n_vars: int, constant: float = 0.0,
                   linear: Mapping | None = None,
                   quadratic: Mapping | None = None) -> "QuboModel":
        if n_vars < 0:
            raise ValueError("n_vars must be non-negative")
        lin_dense = np.zeros(n_vars, dtype=np.float64)
        for v, c in (linear or {}).items():
            if not (0 <= v < n_vars):
                raise ValueError(f"linear index {v} out of range")
            lin_dense[v] += c
        keys, vals = [], []
        for (u, v), c in (quadratic or {}).items():
            if not (0 <= u < n_vars and 0 <= v < n_vars):
                raise ValueError(f"quadratic pair ({u}, {v}) out of range")
            if u == v:
                raise ValueError(f"quadratic key ({u}, {v}) must name two distinct variables")
            lo, hi = (u, v) if u < v else (v, u)
            keys.append(lo * n_vars + hi)
            vals.append(c)
        chunk_k = [np.asarray(keys, dtype=np.int64)] if keys else []
        chunk_v = [np.asarray(vals, dtype=np.float64)] if vals else []
        return _assemble(n_vars, constant, lin_dense, chunk_k, chunk_v)

    @property
    def linear(self) -> Mapping:
        return _SortedIntMap(self._lin_idx, self._lin_val)

    @property
    def quadratic(self) -> Mapping:
        return _SortedPairMap(self.n_vars, self._q_lo, self._q_hi, self._q_val)

    @property
    def n_linear_terms(self) -> int:
        return len(self._lin_idx)

    @property
    def n_quadratic_terms(self) -> int:
        return len(self._q_lo)

    def energy(self, bits) -> float:
        """Evaluate the model on a 0/1 assignment of length n_vars."""
        b = np.asarray(bits)
        if b.shape != (self.n_vars,):
            raise ValueError(
                f"assignment must have length {self.n_vars}, got shape {b.shape}"
            )
        b = b.astype(np.float64, copy=False)
        e = self.constant
        if len(self._lin_idx):
            e += float(self._lin_val @ b[self._lin_idx])
        if len(self._q_lo):
            e += float(self._q_val @ (b[self._q_lo] * b[self._q_hi]))
        return e

    def mean_abs_coefficient(self) -> float:
        """Mean magnitude of the stored (nonzero) coefficients."""
        total = 0.0
        count = self.n_linear_terms + self.n_quadratic_terms
        if count == 0:
            return 0.0
        if len(self._lin_val):
            total += float(np.abs(self._lin_val).sum())
        if len(self._q_val):
            total += float(np.abs(self._q_val).sum())
        return total / count

    def write_coefficients(self, sink: Union[str, IO[str]]) -> None:
        """Dump as text: a header line, then one `u v coeff` line per term.

        Linear terms repeat the variable (u == v); quadratic lines have
        u < v. Lines are sorted, so equal models dump to equal bytes.
        """
        lines = [f"# qubo n_vars={self.n_vars} constant={float(self.constant)!r}\n"]
        for v, c in zip(self._lin_idx, self._lin_val):
            lines.append(f"{int(v)} {int(v)} {float(c)!r}\n")
        for u, v, c in zip(self._q_lo, self._q_hi, self._q_val):
            lines.append(f"{int(u)} {int(v)} {float(c)!r}\n")
        text = "".join(lines)
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(text)

    def __repr__(self):
        return (f"QuboModel(n_vars={self.n_vars}, linear_terms={self.n_linear_terms}, "
                f"quadratic_terms={self.n_quadratic_terms})")


def energy(model: QuboModel, bits) -> float:
    """Module-level alias for QuboModel.energy."""
    return model.energy(bits)


def _assemble(n_vars, constant, lin_dense, key_chunks, val_chunks) -> QuboModel:
    """Canonicalize accumulated terms: sort, merge duplicates, drop zeros."""
    if key_chunks:
        keys = np.concatenate(key_chunks)
        vals = np.concatenate(val_chunks)
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        vals = vals[order]
        if len(keys):
            starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
            sums = np.add.reduceat(vals, starts)
            ukeys = keys[starts]
            keep = sums != 0.0
            ukeys, sums = ukeys[keep], sums[keep]
        else:
            ukeys = keys
            sums = vals
        q_lo = (ukeys // n_vars).astype(np.int32)
        q_hi = (ukeys % n_vars).astype(np.int32)
        q_val = sums
    else:
        q_lo = np.empty(0, dtype=np.int32)
        q_hi = np.empty(0, dtype=np.int32)
        q_val = np.empty(0, dtype=np.float64)
    lin_idx = np.flatnonzero(lin_dense != 0.0).astype(np.int32)
    lin_val = lin_dense[lin_idx].copy()
    for arr in (lin_idx, lin_val, q_lo, q_hi, q_val):
        arr.setflags(write=False)
    return QuboModel(n_vars, constant, lin_idx, lin_val, q_lo, q_hi, q_val)


@dataclass(frozen=True)
class PenaltyWeights:
    """Weights of the four penalty families.

    lambda1 multiplies the leave-each-location-once constraint, lambda2 the
    step-to-step continuity constraint, lambda3 the fixed-start (and, when
    enabled, the return-to-start) constraint, lambda4 the soft battery
    deviation term.
    """

    lambda1: float
    lambda2: float
    lambda3: float
    lambda4: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.lambda4 < 0.0:
            raise ValueError("lambda4 must be non-negative")


def default_penalty_weights(inst: ProblemInstance) -> PenaltyWeights:
    """Constraint weights scaled to dominate any achievable travel cost.

    The three hard-constraint weights are 2 * n * max|C_ij| (floored at 1.0
    for degenerate all-zero cost matrices). The battery weight normalizes
    the worst-case deviation sum to 1/2 so the soft term can bias the route
    but never pay for a constraint violation.
    """
    n = inst.n
    off = inst.cost[~np.eye(n, dtype=bool)]
    scale = float(np.abs(off).max()) if off.size else 0.0
    lam = max(2.0 * n * scale, 1.0)
    denom = n * inst.battery.q_max ** 2
    lam4 = 0.5 / denom if denom > 0.0 else 0.0
    return PenaltyWeights(lambda1=lam, lambda2=lam, lambda3=lam, lambda4=lam4)


# Self-moves (i -> i) are syntactically representable but never part of a
# tour; they get a large positive linear coefficient instead of being
# dropped, keeping the variable space a full cube.
_SELF_MOVE_FACTOR = 10.0


def _squared_group(n_vars, lin_dense, key_chunks, val_chunks,
                   var_ids, signs, target, weight) -> float:
    """Accumulate weight * (sum_i signs_i * x_i - target)^2; returns the
    constant part. Uses x^2 = x to fold squares into linear terms."""
    ids = np.asarray(var_ids, dtype=np.int64)
    sg = np.asarray(signs, dtype=np.float64)
    # linear: a_i^2 - 2 * target * a_i, all times weight
    np.add.at(lin_dense, ids, weight * (sg * sg - 2.0 * target * sg))
    if len(ids) > 1:
        iu, ju = np.triu_indices(len(ids), k=1)
        u = ids[iu]
        v = ids[ju]
        lo = np.minimum(u, v)
        hi = np.maximum(u, v)
        key_chunks.append(lo * n_vars + hi)
        val_chunks.append(2.0 * weight * sg[iu] * sg[ju])
    return weight * target * target


def build_tsp_qubo(inst: ProblemInstance, weights: PenaltyWeights | None = None,
                   close_tour: bool = True) -> QuboModel:
    """Travel cost plus tour-validity penalties over the one-hot encoding.

    The model contains, for an n-location instance:
      * the travel cost of every set move, as linear terms;
      * lambda1 * (departures from i - 1)^2 for every location i;
      * lambda2 * (arrivals at j in step t - departures from j in step
        t+1)^2 for every j and every t before the last;
      * lambda3 * (departures from i at step 0)^2 for every i != start;
      * when close_tour, lambda3 * (arrivals at j in the last step)^2 for
        every j != start, which forces the final move back to the start;
      * a large positive linear term on every self-move variable.
    """
    if weights is None:
        weights = default_penalty_weights(inst)
    n = inst.n
    nv = n ** 3
    constant = 0.0
    lin = np.zeros(nv, dtype=np.float64)
    keys: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    ii, jj, tt = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    all_ids = ((ii * n + jj) * n + tt).ravel()
    np.add.at(lin, all_ids, np.broadcast_to(inst.cost[:, :, None], (n, n, n)).ravel())

    for i in range(n):
        for t in range(n):
            lin[flatten(i, i, t, n)] += _SELF_MOVE_FACTOR * weights.lambda1

    ones = np.ones(n * n)
    for i in range(n):
        ids = ((i * n + np.arange(n)[:, None]) * n + np.arange(n)[None, :]).ravel()
        constant += _squared_group(nv, lin, keys, vals, ids, ones, 1.0, weights.lambda1)

    arrive = np.arange(n)  # helper index range
    sign_pair = np.concatenate([np.ones(n), -np.ones(n)])
    for t in range(n - 1):
        for j in range(n):
            ids_in = (arrive * n + j) * n + t          # x[i, j, t] over i
            ids_out = (j * n + arrive) * n + (t + 1)   # x[j, k, t+1] over k
            ids = np.concatenate([ids_in, ids_out])
            constant += _squared_group(nv, lin, keys, vals, ids, sign_pair, 0.0,
                                       weights.lambda2)

    ones_n = np.ones(n)
    for i in range(n):
        if i == inst.start:
            continue
        ids = (i * n + arrive) * n + 0
        constant += _squared_group(nv, lin, keys, vals, ids, ones_n, 0.0, weights.lambda3)

    if close_tour:
        for j in range(n):
            if j == inst.start:
                continue
            ids = (arrive * n + j) * n + (n - 1)
            constant += _squared_group(nv, lin, keys, vals, ids, ones_n, 0.0,
                                       weights.lambda3)

    return _assemble(nv, constant, lin, keys, vals)


def drain_matrix(inst: ProblemInstance, stations) -> np.ndarray:
    """Net battery drain of each move: travel cost minus the recharge
    collected at the departure location, for the given station placement.

    `stations` is a 0/1 vector aligned with inst.candidates.
    """
    s = np.asarray(stations)
    if s.shape != (inst.m,):
        raise ValueError(f"station vector must have length {inst.m}, got shape {s.shape}")
    if not np.isin(s, (0, 1)).all():
        raise ValueError("station vector entries must be 0 or 1")
    d = inst.cost.astype(np.float64).copy()
    for bit, loc in zip(s, inst.candidates):
        if bit:
            d[loc, :] -= inst.battery.q_charge
    return d


def build_battery_qubo(inst: ProblemInstance, stations) -> QuboModel:
    """Squared deviation of the battery level from its preferred value.

    The level before step t is the initial level minus the net drain of all
    earlier steps, so the term sum_t (level_t - q_standard)^2 expands
    exactly into a constant, linear coefficients, and pairwise products of
    move variables. Moves in the final step affect no later level and
    therefore carry no coefficient. The model is unweighted; the battery
    weight is applied when combining with the tour model.
    """
    n = inst.n
    nv = n ** 3
    d = drain_matrix(inst, stations)
    delta0 = inst.battery.q_init - inst.battery.q_standard

    constant = n * delta0 * delta0
    lin = np.zeros(nv, dtype=np.float64)
    keys: list[np.ndarray] = []
    vals: list[np.ndarray] = []

    pi, pj = np.nonzero(d)
    dv = d[pi, pj]
    base = (pi * n + pj) * n  # variable id at time 0 for each nonzero move
    p = len(dv)
    if p:
        for t in range(n - 1):
            w = float(n - 1 - t)
            # linear: -2 * delta0 * w * d  plus the folded square w * d^2
            np.add.at(lin, base + t, w * dv * (dv - 2.0 * delta0))
        same_u, same_v = np.triu_indices(p, k=1)
        for tm in range(n - 1):
            w = float(n - 1 - tm)
            if p > 1:
                a = base[same_u] + tm
                b = base[same_v] + tm
                keys.append(np.minimum(a, b) * np.int64(nv) + np.maximum(a, b))
                vals.append(2.0 * w * dv[same_u] * dv[same_v])
            for tu in range(tm):
                a = (base + tu)[:, None]
                b = (base + tm)[None, :]
                lo = np.minimum(a, b).ravel()
                hi = np.maximum(a, b).ravel()
                keys.append(lo * np.int64(nv) + hi)
                vals.append((2.0 * w * dv[:, None] * dv[None, :]).ravel())

    return _assemble(nv, constant, lin, keys, vals)


def build_total_qubo(inst: ProblemInstance, stations,
                     weights: PenaltyWeights | None = None,
                     close_tour: bool = True) -> QuboModel:
    """Tour model plus lambda4 times the battery model, merged coefficient
    by coefficient."""
    if weights is None:
        weights = default_penalty_weights(inst)
    tsp = build_tsp_qubo(inst, weights, close_tour=close_tour)
    bat = build_battery_qubo(inst, stations)
    lam4 = weights.lambda4

    nv = tsp.n_vars
    lin = np.zeros(nv, dtype=np.float64)
    lin[tsp._lin_idx] += tsp._lin_val
    lin[bat._lin_idx] += lam4 * bat._lin_val
    keys = []
    vals = []
    if len(tsp._q_lo):
        keys.append(tsp._q_lo.astype(np.int64) * nv + tsp._q_hi)
        vals.append(tsp._q_val.copy())
    if len(bat._q_lo):
        keys.append(bat._q_lo.astype(np.int64) * nv + bat._q_hi)
        vals.append(lam4 * bat._q_val)
    constant = tsp.constant + lam4 * bat.constant
    return _assemble(nv, constant, lin, keys, vals)
