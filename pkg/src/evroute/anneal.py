"""Minimizers for QuboModel instances.

solve_sa runs restarted single-bit-flip simulated annealing with an
inverse temperature that interpolates geometrically between beta_initial
and beta_final, one random visiting permutation per sweep, and a short
zero-temperature descent at the end of every restart. solve_exhaustive
walks every assignment of a small model in Gray-code order and is the
exact reference the annealer is tested against.

Hot loops are compiled with numba. Randomness comes from an explicit
splitmix64 stream seeded per restart, so a given schedule always produces
the same result on any machine.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .qubo import QuboModel

__all__ = ["SaSchedule", "SolveResult", "solve_sa", "solve_exhaustive"]

# how close the incrementally maintained energy must stay to a from-scratch
# recomputation before we call the bookkeeping broken
_ENERGY_DRIFT_TOL = 1e-6


@dataclass(frozen=True)
class SaSchedule:
    """Annealing schedule.

    beta_final = None means "pick 5 / (mean absolute nonzero coefficient)
    of the model being solved", which lands the end of the anneal deep in
    the rejection regime for typical penalty-dominated models. quench_sweeps
    caps the greedy descent appended after the last sweep.
    """

    sweeps: int = 2000
    beta_initial: float = 0.01
    beta_final: float | None = None
    restarts: int = 4
    seed: int = 0
    quench_sweeps: int = 64

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("sweeps must be at least 1")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if not self.beta_initial > 0.0:
            raise ValueError("beta_initial must be positive")
        if self.beta_final is not None and self.beta_final < self.beta_initial:
            raise ValueError("beta_final must be at least beta_initial")
        if self.quench_sweeps < 0:
            raise ValueError("quench_sweeps must be non-negative")

    def resolved_beta_final(self, scale: float) -> float:
        """Concrete final beta for a model whose mean |coefficient| is scale."""
        if self.beta_final is not None:
            return self.beta_final
        if scale <= 0.0:
            return max(self.beta_initial, 1.0)
        return max(self.beta_initial, 5.0 / scale)


@dataclass(frozen=True)
class SolveResult:
    """Best assignment found plus the best energy of every restart."""

    best_bits: np.ndarray
    best_energy: float
    per_restart_energies: tuple[float, ...]
    per_restart_bits: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        bits = np.asarray(self.best_bits, dtype=np.uint8)
        bits.setflags(write=False)
        object.__setattr__(self, "best_bits", bits)


def restart_seeds(seed: int, restarts: int) -> np.ndarray:
    """Independent 64-bit seeds for each restart, derived reproducibly."""
    return np.random.SeedSequence(seed).generate_state(restarts, dtype=np.uint64)


# ---------------------------------------------------------------------------
# numba kernels

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, nogil=True, inline="always")
def _next_u64(state):
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK
    z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _uniform(state):
    state, z = _next_u64(state)
    return state, (z >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True)
def _shuffle(order, state):
    for i in range(len(order) - 1, 0, -1):
        state, u = _uniform(state)
        j = int(u * (i + 1))
        tmp = order[i]
        order[i] = order[j]
        order[j] = tmp
    return state


@njit(cache=True, nogil=True)
def _scratch_energy(x, lin, indptr, nbr_idx, nbr_w):
    """Linear + quadratic energy of x, constants excluded."""
    e = 0.0
    n = len(x)
    for v in range(n):
        if x[v]:
            e += lin[v]
            for k in range(indptr[v], indptr[v + 1]):
                u = nbr_idx[k]
                if u > v and x[u]:
                    e += nbr_w[k]
    return e


@njit(cache=True, nogil=True)
def _sa_restart(lin, indptr, nbr_idx, nbr_w, sweeps, beta_i, beta_f,
                quench_cap, seed):
    """One annealing restart; returns (best_bits, best_energy, check_energy)."""
    n = len(lin)
    state = seed
    x = np.empty(n, np.uint8)
    for v in range(n):
        state, u = _uniform(state)
        x[v] = 1 if u < 0.5 else 0
    # field[v] = energy change of setting v from 0 to 1 given the rest of x
    field = lin.copy()
    for v in range(n):
        if x[v]:
            for k in range(indptr[v], indptr[v + 1]):
                field[nbr_idx[k]] += nbr_w[k]
    e = _scratch_energy(x, lin, indptr, nbr_idx, nbr_w)
    best_e = e
    best_x = x.copy()

    order = np.arange(n, dtype=np.int64)
    log_ratio = np.log(beta_f / beta_i)
    denom = sweeps - 1 if sweeps > 1 else 1
    for sweep in range(sweeps):
        beta = beta_i * np.exp(log_ratio * (sweep / denom))
        state = _shuffle(order, state)
        for p in range(n):
            v = order[p]
            sign = 1.0 - 2.0 * x[v]
            delta = sign * field[v]
            accept = delta <= 0.0
            if not accept:
                state, u = _uniform(state)
                accept = u < np.exp(-beta * delta)
            if accept:
                x[v] ^= np.uint8(1)
                e += delta
                step = sign
                for k in range(indptr[v], indptr[v + 1]):
                    field[nbr_idx[k]] += step * nbr_w[k]
                if e < best_e:
                    best_e = e
                    best_x[:] = x

    # zero-temperature polish: strictly improving flips only
    for _ in range(quench_cap):
        improved = False
        for v in range(n):
            sign = 1.0 - 2.0 * x[v]
            delta = sign * field[v]
            if delta < 0.0:
                x[v] ^= np.uint8(1)
                e += delta
                for k in range(indptr[v], indptr[v + 1]):
                    field[nbr_idx[k]] += sign * nbr_w[k]
                improved = True
        if e < best_e:
            best_e = e
            best_x[:] = x
        if not improved:
            break

    return best_x, best_e, _scratch_energy(best_x, lin, indptr, nbr_idx, nbr_w)


@njit(cache=True, nogil=True)
def _gray_kernel(lin, indptr, nbr_idx, nbr_w, n):
    """Visit all 2**n assignments via Gray code; track the minimum with ties
    resolved toward the lowest assignment-as-integer (bit 0 least
    significant).

    Energies are accumulated incrementally, so two assignments with exactly
    equal energy can reach the comparison a few ulps apart. Ties are
    therefore detected inside a window scaled well above that drift but far
    below any genuine energy gap.
    """
    x = np.zeros(n, np.uint8)
    field = lin.copy()
    e = 0.0
    best_e = 0.0
    best_code = np.uint64(0)
    code = np.uint64(0)
    total = np.uint64(1) << np.uint64(n)
    step = np.uint64(1)
    while step < total:
        # flipped bit = count of trailing zeros of step
        v = 0
        s = step
        while (s & np.uint64(1)) == np.uint64(0):
            s >>= np.uint64(1)
            v += 1
        sign = 1.0 - 2.0 * x[v]
        e += sign * field[v]
        x[v] ^= np.uint8(1)
        code ^= np.uint64(1) << np.uint64(v)
        for k in range(indptr[v], indptr[v + 1]):
            field[nbr_idx[k]] += sign * nbr_w[k]
        window = 1e-9 * (1.0 + abs(best_e))
        if e < best_e - window:
            best_e = e
            best_code = code
        elif e <= best_e + window:
            if e < best_e:
                best_e = e
            if code < best_code:
                best_code = code
        step += np.uint64(1)
    return best_code, best_e


# ---------------------------------------------------------------------------


def _adjacency(model: QuboModel):
    """Dense linear vector plus CSR neighbor lists of the quadratic terms."""
    n = model.n_vars
    lin = np.zeros(n, dtype=np.float64)
    lin[model._lin_idx] = model._lin_val
    lo = model._q_lo
    hi = model._q_hi
    w = model._q_val
    nodes = np.concatenate([lo, hi]).astype(np.int64)
    partners = np.concatenate([hi, lo]).astype(np.int64)
    weights = np.concatenate([w, w])
    order = np.argsort(nodes, kind="stable")
    nbr_idx = partners[order]
    nbr_w = weights[order]
    counts = np.bincount(nodes, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return lin, indptr, nbr_idx, nbr_w


def solve_sa(model: QuboModel, schedule: SaSchedule | None = None) -> SolveResult:
    """Restarted simulated annealing on an explicit model.

    Deterministic for a fixed schedule. The reported energies are always
    recomputed from scratch through model.energy, so
    result.best_energy == model.energy(result.best_bits) holds exactly.
    """
    if schedule is None:
        schedule = SaSchedule()
    if model.n_vars < 1:
        raise ValueError("model has no variables")
    lin, indptr, nbr_idx, nbr_w = _adjacency(model)
    beta_f = schedule.resolved_beta_final(model.mean_abs_coefficient())
    beta_i = min(schedule.beta_initial, beta_f)

    energies = []
    states = []
    for seed in restart_seeds(schedule.seed, schedule.restarts):
        bits, e_inc, e_chk = _sa_restart(
            lin, indptr, nbr_idx, nbr_w, schedule.sweeps, beta_i, beta_f,
            schedule.quench_sweeps, seed,
        )
        scale = 1.0 + abs(e_chk)
        assert abs(e_inc - e_chk) <= _ENERGY_DRIFT_TOL * scale, \
            "incremental energy bookkeeping drifted"
        bits.setflags(write=False)
        states.append(bits)
        energies.append(model.energy(bits))
    best = min(range(len(energies)), key=lambda r: (energies[r], r))
    return SolveResult(
        best_bits=states[best],
        best_energy=energies[best],
        per_restart_energies=tuple(energies),
        per_restart_bits=tuple(states),
    )


_EXHAUSTIVE_CAP = 27


def solve_exhaustive(model: QuboModel) -> SolveResult:
    """Exact minimum by full enumeration; refuses models above 27 variables.

    Ties go to the assignment whose bit vector, read as an integer with
    variable 0 least significant, is smallest.
    """
    n = model.n_vars
    if n > _EXHAUSTIVE_CAP:
        raise ValueError(
            f"exhaustive enumeration capped at {_EXHAUSTIVE_CAP} variables, got {n}"
        )
    if n == 0:
        empty = np.empty(0, dtype=np.uint8)
        return SolveResult(empty, model.constant, (model.constant,), (empty,))
    lin, indptr, nbr_idx, nbr_w = _adjacency(model)
    code, _ = _gray_kernel(lin, indptr, nbr_idx, nbr_w, n)
    bits = ((int(code) >> np.arange(n)) & 1).astype(np.uint8)
    bits.setflags(write=False)
    e = model.energy(bits)
    return SolveResult(bits, e, (e,), (bits,))
