"""Surrogate-guided search over station configurations.

The outer loop follows the Bayesian optimization of combinatorial
structures recipe (Baptista & Poloczek, 2018): regress observed scores on
a second-order feature expansion of the configuration bits, draw one
sample of the coefficient posterior (Thompson sampling), minimize that
sampled surrogate over all configurations, and evaluate the proposal with
the inner route solver. The default coefficient prior is the horseshoe,
sampled with the auxiliary-variable Gibbs scheme of Makalic & Schmidt
(2016); a conjugate Gaussian ridge prior is available as a cheaper, denser
alternative.

Scores may repeat: proposing an already-seen configuration triggers a
fresh (noisy) evaluation rather than a cache hit, which is what a noisy
objective calls for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .anneal import SaSchedule, solve_sa
from .evaluator import EvalParams, Evaluation, StationConfig, evaluate_config
from .instance import ProblemInstance
from .qubo import PenaltyWeights, QuboModel

__all__ = [
    "SampleSet",
    "SurrogateModel",
    "PriorConfig",
    "BocsParams",
    "IterationRecord",
    "SearchHistory",
    "feature_terms",
    "featurize",
    "fit_posterior_sample",
    "posterior_mean",
    "acquire",
    "run_bocs",
    "run_random_search",
]


def feature_terms(m: int) -> tuple[tuple[int, ...], ...]:
    """Meaning of each feature position: () is the intercept, (i,) the i-th
    bit, (i, j) the product of bits i < j, in lexicographic order."""
    terms: list[tuple[int, ...]] = [()]
    terms.extend((i,) for i in range(m))
    for i in range(m):
        for j in range(i + 1, m):
            terms.append((i, j))
    return tuple(terms)


def n_features(m: int) -> int:
    return 1 + m + m * (m - 1) // 2


def featurize(bits) -> np.ndarray:
    """Feature vector [1, s_i ..., s_i * s_j for i < j] of one configuration."""
    s = np.asarray(bits, dtype=np.float64).reshape(-1)
    m = len(s)
    iu, ju = np.triu_indices(m, k=1)
    return np.concatenate(([1.0], s, s[iu] * s[ju]))


@dataclass
class SampleSet:
    """Append-only record of evaluated configurations and their scores."""

    m: int
    configs: list[StationConfig] = field(default_factory=list)
    scores: list[float] = field(default_factory=list)

    def add(self, config: StationConfig, score: float) -> None:
        if len(config) != self.m:
            raise ValueError(f"configuration has {len(config)} bits, expected {self.m}")
        self.configs.append(config)
        self.scores.append(float(score))

    def __len__(self) -> int:
        return len(self.configs)

    def design_matrix(self) -> np.ndarray:
        return np.array([featurize(c.bits) for c in self.configs], dtype=np.float64)

    def score_vector(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=np.float64)


@dataclass(frozen=True)
class SurrogateModel:
    """One concrete quadratic scoring function over configuration bits."""

    m: int
    alpha: np.ndarray  # length n_features(m), ordered per feature_terms

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if alpha.shape != (n_features(self.m),):
            raise ValueError(
                f"alpha must have length {n_features(self.m)}, got {alpha.size}"
            )
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def feature_index(self) -> tuple[tuple[int, ...], ...]:
        return feature_terms(self.m)

    def predict(self, bits) -> float:
        return float(self.alpha @ featurize(bits))

    def to_matrix(self) -> tuple[np.ndarray, float]:
        """(A, c) with predict(s) == s @ A @ s + c: linear coefficients on
        the diagonal, each pair coefficient split across its two
        off-diagonal cells."""
        m = self.m
        A = np.zeros((m, m), dtype=np.float64)
        lin = self.alpha[1 : 1 + m]
        A[np.diag_indices(m)] = lin
        iu, ju = np.triu_indices(m, k=1)
        half = self.alpha[1 + m :] / 2.0
        A[iu, ju] = half
        A[ju, iu] = half
        return A, float(self.alpha[0])

    def to_qubo(self, extra_linear: float = 0.0) -> QuboModel:
        """The surrogate as an explicit model, optionally with a uniform
        per-bit linear addition (e.g. a station-count cost)."""
        m = self.m
        linear = {i: float(self.alpha[1 + i]) + extra_linear for i in range(m)}
        quad = {}
        pos = 1 + m
        for i in range(m):
            for j in range(i + 1, m):
                quad[(i, j)] = float(self.alpha[pos])
                pos += 1
        return QuboModel.from_dicts(m, constant=float(self.alpha[0]),
                                    linear=linear, quadratic=quad)


@dataclass(frozen=True)
class PriorConfig:
    """Coefficient prior for the surrogate fit.

    kind "horseshoe": global-local shrinkage, Gibbs-sampled; gibbs_steps
    updates are run and the last state is the Thompson draw. kind "ridge":
    conjugate Gaussian prior with precision ridge_delta on every
    non-intercept coefficient.
    """

    kind: str = "horseshoe"
    gibbs_steps: int = 300
    ridge_delta: float = 1e-4

    def __post_init__(self):
        if self.kind not in ("horseshoe", "ridge"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.gibbs_steps < 1:
            raise ValueError("gibbs_steps must be at least 1")
        if not self.ridge_delta > 0.0:
            raise ValueError("ridge_delta must be positive")


# variance clips keeping the Gibbs conditionals well-posed in float64
_VAR_FLOOR = 1e-12
_VAR_CEIL = 1e8


def _inv_gamma(rng, shape, rate):
    """Draw from the inverse-gamma with the given shape and rate."""
    return 1.0 / rng.gamma(shape, 1.0 / rate)


def _chol_solve_draw(A, rhs, sigma2, rng):
    """Mean A^-1 rhs plus one N(0, sigma2 * A^-1) draw, via Cholesky with
    escalating jitter for near-singular A."""
    p = A.shape[0]
    jitter = 0.0
    scale = float(np.mean(np.diag(A))) or 1.0
    for _ in range(8):
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(p))
            break
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10.0, 1e-12 * scale)
    else:
        raise np.linalg.LinAlgError("posterior covariance not decomposable")
    mean = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    z = rng.standard_normal(p)
    draw = mean + math.sqrt(sigma2) * np.linalg.solve(L.T, z)
    return mean, draw


def _ridge_design(data: SampleSet, delta: float):
    X = data.design_matrix()
    y = data.score_vector()
    p = X.shape[1]
    D = np.full(p, delta)
    D[0] = 1e-10  # leave the intercept effectively unpenalized
    A = X.T @ X + np.diag(D)
    return X, y, A


def posterior_mean(data: SampleSet, prior: PriorConfig | None = None,
                   seed: int = 0) -> np.ndarray:
    """Posterior mean of the surrogate coefficients.

    Closed form for the ridge prior; for the horseshoe the mean is
    estimated by averaging the second half of a Gibbs run.
    """
    if prior is None:
        prior = PriorConfig()
    if len(data) == 0:
        raise ValueError("cannot fit on an empty sample set")
    if prior.kind == "ridge":
        X, y, A = _ridge_design(data, prior.ridge_delta)
        return np.linalg.solve(A, X.T @ y)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    X = data.design_matrix()
    y = data.score_vector()
    keep = max(1, prior.gibbs_steps // 2)
    total = np.zeros(X.shape[1])
    state = _HsState(X[:, 1:], y)
    for step in range(prior.gibbs_steps):
        state.advance(rng)
        if step >= prior.gibbs_steps - keep:
            total[0] += state.b0
            total[1:] += state.beta
    return total / keep


class _HsState:
    """Gibbs sampler state for the horseshoe regression.

    Model: y = b0 + X beta + eps, eps ~ N(0, sigma2), beta_j ~
    N(0, lambda_j^2 tau^2 sigma2) with half-Cauchy lambda_j and tau, a flat
    prior on b0 and Jeffreys sigma2, using the inverse-gamma
    auxiliary-variable conditionals of Makalic & Schmidt (2016).
    """

    def __init__(self, X, y):
        self.X = X
        self.y = y
        p = X.shape[1]
        self.XtX = X.T @ X
        self.beta = np.zeros(p)
        self.b0 = float(np.mean(y))
        self.sigma2 = 1.0
        self.lambda2 = np.ones(p)
        self.tau2 = 1.0
        self.nu = np.ones(p)
        self.xi = 1.0

    def advance(self, rng):
        X, y = self.X, self.y
        n, p = X.shape
        prior_var = np.clip(self.tau2 * self.lambda2, _VAR_FLOOR, _VAR_CEIL)
        A = self.XtX + np.diag(1.0 / prior_var)
        yc = y - self.b0
        _, self.beta = _chol_solve_draw(A, X.T @ yc, self.sigma2, rng)
        resid_mean = float(np.mean(y - X @ self.beta))
        self.b0 = resid_mean + math.sqrt(self.sigma2 / n) * rng.standard_normal()
        resid = y - self.b0 - X @ self.beta
        rate = 0.5 * (resid @ resid + float(np.sum(self.beta ** 2 / prior_var)))
        self.sigma2 = float(np.clip(
            _inv_gamma(rng, 0.5 * (n + p), max(rate, _VAR_FLOOR)),
            _VAR_FLOOR, _VAR_CEIL))
        self.lambda2 = np.clip(
            _inv_gamma(rng, 1.0, 1.0 / self.nu + self.beta ** 2 / (2.0 * self.tau2 * self.sigma2)),
            _VAR_FLOOR, _VAR_CEIL)
        self.nu = _inv_gamma(rng, 1.0, 1.0 + 1.0 / self.lambda2)
        rate = 1.0 / self.xi + float(np.sum(self.beta ** 2 / self.lambda2)) / (2.0 * self.sigma2)
        self.tau2 = float(np.clip(
            _inv_gamma(rng, 0.5 * (p + 1), max(rate, _VAR_FLOOR)),
            _VAR_FLOOR, _VAR_CEIL))
        self.xi = float(_inv_gamma(rng, 1.0, 1.0 + 1.0 / self.tau2))


def fit_posterior_sample(data: SampleSet, prior: PriorConfig | None = None,
                         seed: int = 0) -> SurrogateModel:
    """One posterior draw of the surrogate (the Thompson sample).

    Deterministic for fixed data and seed. Degenerate designs (one sample,
    constant responses) still return a finite draw; the prior simply
    dominates.
    """
    if prior is None:
        prior = PriorConfig()
    if len(data) == 0:
        raise ValueError("cannot fit on an empty sample set")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    if prior.kind == "horseshoe":
        X = data.design_matrix()
        y = data.score_vector()
        state = _HsState(X[:, 1:], y)
        for _ in range(prior.gibbs_steps):
            state.advance(rng)
        alpha = np.concatenate(([state.b0], state.beta))
        return SurrogateModel(m=data.m, alpha=alpha)
    X, y, A = _ridge_design(data, prior.ridge_delta)
    n = len(y)
    mean = np.linalg.solve(A, X.T @ y)
    resid = y - X @ mean
    a_n = 1.0 + 0.5 * n
    b_n = 1e-6 + 0.5 * float(resid @ resid)
    sigma2 = float(np.clip(_inv_gamma(rng, a_n, max(b_n, _VAR_FLOOR)),
                           _VAR_FLOOR, _VAR_CEIL))
    _, draw = _chol_solve_draw(A, X.T @ y, sigma2, rng)
    return SurrogateModel(m=data.m, alpha=draw)


_EXHAUSTIVE_ACQ_CAP = 20
_ACQ_CHUNK = 1 << 16


def acquire(model: SurrogateModel, method: str = "exhaustive", seed: int = 0,
            station_cost: float = 0.0) -> StationConfig:
    """Configuration minimizing the surrogate (plus an optional per-station
    linear cost).

    "exhaustive" enumerates all 2^m configurations (m <= 20) and breaks
    ties toward the lowest configuration-as-integer, bit 0 least
    significant. "sa" anneals the surrogate as an explicit model instead
    and is the escape hatch for larger m.
    """
    m = model.m
    if method == "exhaustive":
        if m > _EXHAUSTIVE_ACQ_CAP:
            raise ValueError(
                f"exhaustive acquisition capped at {_EXHAUSTIVE_ACQ_CAP} bits, got {m};"
                " use method='sa'"
            )
        A, const = model.to_matrix()
        best_e = math.inf
        best_code = 0
        shifts = np.arange(m, dtype=np.uint32)
        for lo in range(0, 1 << m, _ACQ_CHUNK):
            hi = min(lo + _ACQ_CHUNK, 1 << m)
            codes = np.arange(lo, hi, dtype=np.uint32)
            B = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.float64)
            e = np.einsum("ki,ij,kj->k", B, A, B) + const
            if station_cost != 0.0:
                e += station_cost * B.sum(axis=1)
            k = int(np.argmin(e))  # first occurrence = lowest code in chunk
            if e[k] < best_e:
                best_e = float(e[k])
                best_code = lo + k
        bits = tuple(int((best_code >> i) & 1) for i in range(m))
        return StationConfig(bits)
    if method == "sa":
        qubo = model.to_qubo(extra_linear=station_cost)
        result = solve_sa(qubo, SaSchedule(sweeps=2000, restarts=4, seed=seed))
        return StationConfig(tuple(int(b) for b in result.best_bits))
    raise ValueError(f"unknown acquisition method {method!r}")


@dataclass(frozen=True)
class BocsParams:
    """Outer-loop settings.

    n_init configurations are drawn uniformly, then n_search rounds of
    fit / acquire / evaluate run (n_search = 0 stops after the random
    seeding, which is also how the uniform baseline measures a budget of
    zero). y_penalty, close_tour, check_final and charge_at_arrival are
    forwarded to the evaluator; station_cost_weight adds a per-station
    linear cost to the acquisition objective only.
    """

    n_search: int = 300
    n_init: int = 10
    y_penalty: float = 10.0
    prior: PriorConfig = field(default_factory=PriorConfig)
    acquisition: str = "exhaustive"
    seed: int = 0
    station_cost_weight: float = 0.0
    close_tour: bool = True
    check_final: bool = False
    charge_at_arrival: bool = False

    def __post_init__(self):
        if self.n_search < 0:
            raise ValueError("n_search must be non-negative")
        if self.n_init < 1:
            raise ValueError("n_init must be at least 1")
        if self.acquisition not in ("exhaustive", "sa"):
            raise ValueError(f"unknown acquisition method {self.acquisition!r}")

    def eval_params(self) -> EvalParams:
        return EvalParams(
            y_penalty=self.y_penalty,
            close_tour=self.close_tour,
            check_final=self.check_final,
            charge_at_arrival=self.charge_at_arrival,
        )


@dataclass(frozen=True)
class IterationRecord:
    index: int
    phase: str  # "init" or "search"
    config: StationConfig
    a: float
    b: float
    y: float
    best_so_far: float
    feasible: bool


@dataclass(frozen=True)
class SearchHistory:
    """Everything one search run produced, in evaluation order."""

    records: tuple[IterationRecord, ...]
    best_config: StationConfig
    best_evaluation: Evaluation

    @property
    def final_best(self) -> float:
        return self.records[-1].best_so_far

    def best_so_far_curve(self) -> np.ndarray:
        return np.array([r.best_so_far for r in self.records])


def _seed_streams(params: BocsParams, total_evals: int):
    ss = np.random.SeedSequence(params.seed)
    ss_init, ss_fit, ss_acq, ss_eval = ss.spawn(4)
    eval_seeds = ss_eval.generate_state(max(total_evals, 1), dtype=np.uint64)
    fit_seeds = ss_fit.generate_state(max(params.n_search, 1), dtype=np.uint64)
    acq_seeds = ss_acq.generate_state(max(params.n_search, 1), dtype=np.uint64)
    return ss_init, ss_acq, eval_seeds, fit_seeds, acq_seeds


def _run_loop(inst: ProblemInstance, params: BocsParams,
              weights: PenaltyWeights | None, schedule: SaSchedule | None,
              guided: bool) -> SearchHistory:
    if schedule is None:
        schedule = SaSchedule()
    eparams = params.eval_params()
    total = params.n_init + params.n_search
    ss_init, ss_acq, eval_seeds, fit_seeds, acq_seeds = _seed_streams(params, total)
    rng_init = np.random.default_rng(ss_init)
    rng_prop = np.random.default_rng(ss_acq)

    data = SampleSet(m=inst.m)
    records: list[IterationRecord] = []
    best_y = math.inf
    best_eval: Evaluation | None = None
    best_config: StationConfig | None = None

    def run_one(index: int, phase: str, config: StationConfig):
        nonlocal best_y, best_eval, best_config
        sched = replace(schedule, seed=int(eval_seeds[index]))
        ev = evaluate_config(inst, config, weights, sched, eparams)
        data.add(config, ev.y)
        if ev.y < best_y:
            best_y = ev.y
            best_eval = ev
            best_config = config
        records.append(IterationRecord(
            index=index, phase=phase, config=config,
            a=ev.a, b=ev.b, y=ev.y, best_so_far=best_y, feasible=ev.feasible,
        ))

    for i in range(params.n_init):
        bits = tuple(int(b) for b in rng_init.integers(0, 2, size=inst.m))
        run_one(i, "init", StationConfig(bits))

    for k in range(params.n_search):
        if guided:
            surrogate = fit_posterior_sample(data, params.prior,
                                             seed=int(fit_seeds[k]))
            config = acquire(surrogate, params.acquisition,
                             seed=int(acq_seeds[k]),
                             station_cost=params.station_cost_weight)
        else:
            bits = tuple(int(b) for b in rng_prop.integers(0, 2, size=inst.m))
            config = StationConfig(bits)
        run_one(params.n_init + k, "search", config)

    assert best_eval is not None and best_config is not None
    return SearchHistory(records=tuple(records), best_config=best_config,
                         best_evaluation=best_eval)


def run_bocs(inst: ProblemInstance, params: BocsParams,
             weights: PenaltyWeights | None = None,
             schedule: SaSchedule | None = None) -> SearchHistory:
    """Full surrogate-guided search; see the module docstring."""
    return _run_loop(inst, params, weights, schedule, guided=True)


def run_random_search(inst: ProblemInstance, params: BocsParams,
                      weights: PenaltyWeights | None = None,
                      schedule: SaSchedule | None = None) -> SearchHistory:
    """Uniform-random baseline: the same loop and seeding as run_bocs with
    the surrogate replaced by uniform proposals, so runs with equal
    parameters are directly comparable."""
    return _run_loop(inst, params, weights, schedule, guided=False)
