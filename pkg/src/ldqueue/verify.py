"""Independent oracles and Monte Carlo checks for the rate numerics.

The fixed-time queue length under Poisson arrivals is itself Poisson,
so its tail gives an exact oracle for decay rates; everything else is
checked by seeded replication against that oracle or against the two
rate evaluators cross-checking each other.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import gammaln

from .errors import InsufficientHitsError
from .laws import RenewalLaw, ServiceLaw, integrated_tail
from .psi import PsiEvaluator
from .rates import (
    TiltDensity,
    finite_dim_rate,
    increments_from_function,
    poisson_rate,
    qbar_from_tilt,
)
from .simulate import simulate

Array = np.ndarray

_STOP_NATS = 40.0


def poisson_tail_log(m: float, n: int) -> float:
    """log P(Poisson(m) >= n), summed stably in log space.

    Terms accumulate until they fall _STOP_NATS below the running
    maximum, which bounds the truncation error far under float
    precision.
    """
    if m <= 0:
        raise ValueError("poisson_tail_log needs m > 0")
    n = int(n)
    if n <= 0:
        return 0.0
    chunk = 512
    k0 = n
    best = -math.inf
    acc = None  # (max_log, sum of exp(term - max_log))
    while True:
        ks = np.arange(k0, k0 + chunk)
        logs = -m + ks * math.log(m) - gammaln(ks + 1)
        top = float(logs.max())
        if acc is None:
            acc = (top, float(np.exp(logs - top).sum()))
        else:
            hi = max(acc[0], top)
            acc = (hi, acc[1] * math.exp(acc[0] - hi)
                   + float(np.exp(logs - hi).sum()))
        best = max(best, top)
        if float(logs[-1]) < best - _STOP_NATS and ks[-1] > m:
            break
        k0 += chunk
    return min(acc[0] + math.log(acc[1]), 0.0)


@dataclass(frozen=True)
class TailOracleResult:
    """Exact upper-tail evaluation: log P(Poisson(mean) >= level)."""

    log_prob: float
    mean: float
    level: int

    def __post_init__(self):
        if self.log_prob > 0.0:
            raise ValueError("log probabilities cannot be positive")


def poisson_tail_oracle(m: float, n: int) -> TailOracleResult:
    return TailOracleResult(log_prob=poisson_tail_log(m, n), mean=float(m),
                            level=int(n))


# ---------------------------------------------------------------------------
# events with exact oracles and Monte Carlo estimators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QueueLevelEvent:
    """{number in system at time u >= level * lam} for the scaled queue."""

    arr: RenewalLaw
    svc: ServiceLaw
    u: float
    level: float

    def threshold(self, lam: float) -> int:
        return int(math.ceil(self.level * lam - 1e-9))

    def exact_log_prob(self, lam: float) -> float:
        """Poisson-arrivals oracle: count at u is Poisson(lam * mean)."""
        if self.arr.name != "exponential":
            raise ValueError("exact oracle needs Poisson arrivals")
        rate = self.arr.spec.get("rate", 1.0)
        mean = lam * rate * integrated_tail(self.svc, self.u)
        return poisson_tail_log(mean, self.threshold(lam))

    def mc_hits(self, lam: float, reps: int, seed: int,
                threads: int = 1) -> int:
        thr = self.threshold(lam)

        def count_one(r: int) -> int:
            log = simulate(self.arr, self.svc, lam, self.u, seed, index=r)
            return int(np.sum(log.departures > self.u) >= thr)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return sum(pool.map(count_one, range(reps)))
        return sum(count_one(r) for r in range(reps))


@dataclass
class DecayEstimate:
    lambdas: list
    neg_log_prob_over_lambda: list
    extrapolated_rate: float
    method: str
    slope: float = 0.0

    def to_json_dict(self) -> dict:
        return {"lambdas": list(self.lambdas),
                "neg_log_prob_over_lambda": list(self.neg_log_prob_over_lambda),
                "extrapolated_rate": self.extrapolated_rate,
                "method": self.method, "slope": self.slope}


def decay_curve(event: QueueLevelEvent, lambdas: Sequence[float],
                method: str = "exact-oracle", reps: int = 0, seed: int = 0,
                min_hits: int = 100, threads: int = 1) -> DecayEstimate:
    """-log P(event) / lam across lam, with the finite-size correction
    a + b log(lam)/lam fitted; `a` is the extrapolated decay rate.

    Monte Carlo mode demands at least `min_hits` event hits at every
    lam (plain replication only; events must be only mildly rare).
    """
    lambdas = [float(l) for l in lambdas]
    ys = []
    for lam in lambdas:
        if method == "exact-oracle":
            lp = event.exact_log_prob(lam)
        elif method == "monte-carlo":
            if reps <= 0:
                raise ValueError("monte-carlo mode needs reps > 0")
            hits = event.mc_hits(lam, reps, seed, threads)
            if hits < min_hits:
                raise InsufficientHitsError(
                    f"{hits} hits < {min_hits} at lam = {lam}")
            lp = math.log(hits / reps)
        else:
            raise ValueError(f"unknown method: {method}")
        ys.append(-lp / lam)
    lams = np.asarray(lambdas)
    design = np.column_stack([np.ones_like(lams), np.log(lams) / lams])
    coef, *_ = np.linalg.lstsq(design, np.asarray(ys), rcond=None)
    return DecayEstimate(lambdas=lambdas, neg_log_prob_over_lambda=ys,
                         extrapolated_rate=float(coef[0]), method=method,
                         slope=float(coef[1]))


# ---------------------------------------------------------------------------
# distributional check of the simulator
# ---------------------------------------------------------------------------

@dataclass
class MarginalReport:
    lam: float
    u: float
    reps: int
    sample_mean: float
    theory_mean: float
    z_score: float
    var_mean_ratio: float
    mean_ok: bool
    dispersion_ok: bool

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def marginal_distribution_check(arr: RenewalLaw, svc: ServiceLaw, lam: float,
                                u: float, reps: int, seed: int,
                                z_bound: float = 4.0,
                                ratio_band: tuple = (0.9, 1.1),
                                threads: int = 1) -> MarginalReport:
    """Simulated occupancy at time u against the Poisson marginal law:
    mean lam * integral of the tail, variance equal to the mean."""
    theory = lam * arr.spec.get("rate", 1.0) * integrated_tail(svc, u)

    def one(r: int) -> int:
        log = simulate(arr, svc, lam, u, seed, index=r)
        return int(np.sum(log.departures > u))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            counts = np.fromiter(pool.map(one, range(reps)), dtype=float,
                                 count=reps)
    else:
        counts = np.fromiter((one(r) for r in range(reps)), dtype=float,
                             count=reps)
    mean = float(counts.mean())
    z = (mean - theory) / math.sqrt(theory / reps) if theory > 0 else 0.0
    ratio = float(counts.var(ddof=1) / mean) if mean > 0 else math.nan
    return MarginalReport(
        lam=lam, u=u, reps=reps, sample_mean=mean, theory_mean=theory,
        z_score=float(z), var_mean_ratio=ratio,
        mean_ok=bool(abs(z) <= z_bound),
        dispersion_ok=bool(ratio_band[0] <= ratio <= ratio_band[1]))


# ---------------------------------------------------------------------------
# evaluator cross-check
# ---------------------------------------------------------------------------

@dataclass
class CrossCheckReport:
    partition_sizes: list
    finite_dim_values: list
    closed_form_value: float
    monotone: bool
    final_relative_gap: float

    def to_json_dict(self) -> dict:
        return dict(self.__dict__)


def rate_cross_check(tilt: TiltDensity, svc: ServiceLaw, T: float,
                     partitions: Sequence[tuple], ev: Optional[PsiEvaluator] = None,
                     qbar: Optional[Callable] = None) -> CrossCheckReport:
    """Partition-based evaluator against the closed-form entropy value.

    `partitions` is a sequence of (t_part, y_part) pairs, coarse to
    fine.  The partition values must stay below the closed form, never
    decrease under refinement, and close most of the gap at the finest
    level.
    """
    from .laws import exponential_interarrivals
    ev = ev or PsiEvaluator(exponential_interarrivals(1.0))
    closed = poisson_rate(tilt, svc, T)
    qb = qbar or (lambda t, y: qbar_from_tilt(tilt, t, y))
    values = []
    for t_part, y_part in partitions:
        table = increments_from_function(qb, t_part, y_part)
        values.append(finite_dim_rate(table, ev, svc))
    diffs = np.diff(values)
    gap = abs(values[-1] - closed) / max(abs(closed), 1e-300)
    return CrossCheckReport(
        partition_sizes=[len(t) - 1 for t, _ in partitions],
        finite_dim_values=[float(v) for v in values],
        closed_form_value=float(closed),
        monotone=bool(np.all(diffs >= -1e-6)),
        final_relative_gap=float(gap))


def nested_partitions(T: float, y_hi: float, sizes: Sequence[int]) -> list:
    """Uniform (t, y) partitions with a trailing infinite y-cell."""
    out = []
    for n in sizes:
        t_part = np.linspace(0.0, T, n + 1)
        y_part = np.concatenate([np.linspace(0.0, y_hi, n + 1), [np.inf]])
        out.append((t_part, y_part))
    return out
