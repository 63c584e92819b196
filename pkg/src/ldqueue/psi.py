"""Infinitesimal logarithmic MGF of a renewal arrival process.

For interarrival cumulant kappa, the arrival process grows locally like
exp(psi(theta) dt) with psi(theta) = -kappa^{-1}(-theta).  kappa is
strictly increasing wherever finite, so the inverse is computed by
bracketed bisection polished with Newton steps on kappa; families with
a closed-form inverse use it as a fast path unless the numeric route is
forced.

Truncation: dropping customers whose service exceeds K compounds a
geometric number of interarrivals, giving
    kappa_K(theta) = kappa(theta) + log(F(K) / (1 - tail(K) e^kappa(theta)))
and, equivalently on the psi side,
    psi_K(theta) = psi(log(F(K) e^theta + tail(K))).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import BracketError, DomainError
from .laws import RenewalLaw, ServiceLaw

ArrayLike = Union[float, np.ndarray]

_MAX_EXPANSIONS = 60
_BISECT_ITERS = 90
_NEWTON_ITERS = 6


def cumulant(law: RenewalLaw, theta: ArrayLike) -> ArrayLike:
    """log E exp(theta U) for one interarrival time U."""
    return law.cumulant(theta)


@dataclass(frozen=True)
class PsiEvaluator:
    """Evaluates psi and its derivative for one renewal law.

    tol is the absolute tolerance on the root of kappa(x) = -theta.
    method "auto" prefers the family's closed-form inverse; "bisect"
    forces the numeric route (used by cross-check tests).
    """

    law: RenewalLaw
    tol: float = 1e-12
    method: str = "auto"

    def psi(self, theta: ArrayLike) -> ArrayLike:
        th = np.asarray(theta, dtype=float)
        scalar = th.ndim == 0
        th = np.atleast_1d(th)
        if self.method == "auto" and self.law.kappa_inverse is not None:
            root = np.asarray(self.law.kappa_inverse(-th), dtype=float)
        else:
            root = self._invert(-th)
        out = -root
        return float(out[0]) if scalar else out

    def psi_prime(self, theta: ArrayLike) -> ArrayLike:
        """d psi / d theta = 1 / kappa'(-psi(theta))."""
        th = np.asarray(theta, dtype=float)
        scalar = th.ndim == 0
        psi_val = np.atleast_1d(np.asarray(self.psi(th), dtype=float))
        out = 1.0 / np.asarray(self.law.kappa_prime(-psi_val), dtype=float)
        return float(out[0]) if scalar else out

    # -- numeric inverse ----------------------------------------------------

    def _invert(self, y: np.ndarray) -> np.ndarray:
        """Solve kappa(x) = y elementwise."""
        kap, sup = self.law.kappa, self.law.theta_sup
        lo = np.zeros_like(y)
        hi = np.zeros_like(y)

        # expand upward toward theta_sup where y > 0
        need = y > 0
        if np.any(need):
            bounded = np.isfinite(sup)
            step = np.ones_like(y)
            for _ in range(_MAX_EXPANSIONS):
                cand = sup - (sup - hi) * 0.5 if bounded else hi + step
                hi = np.where(need, cand, hi)
                step = step * 2.0
                with np.errstate(over="ignore"):
                    need = need & (kap(hi) < y)
                if not np.any(need):
                    break
            else:
                raise BracketError("kappa never reaches requested value from above")

        # expand downward where y < 0
        need = y < 0
        if np.any(need):
            step = np.ones_like(y)
            for _ in range(_MAX_EXPANSIONS):
                lo = np.where(need, lo - step, lo)
                step = step * 2.0
                need = need & (kap(lo) > y)
                if not np.any(need):
                    break
            else:
                raise BracketError("kappa never reaches requested value from below")

        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            high = kap(mid) > y
            hi = np.where(high, mid, hi)
            lo = np.where(high, lo, mid)

        x = 0.5 * (lo + hi)
        for _ in range(_NEWTON_ITERS):
            step = (kap(x) - y) / self.law.kappa_prime(x)
            x = np.clip(x - step, lo, hi)
        if np.any(np.abs(kap(x) - y) > 1e-9 * np.maximum(1.0, np.abs(y))):
            raise BracketError("kappa inversion failed to converge")
        return x


def psi_n(ev: PsiEvaluator, theta: ArrayLike) -> ArrayLike:
    """psi(theta) = -kappa^{-1}(-theta)."""
    return ev.psi(theta)


def psi_n_truncated(ev: PsiEvaluator, svc: ServiceLaw, K: float,
                    theta: ArrayLike) -> ArrayLike:
    """psi of the arrival stream with service times > K discarded."""
    fk = float(svc.cdf(K))
    if fk <= 0.0:
        raise DomainError(f"psi_n_truncated: F({K}) = 0")
    th = np.asarray(theta, dtype=float)
    arg = _log_trunc_arg(fk, th)
    return ev.psi(arg)


def _log_trunc_arg(fk: float, theta: np.ndarray) -> np.ndarray:
    """log(F(K) e^theta + tail(K)), computed in log space."""
    if fk >= 1.0:
        return theta
    return np.logaddexp(np.log(fk) + theta, np.log1p(-fk))


def truncated_cumulant(law: RenewalLaw, svc: ServiceLaw, K: float,
                       theta: ArrayLike) -> ArrayLike:
    """Cumulant of the compounded interarrival time after truncation at K.

    Sum of a geometric number of base interarrivals; finite only while
    tail(K) e^kappa(theta) < 1.
    """
    fk = float(svc.cdf(K))
    if fk <= 0.0:
        raise DomainError(f"truncated_cumulant: F({K}) = 0")
    th = np.asarray(theta, dtype=float)
    scalar = th.ndim == 0
    k = np.atleast_1d(np.asarray(law.cumulant(th), dtype=float))
    geo = (1.0 - fk) * np.exp(k)
    if np.any(geo >= 1.0):
        raise DomainError("truncated_cumulant: geometric compounding diverges "
                          "(tail(K) e^kappa >= 1)")
    out = k + np.log(fk / (1.0 - geo))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class TruncatedPsi:
    """Psi evaluator of the service-truncated arrival stream.

    Exposes the same psi/psi_prime surface as PsiEvaluator so the
    finite-dimensional rate machinery can run on truncated systems
    unchanged.
    """

    base: PsiEvaluator
    f_at_K: float

    def psi(self, theta: ArrayLike) -> ArrayLike:
        th = np.asarray(theta, dtype=float)
        return self.base.psi(_log_trunc_arg(self.f_at_K, th))

    def psi_prime(self, theta: ArrayLike) -> ArrayLike:
        th = np.asarray(theta, dtype=float)
        arg = _log_trunc_arg(self.f_at_K, th)
        inner = self.base.psi_prime(arg)
        if self.f_at_K >= 1.0:
            return inner
        # d/dtheta log(F e^th + Fbar) = F e^th / (F e^th + Fbar)
        jac = np.exp(np.log(self.f_at_K) + th - arg)
        return inner * jac


def truncated_evaluator(ev: PsiEvaluator, svc: ServiceLaw, K: float) -> TruncatedPsi:
    fk = float(svc.cdf(K))
    if fk <= 0.0:
        raise DomainError(f"truncated_evaluator: F({K}) = 0")
    return TruncatedPsi(base=ev, f_at_K=fk)
