"""Service-time and interarrival-time distributions.

Each law bundles the callables the rest of the package needs (cdf/tail/
density/sampler, or cumulant and its derivative) together with the
structural metadata that makes deterministic quadrature possible:
support bounds and density-kink locations.

Supported families
------------------
Service:       uniform[a,b], exponential(rate), deterministic(value)
Interarrival:  exponential(rate)  -> Poisson arrivals,
               gamma(shape, rate),
               uniform[a,b] with a > 0 (deterministic-plus-jitter),
               deterministic(value)

Laws parse from JSON-style dicts: {"kind": "uniform", "a": 0, "b": 1},
{"kind": "exponential", "rate": 1}, {"kind": "gamma", "shape": 2,
"rate": 2}, {"kind": "deterministic", "value": 1}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError
from .quadrature import adaptive_simpson

Array = np.ndarray


# ---------------------------------------------------------------------------
# service laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ServiceLaw:
    """Service-time distribution.

    `cdf`, `tail` and (when present) `pdf` are vectorized callables on
    [0, inf).  `support_bound` is the essential supremum M when finite;
    `breakpoints` lists the locations where the density is kinked or
    jumps, so quadrature panels can be split there.  `quantile` inverts
    the cdf.  All state is immutable; samplers take an explicit
    numpy Generator.
    """

    name: str
    cdf: Callable[[Array], Array]
    pdf: Optional[Callable[[Array], Array]]
    quantile: Callable[[float], float]
    sampler: Callable[[np.random.Generator, int], Array]
    support_bound: Optional[float] = None
    breakpoints: tuple[float, ...] = ()
    closed_tail_integral: Optional[Callable[[float], float]] = None
    spec: dict = field(default_factory=dict)

    def tail(self, x):
        return 1.0 - self.cdf(x)

    def sample(self, rng: np.random.Generator, size: int) -> Array:
        return self.sampler(rng, size)

    def has_density(self) -> bool:
        return self.pdf is not None


def uniform_service(a: float = 0.0, b: float = 1.0) -> ServiceLaw:
    if not (0.0 <= a < b):
        raise ConfigError(f"uniform service needs 0 <= a < b, got [{a}, {b}]")
    width = b - a

    def cdf(x):
        return np.clip((np.asarray(x, dtype=float) - a) / width, 0.0, 1.0)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= a) & (x <= b), 1.0 / width, 0.0)

    def tail_int(u: float) -> float:
        # int_0^u (1 - F) with F the uniform[a,b] cdf
        u = float(u)
        first = min(u, a)
        rest = 0.0
        if u > a:
            z = min(u, b)
            rest = (z - a) - ((z - a) ** 2) / (2.0 * width)
        return first + rest

    return ServiceLaw(
        name="uniform",
        cdf=cdf,
        pdf=pdf,
        quantile=lambda p: a + width * float(p),
        sampler=lambda rng, size: rng.uniform(a, b, size),
        support_bound=b,
        breakpoints=(a, b),
        closed_tail_integral=tail_int,
        spec={"kind": "uniform", "a": a, "b": b},
    )


def exponential_service(rate: float = 1.0) -> ServiceLaw:
    if rate <= 0:
        raise ConfigError("exponential service needs rate > 0")

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, -np.expm1(-rate * np.maximum(x, 0.0)), 0.0)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= 0, rate * np.exp(-rate * np.maximum(x, 0.0)), 0.0)

    return ServiceLaw(
        name="exponential",
        cdf=cdf,
        pdf=pdf,
        quantile=lambda p: -np.log1p(-float(p)) / rate,
        sampler=lambda rng, size: rng.exponential(1.0 / rate, size),
        support_bound=None,
        breakpoints=(0.0,),
        closed_tail_integral=lambda u: float(-np.expm1(-rate * float(u)) / rate),
        spec={"kind": "exponential", "rate": rate},
    )


def deterministic_service(value: float) -> ServiceLaw:
    if value <= 0:
        raise ConfigError("deterministic service needs value > 0")

    def cdf(x):
        return (np.asarray(x, dtype=float) >= value).astype(float)

    return ServiceLaw(
        name="deterministic",
        cdf=cdf,
        pdf=None,
        quantile=lambda p: value,
        sampler=lambda rng, size: np.full(size, value, dtype=float),
        support_bound=value,
        breakpoints=(value,),
        closed_tail_integral=lambda u: float(min(u, value)),
        spec={"kind": "deterministic", "value": value},
    )


def integrated_tail(svc: ServiceLaw, u: float) -> float:
    """int_0^u tail(t) dt, closed form where the family provides one."""
    u = float(u)
    if u < 0:
        raise DomainError("integrated_tail needs u >= 0")
    if u == 0.0:
        return 0.0
    if svc.closed_tail_integral is not None:
        return svc.closed_tail_integral(u)
    return adaptive_simpson(lambda t: float(svc.tail(t)), 0.0, u, tol=1e-10)


def tail_integral_signed(svc: ServiceLaw, z: float) -> float:
    """integrated_tail extended to z < 0 by tail(t) = 1 there.

    Lets expressions like int_a^b tail(c - s) ds be written as a
    difference of two calls without case splits.
    """
    z = float(z)
    if z <= 0.0:
        return z
    return integrated_tail(svc, z)


def service_truncate(svc: ServiceLaw, K: float) -> ServiceLaw:
    """Condition the service law on V <= K: cdf F(x)/F(K) on [0, K]."""
    K = float(K)
    if K <= 0:
        raise DomainError("service_truncate needs K > 0")
    fk = float(svc.cdf(K))
    if fk <= 0.0:
        raise DomainError(f"service_truncate: F({K}) = 0")

    def cdf(x):
        x = np.asarray(x, dtype=float)
        return np.minimum(svc.cdf(np.minimum(x, K)) / fk, 1.0)

    pdf = None
    if svc.pdf is not None:
        base_pdf = svc.pdf

        def pdf(x):  # noqa: F811 - deliberate conditional definition
            x = np.asarray(x, dtype=float)
            return np.where(x <= K, base_pdf(x) / fk, 0.0)

    def quantile(p):
        return svc.quantile(float(p) * fk)

    def sampler(rng, size):
        return quantile_samples(quantile, rng, size)

    breaks = tuple(sorted({b for b in svc.breakpoints if b < K} | {K}))
    return ServiceLaw(
        name=f"{svc.name}|<= {K:g}",
        cdf=cdf,
        pdf=pdf,
        quantile=quantile,
        sampler=sampler,
        support_bound=K,
        breakpoints=breaks,
        closed_tail_integral=None,
        spec={"kind": "truncated", "base": svc.spec, "K": K},
    )


def quantile_samples(quantile: Callable[[float], float],
                     rng: np.random.Generator, size: int) -> Array:
    u = rng.uniform(0.0, 1.0, size)
    return np.array([quantile(p) for p in u], dtype=float)


# ---------------------------------------------------------------------------
# interarrival laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RenewalLaw:
    """Interarrival-time law with its cumulant generating function.

    `kappa`/`kappa_prime` are vectorized; `theta_sup` is the supremum of
    the cumulant's effective domain.  `kappa_inverse`, when the family
    admits one in closed form, is used as a fast path by the psi
    evaluator; the numeric inverse remains available for cross-checks.
    """

    name: str
    sampler: Callable[[np.random.Generator, int], Array]
    kappa: Callable[[Array], Array]
    kappa_prime: Callable[[Array], Array]
    theta_sup: float
    mean: float
    kappa_inverse: Optional[Callable[[Array], Array]] = None
    is_lattice: bool = False
    spec: dict = field(default_factory=dict)

    def sample(self, rng: np.random.Generator, size: int) -> Array:
        return self.sampler(rng, size)

    def cumulant(self, theta):
        """log E exp(theta U); DomainError at or beyond theta_sup."""
        th = np.asarray(theta, dtype=float)
        if np.any(th >= self.theta_sup):
            raise DomainError(
                f"cumulant of {self.name} diverges for theta >= {self.theta_sup}")
        return self.kappa(th)


def exponential_interarrivals(rate: float = 1.0) -> RenewalLaw:
    """Exponential interarrivals, i.e. Poisson arrivals at `rate`."""
    if rate <= 0:
        raise ConfigError("exponential interarrivals need rate > 0")
    return RenewalLaw(
        name="exponential",
        sampler=lambda rng, size: rng.exponential(1.0 / rate, size),
        kappa=lambda th: -np.log1p(-np.asarray(th, dtype=float) / rate),
        kappa_prime=lambda th: 1.0 / (rate - np.asarray(th, dtype=float)),
        theta_sup=rate,
        mean=1.0 / rate,
        kappa_inverse=lambda y: rate * -np.expm1(-np.asarray(y, dtype=float)),
        spec={"kind": "exponential", "rate": rate},
    )


def gamma_interarrivals(shape: float, rate: float) -> RenewalLaw:
    if shape <= 0 or rate <= 0:
        raise ConfigError("gamma interarrivals need shape > 0 and rate > 0")
    return RenewalLaw(
        name="gamma",
        sampler=lambda rng, size: rng.gamma(shape, 1.0 / rate, size),
        kappa=lambda th: -shape * np.log1p(-np.asarray(th, dtype=float) / rate),
        kappa_prime=lambda th: shape / (rate - np.asarray(th, dtype=float)),
        theta_sup=rate,
        mean=shape / rate,
        kappa_inverse=lambda y: rate * -np.expm1(-np.asarray(y, dtype=float) / shape),
        spec={"kind": "gamma", "shape": shape, "rate": rate},
    )


def uniform_interarrivals(a: float, b: float) -> RenewalLaw:
    """Uniform[a, b] interarrivals with a > 0 (deterministic plus jitter)."""
    if not (0.0 < a < b):
        raise ConfigError("uniform interarrivals need 0 < a < b")
    width = b - a
    m1 = 0.5 * (a + b)
    var = width * width / 12.0

    def kappa(th):
        # kappa = th*a + log(expm1(th*w)/(th*w)), stable at both tails
        th = np.asarray(th, dtype=float)
        scalar = th.ndim == 0
        th1 = np.atleast_1d(th)
        out = np.zeros_like(th1)
        nz = th1 != 0.0
        thn = th1[nz]
        with np.errstate(over="ignore"):
            out[nz] = thn * a + np.log(np.expm1(thn * width) / (thn * width))
        return float(out[0]) if scalar else out

    def kappa_prime(th):
        th = np.asarray(th, dtype=float)
        scalar = th.ndim == 0
        th1 = np.atleast_1d(th)
        small = np.abs(th1) < 1e-5
        ths = np.where(small, 1.0, th1)
        # factor out the dominant exponential so both tails stay finite
        z = -np.abs(ths) * width
        ez = np.exp(z)
        pos = ths > 0
        num = np.where(pos, b - a * ez, b * ez - a)
        den = np.where(pos, 1.0 - ez, ez - 1.0)
        exact = num / den - 1.0 / ths
        series = m1 + var * th1  # odd central moments vanish: error O(th^3)
        out = np.where(small, series, exact)
        return float(out[0]) if scalar else out

    return RenewalLaw(
        name="uniform",
        sampler=lambda rng, size: rng.uniform(a, b, size),
        kappa=kappa,
        kappa_prime=kappa_prime,
        theta_sup=np.inf,
        mean=m1,
        kappa_inverse=None,
        spec={"kind": "uniform", "a": a, "b": b},
    )


def deterministic_interarrivals(value: float) -> RenewalLaw:
    """Point-mass interarrivals.  Lattice: useful for simulation and
    cumulant checks, outside the non-lattice assumptions of the
    asymptotic theory."""
    if value <= 0:
        raise ConfigError("deterministic interarrivals need value > 0")
    return RenewalLaw(
        name="deterministic",
        sampler=lambda rng, size: np.full(size, value, dtype=float),
        kappa=lambda th: np.asarray(th, dtype=float) * value,
        kappa_prime=lambda th: np.full_like(np.asarray(th, dtype=float), value),
        theta_sup=np.inf,
        mean=value,
        kappa_inverse=lambda y: np.asarray(y, dtype=float) / value,
        is_lattice=True,
        spec={"kind": "deterministic", "value": value},
    )


# ---------------------------------------------------------------------------
# JSON-style spec parsing
# ---------------------------------------------------------------------------

def service_from_spec(spec: dict) -> ServiceLaw:
    try:
        kind = spec["kind"]
        if kind == "uniform":
            return uniform_service(spec.get("a", 0.0), spec.get("b", 1.0))
        if kind == "exponential":
            return exponential_service(spec.get("rate", 1.0))
        if kind == "deterministic":
            return deterministic_service(spec["value"])
        if kind == "truncated":
            return service_truncate(service_from_spec(spec["base"]), spec["K"])
    except KeyError as exc:
        raise ConfigError(f"service spec missing field: {exc}") from exc
    raise ConfigError(f"unknown service kind: {spec.get('kind')!r}")


def renewal_from_spec(spec: dict) -> RenewalLaw:
    try:
        kind = spec["kind"]
        if kind == "exponential":
            return exponential_interarrivals(spec.get("rate", 1.0))
        if kind == "gamma":
            return gamma_interarrivals(spec["shape"], spec["rate"])
        if kind == "uniform":
            return uniform_interarrivals(spec["a"], spec["b"])
        if kind == "deterministic":
            return deterministic_interarrivals(spec["value"])
    except KeyError as exc:
        raise ConfigError(f"arrival spec missing field: {exc}") from exc
    raise ConfigError(f"unknown arrival kind: {spec.get('kind')!r}")
