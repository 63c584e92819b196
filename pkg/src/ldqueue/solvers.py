"""Most-likely-path solvers for rare events of the occupancy surface.

Both problems minimize the Poisson-arrivals entropy functional subject
to a linear constraint reaching level x by some horizon u <= T:

* overflow -- the scaled number in system hits x (a loss in a system
  with x * lam servers).  The Euler-Lagrange solution tilts the
  arrival/service density by a constant factor mu on the region of
  customers still present at the critical time, and everything is
  available in closed form.

* ruin -- an aggregate insurance loss with payoff h1 (death before the
  horizon) and h2 (still alive) hits x.  The tilt is exponential in the
  payoffs, the multiplier solves a strictly increasing scalar equation
  G(mu) = x, and the horizon is swept numerically.

Solvers return an OptimalPath bundling the tilt density, both surface
views, the multiplier, the optimal horizon, and the rate value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import BracketError, InfeasibleError
from .laws import ServiceLaw, integrated_tail, tail_integral_signed, uniform_service
from .quadrature import panel_nodes
from .rates import TiltDensity
from .simulate import OccupancySurface, SurfaceGrid

Array = np.ndarray

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
_UNIT_UNIFORM = uniform_service(0.0, 1.0)


# ---------------------------------------------------------------------------
# problem statements and solution container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverflowProblem:
    """Reach scaled occupancy x by horizon T under Poisson arrivals."""

    svc: ServiceLaw
    x: float
    T: float

    def __post_init__(self):
        if self.x <= 0 or self.T <= 0:
            raise InfeasibleError("need x > 0 and T > 0")


@dataclass(frozen=True)
class RuinProblem:
    """Aggregate payoff reaches x by horizon T under Poisson arrivals.

    h1(s, y): payoff of a customer arriving at s and leaving at y <= u.
    h2(s, t): payoff at probe time t of a customer arriving at s, still
    present.  Both vectorized over numpy arrays.
    """

    svc: ServiceLaw
    h1: Callable[[Array, Array], Array]
    h2: Callable[[Array, Array], Array]
    x: float
    T: float
    u_grid: Optional[Sequence[float]] = None

    def horizons(self, n_default: int = 64) -> Array:
        if self.u_grid is not None:
            u = np.asarray(self.u_grid, dtype=float)
        else:
            u = np.linspace(self.T / n_default, self.T, n_default)
        if np.any(u <= 0) or np.any(u > self.T + 1e-12):
            raise InfeasibleError("candidate horizons must lie in (0, T]")
        return u


@dataclass(frozen=True)
class OptimalPath:
    """Solved most-likely path."""

    tilt: TiltDensity
    surface_qbar: OccupancySurface
    surface_q: OccupancySurface
    mu: float
    u_star: float
    rate: float
    constraint_value: float
    qbar_fn: Callable[[float, float], float] = field(repr=False, default=None)
    q_fn: Callable[[float, float], float] = field(repr=False, default=None)

    def summary(self) -> dict:
        return {"mu": self.mu, "u_star": self.u_star, "rate": self.rate,
                "constraint_value": self.constraint_value}


def golden_min(f: Callable[[float], float], a: float, b: float,
               tol: float = 1e-7, max_iter: int = 80) -> tuple[float, float]:
    """Golden-section minimum of a unimodal scalar function on [a, b]."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a < tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _sweep_and_refine(f: Callable[[float], float], grid: Array,
                      lo: float, hi: float) -> tuple[float, float]:
    """Argmin over a grid, golden-refined around the best point.

    Candidates keep the grid points and interval endpoints so boundary
    minima are returned exactly; ties break toward the smaller horizon.
    """
    vals = np.array([f(u) for u in grid])
    if np.all(np.isinf(vals)):
        raise InfeasibleError("every candidate horizon is infeasible")
    k = int(np.argmin(vals))
    a = grid[k - 1] if k > 0 else max(lo, grid[0])
    b = grid[k + 1] if k + 1 < len(grid) else hi
    xg, fg = golden_min(f, a, b)
    candidates = [(grid[i], vals[i]) for i in range(len(grid))] + [(xg, fg)]
    if hi not in grid:
        candidates.append((hi, f(hi)))
    candidates.sort(key=lambda p: p[0])
    best = min(candidates, key=lambda p: (p[1], p[0]))
    return best


# ---------------------------------------------------------------------------
# overflow (closed forms)
# ---------------------------------------------------------------------------

def overflow_rate_at(p: OverflowProblem, u: float) -> float:
    """Decay rate of reaching level x at horizon u: A + x (log(x/A) - 1)."""
    A = integrated_tail(p.svc, u)
    if A <= 0:
        return math.inf
    return A + p.x * (math.log(p.x / A) - 1.0)


def overflow_q(p: OverflowProblem, u: float, mu: float, t: float, y: float) -> float:
    """Residual-view optimal surface: tilted branches up to the critical
    horizon u, typical continuation beyond it."""
    svc = p.svc
    if t <= 0:
        return 0.0
    if t > u:
        # all tilted survivors sit in the boosted branch; arrivals on
        # (u, t] follow the typical density
        tilted = mu * (integrated_tail(svc, y + t)
                       - integrated_tail(svc, y + t - u))
        typical = (integrated_tail(svc, y + t - u) - integrated_tail(svc, y))
        return tilted + typical
    grow = integrated_tail(svc, y + t) - integrated_tail(svc, y)
    if y + t <= u:
        drain = integrated_tail(svc, u) - integrated_tail(svc, u - t)
        return grow + (mu - 1.0) * drain
    return mu * grow


def overflow_qbar(p: OverflowProblem, u: float, mu: float, t: float, y: float) -> float:
    """Two-parameter optimal surface; wedge y < t filled via the arrival
    intensity F(u - s) + mu tail(u - s) of the tilted path."""
    if y >= t:
        return overflow_q(p, u, mu, t, y - t)
    base = overflow_q(p, u, mu, y, 0.0)
    s_hi = min(t, u)
    flow = 0.0
    if y < s_hi:
        drained = (tail_integral_signed(p.svc, u - y)
                   - tail_integral_signed(p.svc, u - s_hi))
        flow = (s_hi - y) + (mu - 1.0) * drained
    flow += max(t - u, 0.0) - max(y - u, 0.0)  # typical arrivals past u
    return base + flow


def overflow_tilt(p: OverflowProblem, u: float, mu: float,
                  nt: int = 48, nr: int = 48) -> TiltDensity:
    pdf = p.svc.pdf
    R = p.svc.support_bound or p.svc.quantile(1 - 1e-12)

    def fn(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        factor = np.where((t + r <= u) | (t > u), 1.0, mu)
        return factor * pdf(r)

    return TiltDensity.from_function(
        fn, p.T, R, nt=nt, nr=nr, r_kinks=p.svc.breakpoints,
        t_breaks=(u,) + tuple(u - b for b in p.svc.breakpoints if 0 < u - b),
        r_breaks=lambda t: (u - t,) if t <= u else ())


def overflow_surface(p: OverflowProblem, u: float, mu: float,
                     grid: SurfaceGrid) -> OccupancySurface:
    """Closed-form residual surface q(t, y) sampled on a grid."""
    vals = np.array([[overflow_q(p, u, mu, t, y) for y in grid.y_nodes]
                     for t in grid.t_nodes])
    return OccupancySurface(grid=grid, values=vals, lam=1.0, scaled=True)


def solve_overflow(p: OverflowProblem, n_horizons: int = 64,
                   grid_n: int = 32) -> OptimalPath:
    """Most likely path to overflow; horizon swept then golden-refined.

    Under the rarity condition the rate decreases with the horizon, so
    the optimum sits at T; the sweep does not assume this.
    """
    if p.svc.pdf is None:
        raise InfeasibleError("overflow solver needs a service density")
    A_T = integrated_tail(p.svc, p.T)
    if A_T >= p.x:
        raise InfeasibleError(
            f"typical path reaches {A_T:.6g} >= x = {p.x:.6g}: event not rare")
    grid = np.linspace(p.T / n_horizons, p.T, n_horizons)
    u_star, rate = _sweep_and_refine(lambda u: overflow_rate_at(p, u),
                                     grid, grid[0], p.T)
    mu = p.x / integrated_tail(p.svc, u_star)
    tilt = overflow_tilt(p, u_star, mu)
    R = p.svc.support_bound or p.svc.quantile(1 - 1e-6)
    q_grid = SurfaceGrid(np.linspace(0.0, u_star, grid_n + 1),
                         np.linspace(0.0, R, grid_n + 1))
    qbar_grid = SurfaceGrid(np.linspace(0.0, u_star, grid_n + 1),
                            np.linspace(0.0, u_star + R, grid_n + 1))
    surface_q = overflow_surface(p, u_star, mu, q_grid)
    qbar_vals = np.array([[overflow_qbar(p, u_star, mu, t, y)
                           for y in qbar_grid.y_nodes] for t in qbar_grid.t_nodes])
    return OptimalPath(
        tilt=tilt,
        surface_qbar=OccupancySurface(qbar_grid, qbar_vals, 1.0, True),
        surface_q=surface_q,
        mu=mu, u_star=u_star, rate=rate,
        constraint_value=overflow_q(p, u_star, mu, u_star, 0.0),
        qbar_fn=lambda t, y: overflow_qbar(p, u_star, mu, t, y),
        q_fn=lambda t, y: overflow_q(p, u_star, mu, t, y))


# ---------------------------------------------------------------------------
# whole-life payoffs
# ---------------------------------------------------------------------------

def whole_life_payoffs(b: float, prem: float, delta: float = 0.0):
    """Benefit b at death, premium rate prem while alive, discounting delta.

    Returns (h1, h2); the delta -> 0 limit is taken analytically.
    """
    if b < 0 or prem < 0 or delta < 0:
        raise InfeasibleError("whole-life payoffs need b, prem, delta >= 0")
    if delta == 0.0:
        def h1(s, y):
            s, y = np.broadcast_arrays(np.asarray(s, float), np.asarray(y, float))
            return b - prem * (y - s)

        def h2(s, t):
            s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
            return -prem * (t - s)
    else:
        def h1(s, y):
            s, y = np.broadcast_arrays(np.asarray(s, float), np.asarray(y, float))
            return b * np.exp(-delta * y) - prem * (np.exp(-delta * s)
                                                    - np.exp(-delta * y)) / delta

        def h2(s, t):
            s, t = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float))
            return -prem * (np.exp(-delta * s) - np.exp(-delta * t)) / delta
    return h1, h2


# ---------------------------------------------------------------------------
# ruin: multiplier equation and solver
# ---------------------------------------------------------------------------

class _RuinQuadrature:
    """Fixed Gauss-Legendre layout for one candidate horizon u.

    Triangle part: nodes (t, w) with w = y - t in (0, min(u - t, W_max)),
    panels split at service-density kinks.  Still-alive part: the
    y-integral collapses exactly to tail(u - t) e^{mu h2(t,u)}.
    """

    def __init__(self, rp: RuinProblem, u: float, order: int = 24):
        svc = rp.svc
        self.u = float(u)
        wmax = svc.support_bound if svc.support_bound is not None \
            else svc.quantile(1 - 1e-10)
        outer_breaks = [u - bk for bk in svc.breakpoints if 0 < u - bk < u]
        t_nodes, t_w = panel_nodes(0.0, u, outer_breaks, order=order)
        T, W, WT = [], [], []
        for t, wt in zip(t_nodes, t_w):
            hi = min(u - t, wmax)
            wn, ww = panel_nodes(0.0, hi, svc.breakpoints, order=order)
            T.append(np.full_like(wn, t))
            W.append(wn)
            WT.append(wt * ww)
        self.T = np.concatenate(T) if T else np.empty(0)
        self.W = np.concatenate(W) if W else np.empty(0)
        self.WT = np.concatenate(WT) if WT else np.empty(0)
        self.fW = np.asarray(svc.pdf(self.W), dtype=float)
        self.H1 = np.asarray(rp.h1(self.T, self.T + self.W), dtype=float)
        self.t_alive = t_nodes
        self.w_alive = t_w
        self.tail_alive = np.asarray(svc.tail(u - t_nodes), dtype=float)
        self.H2 = np.asarray(rp.h2(t_nodes, np.full_like(t_nodes, u)), dtype=float)

    def G(self, mu: float) -> float:
        dead = float(self.WT @ (self.fW * np.exp(mu * self.H1) * self.H1))
        alive = float(self.w_alive @ (self.tail_alive * np.exp(mu * self.H2)
                                      * self.H2))
        return dead + alive

    def G_prime(self, mu: float) -> float:
        dead = float(self.WT @ (self.fW * np.exp(mu * self.H1) * self.H1 ** 2))
        alive = float(self.w_alive @ (self.tail_alive * np.exp(mu * self.H2)
                                      * self.H2 ** 2))
        return dead + alive

    def entropy(self, mu: float) -> float:
        """integral of v (log(v/f) - 1) for the tilted density over [0, u]."""
        dead = float(self.WT @ (self.fW * np.exp(mu * self.H1)
                                * (mu * self.H1 - 1.0)))
        alive = float(self.w_alive @ (self.tail_alive * np.exp(mu * self.H2)
                                      * (mu * self.H2 - 1.0)))
        return dead + alive


def multiplier_equation_G(rp: RuinProblem, u: float, mu: float) -> float:
    """Constraint functional of the exponentially tilted path at (u, mu)."""
    return _RuinQuadrature(rp, u).G(mu)


def _solve_multiplier(quad: _RuinQuadrature, x: float,
                      max_doublings: int = 60) -> float:
    """Root of G(mu) = x by doubling bracket, bisection, Newton polish."""
    lo, hi = 0.0, 1.0
    for _ in range(max_doublings):
        if quad.G(hi) >= x:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise BracketError("G(mu) never reaches x: no finite multiplier")
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if quad.G(mid) < x:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    for _ in range(50):
        resid = quad.G(mu) - x
        if abs(resid) <= 1e-13 * max(1.0, abs(x)):
            break
        gp = quad.G_prime(mu)
        if gp <= 0:
            break
        mu = min(max(mu - resid / gp, lo), hi)
    return mu


def ruin_rate_at(rp: RuinProblem, u: float) -> tuple[float, float]:
    """(total rate, multiplier) at a fixed candidate horizon.

    Total rate is the tilted entropy over [0, u] plus u itself; the
    continuation past u follows the typical path at zero cost.  Returns
    (inf, 0) when the event is not rare at this horizon.
    """
    quad = _RuinQuadrature(rp, u)
    if quad.G(0.0) >= rp.x:
        return math.inf, 0.0
    mu = _solve_multiplier(quad, rp.x)
    return quad.entropy(mu) + u, mu


def ruin_tilt(rp: RuinProblem, u: float, mu: float,
              nt: int = 48, nr: int = 48) -> TiltDensity:
    svc = rp.svc
    pdf = svc.pdf
    h1, h2 = rp.h1, rp.h2
    R = svc.support_bound or svc.quantile(1 - 1e-12)

    def fn(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        expo = np.where(t + r <= u, h1(t, t + r), h2(t, np.full_like(t, u)))
        return np.where(t > u, pdf(r), pdf(r) * np.exp(mu * expo))

    return TiltDensity.from_function(
        fn, rp.T, R, nt=nt, nr=nr, r_kinks=svc.breakpoints,
        t_breaks=(u,) + tuple(u - b for b in svc.breakpoints if 0 < u - b),
        r_breaks=lambda t: (u - t,) if t <= u else ())


def solve_ruin(rp: RuinProblem, grid_n: int = 24) -> OptimalPath:
    """Most likely path to ruin: per-horizon multiplier root, then
    horizon sweep with golden refinement."""
    if rp.svc.pdf is None:
        raise InfeasibleError("ruin solver needs a service density")
    us = rp.horizons()
    cache: dict[float, tuple[float, float]] = {}

    def rate_of(u: float) -> float:
        key = round(float(u), 15)
        if key not in cache:
            cache[key] = ruin_rate_at(rp, float(u))
        return cache[key][0]

    if all(math.isinf(rate_of(u)) for u in us):
        raise InfeasibleError("G(0) >= x at every horizon: event not rare")
    u_star, rate = _sweep_and_refine(rate_of, us, us[0], rp.T)
    mu = cache[round(float(u_star), 15)][1]
    quad = _RuinQuadrature(rp, u_star)
    tilt = ruin_tilt(rp, u_star, mu)

    q_fn, qbar_fn = _ruin_surface_fns(rp, u_star, mu)
    R = rp.svc.support_bound or rp.svc.quantile(1 - 1e-6)
    q_grid = SurfaceGrid(np.linspace(0.0, u_star, grid_n + 1),
                         np.linspace(0.0, R, grid_n + 1))
    qbar_grid = SurfaceGrid(np.linspace(0.0, u_star, grid_n + 1),
                            np.linspace(0.0, u_star + R, grid_n + 1))
    q_vals = np.array([[q_fn(t, y) for y in q_grid.y_nodes]
                       for t in q_grid.t_nodes])
    qbar_vals = np.array([[qbar_fn(t, y) for y in qbar_grid.y_nodes]
                          for t in qbar_grid.t_nodes])
    return OptimalPath(
        tilt=tilt,
        surface_qbar=OccupancySurface(qbar_grid, qbar_vals, 1.0, True),
        surface_q=OccupancySurface(q_grid, q_vals, 1.0, True),
        mu=mu, u_star=u_star, rate=rate,
        constraint_value=quad.G(mu),
        qbar_fn=qbar_fn, q_fn=q_fn)


# ---------------------------------------------------------------------------
# ruin surfaces: numeric route plus the closed form for the flat-payoff
# uniform-service instance
# ---------------------------------------------------------------------------

def _ruin_surface_fns(rp: RuinProblem, u: float, mu: float):
    """(q_fn, qbar_fn) evaluating the tilted optimal surface pointwise.

    A customer arriving at s <= u with requirement w is counted at
    (t, y) when s + w > y + t; the death branch (s + w <= u) carries
    weight exp(mu h1), survivors carry exp(mu h2(s, u)), and arrivals
    after u follow the typical density.
    """
    svc = rp.svc
    pdf, tail = svc.pdf, svc.tail
    h1, h2 = rp.h1, rp.h2
    wmax = svc.support_bound if svc.support_bound is not None \
        else svc.quantile(1 - 1e-10)

    def q_fn(t: float, y: float, order: int = 24) -> float:
        if t <= 0:
            return 0.0
        s_hi = min(t, u)
        breaks = ([y + t - bk for bk in svc.breakpoints]
                  + [u - bk for bk in svc.breakpoints] + [y + t])
        sn, sw = panel_nodes(0.0, s_hi, breaks, order=order)
        thr = max(y + t, u)  # survivors need w > thr - s
        total = 0.0
        for s, wgt in zip(sn, sw):
            acc = math.exp(mu * float(h2(s, u))) * float(tail(thr - s))
            a_lo = max(y + t - s, 0.0)
            a_hi = min(u - s, wmax)
            if a_hi > a_lo:
                wn, ww = panel_nodes(a_lo, a_hi, svc.breakpoints, order=order)
                vals = pdf(wn) * np.exp(mu * np.asarray(
                    h1(np.full_like(wn, s), s + wn), dtype=float))
                acc += float(ww @ vals)
            total += wgt * acc
        if t > u:
            # typical arrivals on (u, t] still present after y at t
            total += (tail_integral_signed(svc, y + t - u)
                      - tail_integral_signed(svc, y))
        return total

    def qbar_fn(t: float, y: float) -> float:
        if y >= t:
            return q_fn(t, y - t)
        base = q_fn(y, 0.0)
        sn, sw = panel_nodes(y, t, [u] + [u - bk for bk in svc.breakpoints],
                             order=24)
        flow = 0.0
        for s, wgt in zip(sn, sw):
            if s > u:
                flow += wgt * 1.0
                continue
            hi = min(u - s, wmax)
            wn, ww = panel_nodes(0.0, hi, svc.breakpoints, order=24)
            dead = float(ww @ (pdf(wn) * np.exp(mu * np.asarray(
                h1(np.full_like(wn, s), s + wn), dtype=float))))
            alive = float(np.exp(mu * float(h2(s, u))) * tail(u - s))
            flow += wgt * (dead + alive)
        return base + flow

    return q_fn, qbar_fn


def insurance_surface(svc: ServiceLaw, b: float, prem: float, mu: float,
                      u: float, grid: SurfaceGrid, delta: float = 0.0,
                      closed_form: str = "auto") -> OccupancySurface:
    """Optimal ruin surface q(t, y) for whole-life payoffs.

    The flat-payoff instance (delta = 0, prem > 0, uniform service on
    [0, 1], u <= 1) evaluates in closed form; anything else integrates
    the tilted density numerically.  closed_form in {"auto", "always",
    "never"}."""
    is_flat = (delta == 0.0 and prem > 0.0 and svc.name == "uniform"
               and svc.spec.get("a") == 0.0 and svc.spec.get("b") == 1.0
               and u <= 1.0 + 1e-12)
    if closed_form == "always" and not is_flat:
        raise InfeasibleError("closed form only covers the flat-payoff "
                              "uniform-service instance")
    if closed_form != "never" and is_flat:
        vals = np.array([[_flat_ruin_q(b, prem, mu, u, t, y)
                          for y in grid.y_nodes] for t in grid.t_nodes])
        return OccupancySurface(grid=grid, values=vals, lam=1.0, scaled=True)
    h1, h2 = whole_life_payoffs(b, prem, delta)
    rp = RuinProblem(svc=svc, h1=h1, h2=h2, x=1.0, T=max(u, grid.t_nodes[-1]))
    q_fn, _ = _ruin_surface_fns(rp, u, mu)
    vals = np.array([[q_fn(t, y) for y in grid.y_nodes] for t in grid.t_nodes])
    return OccupancySurface(grid=grid, values=vals, lam=1.0, scaled=True)


def _flat_ruin_q(b: float, prem: float, mu: float, u: float,
                 t: float, y: float) -> float:
    """Closed-form q(t, y): uniform[0,1] service, zero discounting.

    Elementary integrals of exp(mu(b - p w)) over the death triangle and
    exp(-mu p (u - s)) tail(...) over the survivor strip.
    """
    if t <= 0:
        return 0.0
    g = mu * prem
    t_eff = min(t, u)
    out = 0.0
    if y + t <= u:
        # deaths between y + t and u
        out += (math.exp(mu * b) / g ** 2
                * (math.exp(g * t_eff) - 1.0)
                * (math.exp(-g * (y + t)) - math.exp(-g * u)))
        # survivors at u with residual beyond the horizon
        out += math.exp(-g * u) * ((1.0 - u) * (math.exp(g * t_eff) - 1.0) / g
                                   + t_eff * math.exp(g * t_eff) / g
                                   - (math.exp(g * t_eff) - 1.0) / g ** 2)
    else:
        s0 = max(0.0, y + t - 1.0)
        s1 = t_eff
        if s1 > s0:
            c = 1.0 - y - t
            out += math.exp(-g * u) * (
                c * (math.exp(g * s1) - math.exp(g * s0)) / g
                + (s1 * math.exp(g * s1) - s0 * math.exp(g * s0)) / g
                - (math.exp(g * s1) - math.exp(g * s0)) / g ** 2)
    if t > u:
        out += (tail_integral_signed(_UNIT_UNIFORM, y + t - u)
                - tail_integral_signed(_UNIT_UNIFORM, y))
    return out


# ---------------------------------------------------------------------------
# local optimality smoke test
# ---------------------------------------------------------------------------

def local_optimality_gap(path: OptimalPath, svc: ServiceLaw,
                         constraint_kernel: Callable[[Array, Array], Array],
                         n_perturbations: int = 50, eps: float = 1e-3,
                         seed: int = 0, n_cells: int = 120) -> float:
    """Largest rate decrease over random constraint-preserving
    perturbations of the solved tilt (positive means a perturbation
    beat the solution; the solver should keep this below ~1e-8).

    Perturbations live on a midpoint grid over [0, u*] x [0, R], vanish
    off the service support, are projected onto the constraint's null
    space, and are scaled to keep the tilt nonnegative.
    """
    u, R = path.u_star, path.tilt.r_max
    ht, hr = u / n_cells, R / n_cells
    tm = (np.arange(n_cells) + 0.5) * ht
    rm = (np.arange(n_cells) + 0.5) * hr
    Tm, Rm = np.meshgrid(tm, rm, indexing="ij")
    area = ht * hr
    V = np.asarray(path.tilt.eval(Tm, Rm), dtype=float)
    F = np.asarray(svc.pdf(Rm), dtype=float)
    C = np.asarray(constraint_kernel(Tm, Rm), dtype=float)
    support = F > 0

    def disc_rate(vals: Array) -> float:
        out = np.zeros_like(vals)
        pos = support & (vals > 0)
        out[pos] = vals[pos] * (np.log(vals[pos] / F[pos]) - 1.0)
        return float(out.sum() * area)

    base = disc_rate(V)
    c_norm = float((C * C)[support].sum() * area)
    rng = np.random.default_rng(seed)
    worst = -math.inf
    for _ in range(n_perturbations):
        W = rng.normal(size=V.shape)
        W[~support] = 0.0
        W -= C * (float((C * W)[support].sum() * area) / c_norm)
        W[~support] = 0.0
        scale = np.max(np.abs(eps * W)[support] / np.maximum(V[support], 1e-12))
        if scale > 0.5:
            W = W * (0.5 / scale)
        delta_rate = disc_rate(V + eps * W) - base
        worst = max(worst, -delta_rate)
    return worst
