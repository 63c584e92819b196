"""Large-deviations rate functionals for the occupancy surface.

Three evaluation routes, matching how the variational theory reduces in
practice:

* ``poisson_rate`` -- the closed-form relative-entropy functional that
  the path-space supremum collapses to under Poisson arrivals,
      integral of v (log(v / (rate f)) - 1) + rate * T,
  evaluated by panel quadrature on the tilt density v.

* ``finite_dim_rate`` -- the concave maximization over cell exponents
  for the mixed increments of the surface on a rectangular partition;
  works for any renewal arrival stream via its psi evaluator.  This is
  the computable ground truth: its supremum over partitions recovers
  the path functional.

* ``truncated_rate`` -- the functional of the system that discards
  service requirements above K; nondecreasing in K with limit the full
  functional.

The tilt density v(t, r) >= 0 is the decision variable everywhere: the
occupation density of arrivals at time t bringing service requirement r
(equivalently minus the mixed second derivative of the surface along
the shifted coordinates).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import PartitionError
from .laws import ServiceLaw
from .psi import PsiEvaluator, TruncatedPsi, truncated_evaluator
from .quadrature import panel_nodes
from .simulate import OccupancySurface, SurfaceGrid, _node_indices

Array = np.ndarray

INFINITE = math.inf


# ---------------------------------------------------------------------------
# tilt densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TiltDensity:
    """Nonnegative occupation density v(t, r) on [0, T] x [0, R].

    `values` samples v on the stored grid.  When `fn` is present it is
    the authoritative representation (vectorized over numpy arrays) and
    quadrature uses it; `r_kinks` lists static discontinuity locations
    in r, `r_breaks(t)` adds moving ones (e.g. an optimal-path seam),
    and `t_breaks` lists discontinuity locations in t.
    """

    t_nodes: Array
    r_nodes: Array
    values: Array
    fn: Optional[Callable[[Array, Array], Array]] = None
    r_kinks: tuple[float, ...] = ()
    t_breaks: tuple[float, ...] = ()
    r_breaks: Optional[Callable[[float], tuple]] = None

    @property
    def t_max(self) -> float:
        return float(self.t_nodes[-1])

    @property
    def r_max(self) -> float:
        return float(self.r_nodes[-1])

    @classmethod
    def from_function(cls, fn, T: float, R: float, nt: int = 64, nr: int = 64,
                      r_kinks: Sequence[float] = (), t_breaks: Sequence[float] = (),
                      r_breaks=None) -> "TiltDensity":
        t = np.linspace(0.0, T, nt + 1)
        r = np.linspace(0.0, R, nr + 1)
        vals = np.asarray(fn(t[:, None], r[None, :]), dtype=float)
        vals = np.broadcast_to(vals, (len(t), len(r))).copy()
        return cls(t_nodes=t, r_nodes=r, values=vals, fn=fn,
                   r_kinks=tuple(float(b) for b in r_kinks),
                   t_breaks=tuple(float(b) for b in t_breaks),
                   r_breaks=r_breaks)

    @classmethod
    def from_grid(cls, t_nodes, r_nodes, values) -> "TiltDensity":
        t = np.asarray(t_nodes, dtype=float)
        r = np.asarray(r_nodes, dtype=float)
        vals = np.asarray(values, dtype=float)
        if vals.shape != (len(t), len(r)):
            raise PartitionError("tilt values shape must match node counts")
        if np.any(vals < -1e-12):
            raise PartitionError("tilt density must be nonnegative")
        return cls(t_nodes=t, r_nodes=r, values=np.maximum(vals, 0.0))

    def eval(self, t, r) -> Array:
        """Pointwise v; falls back to nearest-node grid lookup without fn."""
        if self.fn is not None:
            return np.asarray(self.fn(np.asarray(t, float), np.asarray(r, float)),
                              dtype=float)
        ti = np.clip(np.searchsorted(self.t_nodes, t), 0, len(self.t_nodes) - 1)
        ri = np.clip(np.searchsorted(self.r_nodes, r), 0, len(self.r_nodes) - 1)
        return self.values[ti, ri]

    def all_r_breaks(self, t: float) -> tuple:
        moving = self.r_breaks(t) if self.r_breaks is not None else ()
        return tuple(self.r_kinks) + tuple(moving)

    def mass(self) -> float:
        """Total integral of v (trapezoid on the stored grid when no fn)."""
        if self.fn is None:
            return float(np.trapezoid(np.trapezoid(self.values, self.r_nodes,
                                                   axis=1), self.t_nodes))
        total = 0.0
        tn, tw = panel_nodes(0.0, self.t_max, self.t_breaks, order=24)
        for t, wt in zip(tn, tw):
            rn, rw = panel_nodes(0.0, self.r_max, self.all_r_breaks(t), order=24)
            total += wt * float(rw @ self.eval(np.full_like(rn, t), rn))
        return total


def lln_tilt(svc: ServiceLaw, T: float, R: Optional[float] = None,
             arrival_rate: float = 1.0) -> TiltDensity:
    """The typical (zero-cost) tilt: v(t, r) = arrival_rate * f(r)."""
    if svc.pdf is None:
        raise PartitionError("law-of-large-numbers tilt needs a service density")
    R = R if R is not None else (svc.support_bound or svc.quantile(1 - 1e-12))
    pdf = svc.pdf

    def fn(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        return arrival_rate * pdf(r)

    return TiltDensity.from_function(fn, T, R, r_kinks=svc.breakpoints)


def phi_truncate(v: TiltDensity, K: float) -> TiltDensity:
    """Zero the tilt beyond service requirement K."""
    if K <= 0:
        raise PartitionError("phi_truncate needs K > 0")
    if K >= v.r_max:
        return v
    mask_vals = v.values * (v.r_nodes[None, :] <= K)
    if v.fn is None:
        return TiltDensity(t_nodes=v.t_nodes, r_nodes=v.r_nodes, values=mask_vals)
    base = v.fn

    def fn(t, r):
        t, r = np.broadcast_arrays(np.asarray(t, float), np.asarray(r, float))
        return np.where(r <= K, base(t, r), 0.0)

    return TiltDensity(t_nodes=v.t_nodes, r_nodes=v.r_nodes, values=mask_vals,
                       fn=fn, r_kinks=tuple(v.r_kinks) + (float(K),),
                       t_breaks=v.t_breaks, r_breaks=v.r_breaks)


# ---------------------------------------------------------------------------
# surface reconstruction from a tilt
# ---------------------------------------------------------------------------

def _inner_r_integral(v: TiltDensity, t: float, lo: float, order: int) -> float:
    """integral over r in [max(lo,0), R] of v(t, .)"""
    lo = max(lo, 0.0)
    rn, rw = panel_nodes(lo, v.r_max, v.all_r_breaks(t), order=order)
    if rn.size == 0:
        return 0.0
    return float(rw @ v.eval(np.full_like(rn, t), rn))


def _inner_r_integral_grid(v: TiltDensity, ti: int, lo: float) -> float:
    """Trapezoid over r in [max(lo,0), R] of grid-sampled v at t-node ti."""
    r, vals = v.r_nodes, v.values[ti]
    lo = max(lo, 0.0)
    if lo >= r[-1]:
        return 0.0
    j = int(np.searchsorted(r, lo))
    if j == 0:
        return float(np.trapezoid(vals, r))
    vlo = float(np.interp(lo, r, vals))
    rr = np.concatenate([[lo], r[j:]])
    vv = np.concatenate([[vlo], vals[j:]])
    return float(np.trapezoid(vv, rr))


def qbar_from_tilt(v: TiltDensity, t: float, y: float, order: int = 24) -> float:
    """Surface value from the tilt: integral over s in [0, t], r > y - s.

    Valid for all (t, y): for y < t the inner lower limit clips at 0,
    which reproduces the wedge extension automatically.
    """
    if t <= 0:
        return 0.0
    outer_breaks = set(v.t_breaks)
    outer_breaks.add(y)
    for b in v.r_kinks:
        outer_breaks.add(y - b)
    sn, sw = panel_nodes(0.0, t, outer_breaks, order=order)
    total = 0.0
    for s, w in zip(sn, sw):
        total += w * _inner_r_integral(v, s, y - s, order)
    return total


def surface_from_tilt(v: TiltDensity, grid: Optional[SurfaceGrid] = None,
                      order: int = 16) -> OccupancySurface:
    """Cumulative quadrature of the tilt onto an occupancy surface."""
    if grid is None:
        grid = SurfaceGrid(v.t_nodes, np.unique(np.concatenate([v.t_nodes,
                                                                v.t_max + v.r_nodes])))
    t_nodes, y_nodes = grid.t_nodes, grid.y_nodes
    if v.fn is None:
        out = _surface_from_grid_tilt(v, t_nodes, y_nodes)
    else:
        out = np.zeros((len(t_nodes), len(y_nodes)))
        for j, y in enumerate(y_nodes):
            breaks = set(v.t_breaks)
            breaks.add(y)
            for b in v.r_kinks:
                breaks.add(y - b)
            acc = 0.0
            for i in range(1, len(t_nodes)):
                sn, sw = panel_nodes(t_nodes[i - 1], t_nodes[i], breaks, order=order)
                acc += sum(w * _inner_r_integral(v, s, y - s, order)
                           for s, w in zip(sn, sw))
                out[i, j] = acc
    return OccupancySurface(grid=grid, values=np.maximum(out, 0.0),
                            lam=1.0, scaled=True)


def _surface_from_grid_tilt(v: TiltDensity, t_nodes: Array, y_nodes: Array) -> Array:
    inner = np.zeros((len(v.t_nodes), len(y_nodes)))
    for ti in range(len(v.t_nodes)):
        for j, y in enumerate(y_nodes):
            inner[ti, j] = _inner_r_integral_grid(v, ti, y - v.t_nodes[ti])
    out = np.zeros((len(t_nodes), len(y_nodes)))
    for i, t in enumerate(t_nodes):
        if t <= 0:
            continue
        mask = v.t_nodes <= t + 1e-12
        out[i] = np.trapezoid(inner[mask], v.t_nodes[mask], axis=0)
    return out


# ---------------------------------------------------------------------------
# closed-form entropy functional (Poisson arrivals)
# ---------------------------------------------------------------------------

def _entropy_integrand(vv: Array, ff: Array, arrival_rate: float) -> Array:
    """v (log(v / (rate f)) - 1) with 0 log 0 = 0; +inf where f = 0 < v."""
    out = np.zeros_like(vv)
    pos = vv > 1e-300
    bad = pos & (ff <= 0.0)
    if np.any(bad):
        return np.full_like(vv, INFINITE)
    ok = pos & (ff > 0.0)
    out[ok] = vv[ok] * (np.log(vv[ok] / (arrival_rate * ff[ok])) - 1.0)
    return out


def poisson_rate(v: TiltDensity, svc: ServiceLaw, T: float,
                 arrival_rate: float = 1.0, order: int = 24,
                 r_cap: Optional[float] = None) -> float:
    """Relative-entropy rate of the tilt under Poisson arrivals.

    Returns INFINITE when the tilt puts mass where the service density
    vanishes.  `r_cap` restricts the r-integration (used by the
    truncated functional); the additive constant is then
    arrival_rate * T * F(r_cap).
    """
    if svc.pdf is None:
        return INFINITE if v.mass() > 1e-12 else arrival_rate * T
    pdf = svc.pdf
    cap = v.r_max if r_cap is None else min(r_cap, v.r_max)
    const = arrival_rate * T * (float(svc.cdf(cap)) if r_cap is not None else 1.0)

    if v.fn is None:
        return _poisson_rate_grid(v, svc, T, arrival_rate, cap, const)

    t_hi = min(T, v.t_max)
    t_breaks = set(v.t_breaks)
    if r_cap is not None:
        # the integrand kinks in t wherever a moving r-break crosses the cap
        t_breaks.update(_break_crossings(v, cap, t_hi))
    tn, tw = panel_nodes(0.0, t_hi, t_breaks, order=order)
    total = 0.0
    for t, wt in zip(tn, tw):
        rn, rw = panel_nodes(0.0, cap, v.all_r_breaks(t), order=order)
        if rn.size == 0:
            continue
        vals = _entropy_integrand(v.eval(np.full_like(rn, t), rn), pdf(rn),
                                  arrival_rate)
        if np.any(np.isinf(vals)):
            return INFINITE
        total += wt * float(rw @ vals)
    return total + const


def _break_crossings(v: TiltDensity, level: float, t_hi: float,
                     samples: int = 512) -> list:
    """t-locations where a moving r-break curve of the tilt crosses `level`.

    Each branch of r_breaks(t) is sampled and crossings are refined by
    bisection; branches are matched by position, so this assumes a
    t-independent branch count (true for seam-style tilts).
    """
    if v.r_breaks is None:
        return []
    ts = np.linspace(0.0, t_hi, samples + 1)
    rows = [v.r_breaks(float(t)) for t in ts]
    nb = min(len(r) for r in rows)
    out = []
    for k in range(nb):
        vals = np.array([r[k] - level for r in rows])
        sign_change = np.where(np.diff(np.sign(vals)) != 0)[0]
        for idx in sign_change:
            lo, hi = ts[idx], ts[idx + 1]
            flo = v.r_breaks(lo)[k] - level
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                fmid = v.r_breaks(mid)[k] - level
                if (fmid > 0) == (flo > 0):
                    lo, flo = mid, fmid
                else:
                    hi = mid
            out.append(0.5 * (lo + hi))
    return out


def _poisson_rate_grid(v: TiltDensity, svc: ServiceLaw, T: float,
                       arrival_rate: float, cap: float, const: float) -> float:
    keep = v.r_nodes <= cap + 1e-12
    r = v.r_nodes[keep]
    ff = np.asarray(svc.pdf(r), dtype=float)
    rows = np.empty(len(v.t_nodes))
    for i in range(len(v.t_nodes)):
        vals = _entropy_integrand(v.values[i, keep], ff, arrival_rate)
        if np.any(np.isinf(vals)):
            return INFINITE
        rows[i] = np.trapezoid(vals, r)
    mask = v.t_nodes <= T + 1e-12
    return float(np.trapezoid(rows[mask], v.t_nodes[mask])) + const


# ---------------------------------------------------------------------------
# increments on rectangular partitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IncrementTable:
    """Mixed second differences of a surface on a rectangular partition.

    t_part = [0 = t_0 < ... < t_m]; y_part = [0 = y_0 < ... < y_last]
    with y_last = inf allowed (surface vanishes there).  deltas[i, j] is
    the mass of cell (t_i, t_{i+1}] x (y_j, y_{j+1}].
    """

    t_part: Array
    y_part: Array
    deltas: Array

    def __post_init__(self):
        t = np.asarray(self.t_part, dtype=float)
        y = np.asarray(self.y_part, dtype=float)
        d = np.asarray(self.deltas, dtype=float)
        object.__setattr__(self, "t_part", t)
        object.__setattr__(self, "y_part", y)
        object.__setattr__(self, "deltas", d)
        if len(t) < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise PartitionError("t_part must be 0 = t_0 < ... < t_m")
        if len(y) < 2 or y[0] != 0.0 or np.any(np.diff(y) <= 0):
            raise PartitionError("y_part must be 0 = y_0 < ... increasing")
        if d.shape != (len(t) - 1, len(y) - 1):
            raise PartitionError("deltas shape must be (len(t_part)-1, len(y_part)-1)")

    def reconstruct(self) -> Array:
        """Surface values at partition nodes: sum of deltas with l <= i, r > j."""
        m, nc = self.deltas.shape
        out = np.zeros((m + 1, len(self.y_part)))
        cum_t = np.cumsum(self.deltas, axis=0)
        tail = np.concatenate([np.cumsum(cum_t[:, ::-1], axis=1)[:, ::-1],
                               np.zeros((m, 1))], axis=1)
        out[1:, :] = tail
        return out


def increments_from_surface(surf: OccupancySurface, t_part, y_part) -> IncrementTable:
    """Exact mixed differences of a built surface; nodes must be on the grid."""
    t_part = np.asarray(t_part, dtype=float)
    y_part = np.asarray(y_part, dtype=float)
    try:
        ti = _node_indices(surf.grid.t_nodes, t_part, "t")
    except Exception as exc:
        raise PartitionError(f"t partition not on grid: {exc}") from exc
    vals = np.empty((len(t_part), len(y_part)))
    finite = np.isfinite(y_part)
    try:
        yi = _node_indices(surf.grid.y_nodes, y_part[finite], "y")
    except Exception as exc:
        raise PartitionError(f"y partition not on grid: {exc}") from exc
    sub = surf.values[np.ix_(ti, yi)]
    vals[:, finite] = sub
    vals[:, ~finite] = 0.0
    return _table_from_node_values(t_part, y_part, vals)


def increments_from_function(qbar: Callable[[float, float], float],
                             t_part, y_part) -> IncrementTable:
    """Mixed differences of a surface given as a callable (inf maps to 0)."""
    t_part = np.asarray(t_part, dtype=float)
    y_part = np.asarray(y_part, dtype=float)
    vals = np.array([[qbar(t, y) if np.isfinite(y) else 0.0 for y in y_part]
                     for t in t_part])
    return _table_from_node_values(t_part, y_part, vals)


def _table_from_node_values(t_part: Array, y_part: Array, vals: Array) -> IncrementTable:
    deltas = -(vals[1:, 1:] - vals[1:, :-1] - vals[:-1, 1:] + vals[:-1, :-1])
    return IncrementTable(t_part=t_part, y_part=y_part, deltas=deltas)


def cell_masses(t_part, y_part, svc: ServiceLaw, order: int = 16) -> Array:
    """Mean cell masses per unit arrival rate:
    integral over u in (t_i, t_{i+1}] of P(y_j - u < V <= y_{j+1} - u)."""
    t_part = np.asarray(t_part, dtype=float)
    y_part = np.asarray(y_part, dtype=float)
    m, nc = len(t_part) - 1, len(y_part) - 1
    out = np.empty((m, nc))
    for i in range(m):
        un, uw = panel_nodes(t_part[i], t_part[i + 1],
                             _u_breaks(t_part[i], t_part[i + 1], y_part, svc),
                             order=order)
        p = _cell_probs(un, y_part, svc)
        out[i] = uw @ p
    return out


def _u_breaks(a: float, b: float, y_part: Array, svc: ServiceLaw) -> list:
    """u-locations in (a, b) where some cdf(y_j - u) has a kink."""
    pts = []
    for y in y_part[np.isfinite(y_part)]:
        for brk in svc.breakpoints:
            pts.append(y - brk)
        pts.append(y)
    return [p for p in pts if a < p < b]


def _cell_probs(u_nodes: Array, y_part: Array, svc: ServiceLaw) -> Array:
    """P(y_j - u < V <= y_{j+1} - u) for each u node and cell."""
    yk = y_part[None, :] - u_nodes[:, None]
    cdf = np.empty_like(yk)
    finite = np.isfinite(yk)
    cdf[finite] = svc.cdf(yk[finite])
    cdf[~finite] = 1.0
    return np.maximum(cdf[:, 1:] - cdf[:, :-1], 0.0)


# ---------------------------------------------------------------------------
# finite-dimensional concave maximization
# ---------------------------------------------------------------------------

@dataclass
class RateResult:
    value: float
    iterations: int = 0
    gradient_norm: float = 0.0
    converged: bool = True

    def to_json_dict(self) -> dict:
        return {"value": "infinite" if math.isinf(self.value) else self.value,
                "iterations": self.iterations,
                "gradient_norm": self.gradient_norm,
                "converged": self.converged}


class _FiniteDimProblem:
    """Precomputed quadrature layout for the partition objective."""

    def __init__(self, table: IncrementTable, ev, svc: ServiceLaw,
                 quad_order: int = 16, deltas: Optional[Array] = None):
        self.table = table
        self.deltas = table.deltas if deltas is None else deltas
        self.ev = ev
        t, y = table.t_part, table.y_part
        self.m, self.ncells = table.deltas.shape
        nodes, weights, row_of = [], [], []
        for i in range(self.m):
            un, uw = panel_nodes(t[i], t[i + 1], _u_breaks(t[i], t[i + 1], y, svc),
                                 order=quad_order)
            nodes.append(un)
            weights.append(uw)
            row_of.append(np.full(len(un), i, dtype=int))
        self.u = np.concatenate(nodes)
        self.w = np.concatenate(weights)
        self.row = np.concatenate(row_of)
        probs = _cell_probs(self.u, y, svc)        # (nq, ncells)
        with np.errstate(divide="ignore"):
            self.logp = np.log(probs)
        self.masses = np.zeros((self.m, self.ncells))
        np.add.at(self.masses, self.row, self.w[:, None] * probs)
        self.total_len = float(t[-1] - t[0])

    def psi_floor(self) -> float:
        """psi at argument -inf: -theta_sup of the arrival cumulant."""
        ev = self.ev
        if isinstance(ev, TruncatedPsi):
            fbar = 1.0 - ev.f_at_K
            if fbar > 0.0:
                return float(ev.base.psi(math.log(fbar)))
            ev = ev.base
        return -float(ev.law.theta_sup)

    def value_grad(self, theta: Array) -> tuple[float, Array]:
        """Objective sum(theta*delta) - Lambda(theta) and its gradient.

        theta entries may be -inf (cell excluded from the log-sum).
        """
        a = theta[self.row] + self.logp                    # (nq, ncells)
        mx = np.max(a, axis=1)
        finite = np.isfinite(mx)
        lse = np.full(len(a), -np.inf)
        softmax = np.zeros_like(a)
        if np.any(finite):
            af = a[finite] - mx[finite, None]
            s = np.exp(af)
            z = s.sum(axis=1)
            lse[finite] = mx[finite] + np.log(z)
            softmax[finite] = s / z[:, None]
        psi = np.empty(len(a))
        psip = np.zeros(len(a))
        if np.any(finite):
            psi[finite] = np.asarray(self.ev.psi(lse[finite]), dtype=float)
            psip[finite] = np.asarray(self.ev.psi_prime(lse[finite]), dtype=float)
        if np.any(~finite):
            psi[~finite] = self.psi_floor()
        lam_val = float(self.w @ psi)
        grad_lam = np.zeros((self.m, self.ncells))
        np.add.at(grad_lam, self.row, (self.w * psip)[:, None] * softmax)
        with np.errstate(invalid="ignore"):
            lin = np.where(self.deltas == 0.0, 0.0, theta * self.deltas)
        value = float(lin.sum()) - lam_val
        return value, self.deltas - grad_lam


def finite_dim_objective(theta, table: IncrementTable, ev, svc: ServiceLaw,
                         quad_order: int = 16) -> tuple[float, Array]:
    """Partition objective and analytic gradient at a full finite theta."""
    theta = np.asarray(theta, dtype=float)
    prob = _FiniteDimProblem(table, ev, svc, quad_order)
    if theta.shape != table.deltas.shape:
        raise PartitionError("theta shape must match deltas")
    return prob.value_grad(theta)


def finite_dim_rate(table: IncrementTable, ev, svc: ServiceLaw, *,
                    gtol: float = 1e-8, ceiling: float = 1e6,
                    max_iter: int = 50000, quad_order: int = 16) -> float:
    return finite_dim_rate_detailed(table, ev, svc, gtol=gtol, ceiling=ceiling,
                                    max_iter=max_iter, quad_order=quad_order).value


def finite_dim_rate_detailed(table: IncrementTable, ev, svc: ServiceLaw, *,
                             gtol: float = 1e-8, ceiling: float = 1e6,
                             max_iter: int = 50000,
                             quad_order: int = 16) -> RateResult:
    """Gradient ascent with backtracking on the partition objective.

    Cells with zero mass take their limiting exponent (excluded from the
    log-sum): the supremum over them is attained in the limit.  Mass on
    a zero-probability cell, negative cell mass, or an ascent ray that
    pushes the objective past `ceiling` certify an infinite rate.
    Increment magnitudes at the quadrature-noise floor (1e-10) are
    treated as exact zeros.
    """
    deltas = np.where(np.abs(table.deltas) <= 1e-10, 0.0, table.deltas)
    prob = _FiniteDimProblem(table, ev, svc, quad_order, deltas=deltas)
    if np.any(deltas < 0.0):
        return RateResult(INFINITE)
    if np.any((deltas > 0.0) & (prob.masses <= 1e-300)):
        return RateResult(INFINITE)

    active = (deltas > 0.0) & (prob.masses > 0.0)
    # warm start at the per-cell exponent that is exact under Poisson
    # arrivals and a sensible initial guess otherwise
    with np.errstate(divide="ignore", invalid="ignore"):
        warm = np.log(np.where(active, deltas, 1.0)
                      / np.where(active, prob.masses, 1.0))
    theta = np.where(active, warm, -np.inf)
    value, grad = prob.value_grad(theta)
    step = 1.0
    for it in range(1, max_iter + 1):
        g = np.where(active, grad, 0.0)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < gtol:
            return RateResult(value, it, gnorm, True)
        if value > ceiling:
            return RateResult(INFINITE, it, gnorm, True)
        gsq = float((g * g).sum())
        alpha = min(step * 2.0, 1e3)
        while alpha > 1e-18:
            cand = np.where(active, theta + alpha * g, theta)
            cval, cgrad = prob.value_grad(cand)
            if cval >= value + 1e-4 * alpha * gsq:
                break
            alpha *= 0.5
        else:
            return RateResult(value, it, gnorm, False)
        theta, value, grad, step = cand, cval, cgrad, alpha
    return RateResult(value, max_iter, float(np.max(np.abs(grad))), False)


# ---------------------------------------------------------------------------
# truncated functional
# ---------------------------------------------------------------------------

def truncated_rate(v: TiltDensity, ev: PsiEvaluator, svc: ServiceLaw, K: float,
                   T: float, partition_cells: int = 12) -> float:
    """Rate functional of the system that drops service times above K.

    Poisson arrivals evaluate in closed form (entropy restricted to
    r <= K plus rate * T * F(K)); general renewal arrivals evaluate the
    finite-dimensional objective of the truncated system on a default
    partition, which approximates the functional from below.
    """
    if K <= 0:
        raise PartitionError("truncated_rate needs K > 0")
    if ev.law.name == "exponential":
        rate = ev.law.spec.get("rate", 1.0)
        return poisson_rate(v, svc, T, arrival_rate=rate, r_cap=K)

    vK = phi_truncate(v, K)
    svc_K = _truncate_service(svc, K)
    ev_K = truncated_evaluator(ev, svc, K)
    t_part = np.linspace(0.0, T, partition_cells + 1)
    y_hi = T + min(K, v.r_max)
    y_part = np.concatenate([np.linspace(0.0, y_hi, partition_cells + 1), [np.inf]])
    table = increments_from_function(lambda t, y: qbar_from_tilt(vK, t, y),
                                     t_part, y_part)
    return finite_dim_rate(table, ev_K, svc_K)


def _truncate_service(svc: ServiceLaw, K: float) -> ServiceLaw:
    from .laws import service_truncate
    if svc.support_bound is not None and K >= svc.support_bound:
        return svc
    return service_truncate(svc, K)
