"""Event-stream simulation and the two-parameter occupancy surface.

The state descriptor is the count of customers who arrived by time t and
are still present after time y.  It is stored as exact step-function
counts sampled on a rectangular grid; the value at (t_i, y_j) is the
count itself, so grid evaluations are exact, not interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GridError, RangeError
from .laws import RenewalLaw, ServiceLaw

Array = np.ndarray


def stream(seed, index: Optional[int] = None) -> np.random.Generator:
    """Generator keyed by (seed, replication index).

    Streams for distinct indices are independent and order-independent,
    so replications can run in any order or in parallel.
    """
    if index is None:
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence((int(seed), int(index))))


# ---------------------------------------------------------------------------
# event logs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EventLog:
    """Scaled arrival epochs (sorted, in [0, T]) with aligned service times."""

    lam: float
    horizon: float
    arrivals: Array
    services: Array
    seed: object = None

    def __post_init__(self):
        if len(self.arrivals) != len(self.services):
            raise ValueError("arrivals and services must align")

    def __len__(self) -> int:
        return len(self.arrivals)

    @property
    def departures(self) -> Array:
        return self.arrivals + self.services


def simulate(arr: RenewalLaw, svc: ServiceLaw, lam: float, T: float,
             seed, index: Optional[int] = None) -> EventLog:
    """Run the lam-scaled system on [0, T].

    Arrival epochs are partial sums of base interarrivals divided by lam;
    service requirements are drawn i.i.d.  Deterministic given
    (seed, index).
    """
    if lam <= 0 or T < 0:
        raise ValueError("need lam > 0 and T >= 0")
    rng = stream(seed, index)
    budget = lam * T
    chunk = max(16, int(budget / arr.mean * 1.2 + 10.0 * np.sqrt(budget / arr.mean + 1.0)))
    sums = np.empty(0)
    total = 0.0
    while True:
        draw = arr.sample(rng, chunk)
        sums = np.concatenate([sums, total + np.cumsum(draw)])
        total = float(sums[-1]) if len(sums) else 0.0
        if total > budget or T == 0.0:
            break
    n = int(np.searchsorted(sums, budget, side="right"))
    epochs = sums[:n] / lam
    services = svc.sample(rng, n)
    return EventLog(lam=lam, horizon=T, arrivals=epochs, services=services,
                    seed=seed if index is None else (seed, index))


def truncate_events(log: EventLog, K: float) -> EventLog:
    """Drop customers whose service requirement exceeds K."""
    if K <= 0:
        raise ValueError("need K > 0")
    keep = log.services <= K
    return EventLog(lam=log.lam, horizon=log.horizon,
                    arrivals=log.arrivals[keep], services=log.services[keep],
                    seed=log.seed)


# ---------------------------------------------------------------------------
# surfaces
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SurfaceGrid:
    """Strictly increasing node sets starting at 0 on both axes."""

    t_nodes: Array
    y_nodes: Array

    def __post_init__(self):
        t, y = np.asarray(self.t_nodes, float), np.asarray(self.y_nodes, float)
        object.__setattr__(self, "t_nodes", t)
        object.__setattr__(self, "y_nodes", y)
        for name, nodes in (("t_nodes", t), ("y_nodes", y)):
            if len(nodes) < 1 or nodes[0] != 0.0 or np.any(np.diff(nodes) <= 0):
                raise GridError(f"{name} must start at 0 and increase strictly")

    @classmethod
    def regular(cls, T: float, Y_max: float, nt: int, ny: int) -> "SurfaceGrid":
        return cls(np.linspace(0.0, T, nt + 1), np.linspace(0.0, Y_max, ny + 1))

    @classmethod
    def aligned(cls, T: float, h: float, Y_max: float) -> "SurfaceGrid":
        """Shared spacing h on both axes, so t + u lands on y-nodes."""
        nt = int(round(T / h))
        ny = int(round(Y_max / h))
        base = h * np.arange(max(nt, ny) + 1)
        return cls(base[:nt + 1], base[:ny + 1])

    @staticmethod
    def default_for(log: "EventLog", svc: ServiceLaw, nt: int = 64) -> "SurfaceGrid":
        """Aligned grid over [0, T] x [0, T + service quantile ceiling]."""
        T = log.horizon
        q = svc.support_bound if svc.support_bound is not None else svc.quantile(0.9999)
        h = T / nt
        return SurfaceGrid.aligned(T, h, T + (np.ceil(q / h) + 1) * h)


@dataclass(frozen=True)
class OccupancySurface:
    """Counts (or lam-scaled counts) on a SurfaceGrid.

    values[i, j] = number of customers arrived by t_i still present
    after y_j.  Column j = 0 is the arrival counting process; y-nodes
    beyond the grid ceiling are not represented (the last column records
    the mass that leaves the window).
    """

    grid: SurfaceGrid
    values: Array
    lam: float = 1.0
    scaled: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.shape != (len(self.grid.t_nodes), len(self.grid.y_nodes)):
            raise GridError("values shape must be (len(t_nodes), len(y_nodes))")

    def value_at(self, t: float, y: float) -> float:
        i = _node_index(self.grid.t_nodes, t, "t")
        j = _node_index(self.grid.y_nodes, y, "y")
        return float(self.values[i, j])

    def scale(self) -> "OccupancySurface":
        if self.scaled:
            return self
        return OccupancySurface(self.grid, self.values / self.lam, self.lam, True)


def _node_indices(nodes: Array, xs, axis: str, tol: float = 1e-9) -> Array:
    """Snap each x to its grid node; GridError/RangeError when absent."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    j = np.searchsorted(nodes, xs)
    jm = np.clip(j - 1, 0, len(nodes) - 1)
    jp = np.clip(j, 0, len(nodes) - 1)
    dm = np.abs(nodes[jm] - xs)
    dp = np.abs(nodes[jp] - xs)
    best = np.where(dp <= dm, jp, jm)
    bad = np.minimum(dm, dp) > tol * np.maximum(1.0, np.abs(xs))
    if np.any(bad):
        x = float(xs[bad][0])
        if x > nodes[-1] + tol:
            raise RangeError(f"{axis} = {x} beyond built range {nodes[-1]}")
        raise GridError(f"{axis} = {x} is not a grid node")
    return best


def _node_index(nodes: Array, x: float, axis: str, tol: float = 1e-9) -> int:
    return int(_node_indices(nodes, x, axis, tol)[0])


def build_surface(log: EventLog, grid: SurfaceGrid, scaled: bool = False) -> OccupancySurface:
    """Count, per grid node, arrivals a <= t_i with departure a + V > y_j.

    For y < t this evaluates the same indicator, which automatically
    satisfies the wedge identity
    surface(t, y) = surface(min(t,y), y) + N(t) - N(min(t,y)).
    One scatter-add plus two cumulative sums: O(events + grid).
    """
    t_nodes, y_nodes = grid.t_nodes, grid.y_nodes
    m, k = len(t_nodes), len(y_nodes)
    diff = np.zeros((m, k + 1))
    if len(log):
        a, d = log.arrivals, log.departures
        i_start = np.searchsorted(t_nodes, a, side="left")
        j_cut = np.searchsorted(y_nodes, d, side="left")  # columns < j_cut see the customer
        inside = i_start < m
        np.add.at(diff, (i_start[inside], np.zeros(inside.sum(), dtype=int)), 1.0)
        np.add.at(diff, (i_start[inside], j_cut[inside]), -1.0)
    counts = np.cumsum(np.cumsum(diff, axis=0), axis=1)[:, :k]
    if scaled:
        counts = counts / log.lam
    return OccupancySurface(grid=grid, values=counts, lam=log.lam, scaled=scaled)


def residual_view(surf: OccupancySurface,
                  u_nodes: Optional[Sequence[float]] = None) -> OccupancySurface:
    """Resample to residual coordinates: value(t, u) = surface(t, u + t).

    Every t + u must land on a y-node (exact shifted lookup); grids built
    with SurfaceGrid.aligned satisfy this by construction.  RangeError
    when the shift exits the built window.
    """
    t_nodes = surf.grid.t_nodes
    y_nodes = surf.grid.y_nodes
    if u_nodes is None:
        u_max = y_nodes[-1] - t_nodes[-1]
        if u_max < 0:
            raise RangeError("built surface too narrow for any residual view")
        u_nodes = y_nodes[y_nodes <= u_max + 1e-12]
    u_nodes = np.asarray(u_nodes, dtype=float)
    out = np.empty((len(t_nodes), len(u_nodes)))
    for i, t in enumerate(t_nodes):
        out[i] = surf.values[i, _node_indices(y_nodes, t + u_nodes, "t+u")]
    return OccupancySurface(grid=SurfaceGrid(t_nodes, u_nodes), values=out,
                            lam=surf.lam, scaled=surf.scaled)


def counting_processes(surf: OccupancySurface) -> tuple[Array, Array]:
    """Arrival and departure step paths sampled on the t-grid.

    N(t) = surface(t, 0); D(t) = N(t) - surface(t, t).  Requires each
    t-node to appear among the y-nodes.
    """
    t_nodes = surf.grid.t_nodes
    arrivals = surf.values[:, 0].copy()
    cols = _node_indices(surf.grid.y_nodes, t_nodes, "t")
    diag = surf.values[np.arange(len(t_nodes)), cols]
    return arrivals, arrivals - diag


def aggregate_loss(log: EventLog, h1: Callable, h2: Callable,
                   t_nodes: Sequence[float]) -> Array:
    """Running payoff total over the portfolio.

    At each probe time t, customers already departed contribute
    h1(arrival, departure); customers still present contribute
    h2(arrival, t).  Customers who have not arrived contribute nothing.
    """
    t_nodes = np.asarray(t_nodes, dtype=float)
    out = np.zeros(len(t_nodes))
    if not len(log):
        return out
    a, d = log.arrivals, log.departures
    for idx, t in enumerate(t_nodes):
        arrived = a <= t
        done = arrived & (d <= t)
        live = arrived & (d > t)
        s = 0.0
        if done.any():
            s += float(np.sum(h1(a[done], d[done])))
        if live.any():
            s += float(np.sum(h2(a[live], np.full(live.sum(), t))))
        out[idx] = s
    return out
