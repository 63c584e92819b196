"""Most likely path to ruin in a large life-insurance portfolio.

Policyholders arrive as a Poisson stream; each pays premium at rate p
while alive and collects benefit b at death.  The aggregate loss at
time t is the paid benefit minus collected premium.  For b = 1.5,
p = 1, uniform[0,1] lifetimes and ruin level x = 10 by T = 1, the
solver finds the exponentially tilted death-time field, the multiplier
solving G(mu) = x, and the optimal horizon.

Run:  python demos/04_insurance_ruin.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from ldqueue import (
    RuinProblem,
    insurance_surface,
    multiplier_equation_G,
    poisson_rate,
    solve_ruin,
    uniform_service,
    whole_life_payoffs,
)
from ldqueue.simulate import SurfaceGrid
from ldqueue.serialize import write_surface_csv, write_tilt_csv

outdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_output")
outdir.mkdir(parents=True, exist_ok=True)

svc = uniform_service(0, 1)
b, p, x, T = 1.5, 1.0, 10.0, 1.0
h1, h2 = whole_life_payoffs(b, p, 0.0)
problem = RuinProblem(svc=svc, h1=h1, h2=h2, x=x, T=T)

print(f"=== ruin instance: b={b}, p={p}, x={x}, T={T}, uniform lifetimes ===")
print("fluid (typical) loss at T:", multiplier_equation_G(problem, 1.0, 0.0),
      " << x, so ruin is rare")

print("\nG(mu) at the final horizon (strictly increasing):")
for mu in (0.0, 1.0, 2.0, 2.251, 2.5):
    print(f"  G({mu:5.3f}) = {multiplier_equation_G(problem, 1.0, mu):9.4f}")

path = solve_ruin(problem)
print(f"\noptimal horizon   u* = {path.u_star}")
print(f"multiplier        mu = {path.mu:.6f}   (printed datum 2.251)")
print(f"decay rate           = {path.rate:.6f}")
print(f"constraint value  G(mu) = {path.constraint_value:.10f}")
print(f"entropy cross-check: {poisson_rate(path.tilt, svc, T):.6f}")

grid = SurfaceGrid(np.linspace(0, 1, 21), np.linspace(0, 1, 21))
closed = insurance_surface(svc, b, p, path.mu, path.u_star, grid)
numeric = insurance_surface(svc, b, p, path.mu, path.u_star, grid,
                            closed_form="never")
gap = np.max(np.abs(closed.values - numeric.values))
print(f"closed form vs numeric tilt integral: max gap {gap:.2e}")

write_surface_csv(path.surface_q, outdir / "ruin_q.csv")
write_surface_csv(path.surface_qbar, outdir / "ruin_qbar.csv")
write_tilt_csv(path.tilt, outdir / "ruin_tilt.csv")
print(f"\nwrote ruin_q.csv, ruin_qbar.csv, ruin_tilt.csv to {outdir}/")

print("\nhow the conditioned portfolio looks: more early deaths")
print(f"{'t':>6} {'optimal q(t,0)':>15} {'typical':>10}")
for t in (0.25, 0.5, 0.75, 1.0):
    print(f"{t:6.2f} {path.q_fn(t, 0.0):15.4f} {t - t * t / 2:10.4f}")
