"""Tour of the arrival exponent psi.

The growth exponent of a renewal counting process is the negative
inverse cumulant of one interarrival time: psi(theta) = -kappa^{-1}(-theta).
This script evaluates it across the supported families, checks the
defining identity kappa(-psi(theta)) = -theta, and shows what dropping
long-service customers does to the exponent.

Run:  python demos/01_arrival_exponent.py
"""

import numpy as np

from ldqueue import (
    PsiEvaluator,
    exponential_interarrivals,
    gamma_interarrivals,
    psi_n,
    psi_n_truncated,
    truncated_cumulant,
    uniform_interarrivals,
    uniform_service,
)

laws = [
    ("exponential(1)  [Poisson]", exponential_interarrivals(1.0)),
    ("gamma(2, 2)", gamma_interarrivals(2, 2)),
    ("uniform[0.5, 1.5]", uniform_interarrivals(0.5, 1.5)),
]

print("=== psi(theta) across interarrival families ===")
thetas = np.array([-2.0, -0.5, 0.0, 0.5, 1.0, 2.0])
header = "theta".rjust(8) + "".join(f"{name:>28}" for name, _ in laws)
print(header)
for th in thetas:
    row = f"{th:8.2f}"
    for _, law in laws:
        row += f"{float(psi_n(PsiEvaluator(law), th)):28.6f}"
    print(row)

print("\nPoisson check: psi(1) =", psi_n(PsiEvaluator(laws[0][1]), 1.0),
      " vs e - 1 =", np.e - 1)

print("\n=== defining identity kappa(-psi(theta)) + theta ===")
grid = np.linspace(-5, 5, 101)
for name, law in laws:
    psis = np.asarray(psi_n(PsiEvaluator(law), grid))
    resid = np.max(np.abs(law.kappa(-psis) + grid))
    print(f"{name:>28}: max residual {resid:.2e}")

print("\n=== service truncation ===")
svc = uniform_service(0, 1)
ev = PsiEvaluator(exponential_interarrivals(1.0))
print("uniform[0,1] service; arrivals Poisson(1); theta = 1")
print(f"{'K':>6} {'psi_K(1)':>12} {'kappa_K(0.1)':>14}")
for K in (0.25, 0.5, 0.75, 1.0):
    # thinning compounds a geometric number of interarrivals, so the
    # cumulant domain shrinks with K; 0.1 stays inside it for all rows
    print(f"{K:6.2f} {float(psi_n_truncated(ev, svc, K, 1.0)):12.6f} "
          f"{float(truncated_cumulant(ev.law, svc, K, 0.1)):14.6f}")
print("psi_K increases to the untruncated exponent e - 1 =", np.e - 1)
