"""
Noise calibration and the moments accountant
=============================================

Calibrate the per-step noise for a T-step full-batch run, then audit the
realised (epsilon, delta) by composing Renyi moments over a grid of orders.
"""

import math

from dp_riemopt import MomentEntry, MomentsLedger, PrivacyBudget, audit, calibrate_iterative

n, T, L0 = 1000, 5, 2.0
for c in (1.0, 4.0, 16.0):
    budget = PrivacyBudget(0.1, 1e-3, c)
    cal = calibrate_iterative(T, L0, n, n, budget)
    led = MomentsLedger()
    led.add(MomentEntry(L0, n, n, cal.sigma2), count=T)
    eps, lam = audit(led, budget.delta, return_order=True)
    print(f"c={c:4.0f}  sigma^2={cal.sigma2:.3e}  audited eps={eps:.4f} at order {lam}")

# composition is additive in the moments: double T, roughly sqrt(2) more epsilon
for steps in (10, 20, 40):
    led = MomentsLedger()
    led.add(MomentEntry(1.0, 100, 100, 0.05), count=steps)
    print(f"T={steps:3d}  eps={audit(led, 1e-3):.3f}")

print("log(1/delta) alone:", math.log(1e3))
