"""From an MSE target to a range of epsilon, then back through the exact
Riccati solution.

    python3 demos/calibration.py
"""

import numpy as np

from dplqg.calibrate import CalibrationTarget, epsilon_range_apriori, validate_epsilon
from dplqg.presets import single_vehicle

net = single_vehicle(1.0)
for band in [(2.02, 4.0), (2.02, 40.0), (2.2, 40.0)]:
    target = CalibrationTarget(delta=0.05, band=band)
    rng = epsilon_range_apriori(target, net.A, net.W, net.C)
    print(f"band {band}: ", end="")
    if not rng.feasible:
        print(rng.reason)
        continue
    print(f"epsilon in [{rng.lower:.3f}, {rng.upper:.3f}]")
    for eps in np.linspace(rng.lower, rng.upper, 4):
        rep = validate_epsilon(eps, 0.05, target, net)
        print(f"    eps={eps:7.3f}  sigma={rep.sigma:6.3f}  tr Sigma={rep.trace_sigma:7.3f}  ok={rep.passed}")
