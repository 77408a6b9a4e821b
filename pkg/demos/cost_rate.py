"""How fast the cost of privacy falls as epsilon grows: five-point stencil
against the standard-form bounds and the corrected ordering.

    python3 demos/cost_rate.py
"""

from dplqg.presets import run_preset

t = run_preset("cost-rate-sweep").tables["cost_rate"]
print(" ".join(f"{c:>15}" for c in t.columns[1:]))
for row in t.rows:
    print(" ".join(f"{v:15.4g}" for v in row[1:]))
