import time
import numpy as np
from invsourcing import (benchmark_params, build_shock_lattice, InventoryGrid,
                         solve_value_function, simulate_panel)

t0 = time.time()
params = benchmark_params()
lattice = build_shock_lattice(params, 15, 9, 9)
print("lattice", len(lattice), "mean nu", lattice.mean("nu"),
      "mean lc", lattice.mean("lambda_c"), "mean lf", lattice.mean("lambda_f"))

grid = InventoryGrid.build(params, n_c=40, n_f=40, lattice=lattice)
print("grid tops", grid.nodes_c[-1], grid.nodes_f[-1])

res = solve_value_function(params, grid=grid, lattice=lattice, tol=1e-6,
                           max_iter=300, howard_steps=20, verbose=True)
t1 = time.time()
print(f"solved in {t1-t0:.1f}s, iterations={res.iterations}, "
      f"failures={res.optimizer_failures}, fallbacks={res.activeset_fallbacks}")
print("V range", res.value.values.min(), res.value.values.max())
print("monotone viol", res.value.monotone_violation(),
      "concavity viol", res.value.concavity_violation())

m = simulate_panel(res.policy, res.value, params, J=5000, burn_in=100,
                   sample=100, seed=7)
t2 = time.time()
print(f"simulated in {t2-t1:.1f}s")
for k, v in m.as_dict().items():
    print(f"  {k:18s} {v:.4f}")
print("targets: inputs_f .0889  inputs_c .2775  inv_total .2886")
