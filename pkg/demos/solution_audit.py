"""Anatomy of one solve: support, duals, and the audit trail.

A tiny two-cluster instance keeps every number readable.  The solver
returns a basic optimal solution (at most N configurations carry mass),
the optimal duals, and enough bookkeeping to verify optimality from
scratch: check_solution recomputes feasibility, dual feasibility over
every column, strong duality, and complementary slackness straight from
the problem data.  export_lp writes the instance in LP format for
inspection with any external reader.
"""

import numpy as np

from advrisk.data import LabeledDataset
from advrisk.geometry import Metric
from advrisk.lp import ReducedProblem, check_solution, export_lp, solve
from advrisk.search import exhaustive_search

# two tight clusters of opposite labels, one straggler
feats = np.array(
    [[0.0, 0.0], [0.1, 0.0], [0.05, 0.1],
     [2.0, 0.0], [2.1, 0.0],
     [5.0, 5.0]]
)
labels = np.array([1, 2, 2, 1, 2, 1])
ds = LabeledDataset(feats, labels, ("a", "b"))

pool = exhaustive_search(ds, Metric.EUCLIDEAN, 0.2)
rp = ReducedProblem.from_pool(pool)
sol = solve(rp)

print(f"{rp.n_columns} columns, objective {sol.objective}")
print(f"risk lower bound: {1.0 - sol.objective / ds.n_points:.4f}")
print()
print("support (mass per configuration):")
for r, g in sorted(sol.gamma.items()):
    print(f"  {r}: {g:.4f}")
print()
print(f"duals: {np.round(sol.dual, 4).tolist()}")

report = check_solution(rp, sol)
print()
print(f"support size        {report.support_size} (<= {ds.n_points})")
print(f"primal residual     {report.primal_residual:.2e}")
print(f"dual violation      {report.dual_violation:.2e}")
print(f"duality gap         {report.duality_gap:.2e}")
print(f"ok                  {report.ok}")

export_lp(rp, "audit_instance.lp")
with open("audit_instance.lp", encoding="utf-8") as fh:
    head = fh.read().splitlines()[:8]
print()
print("audit_instance.lp:")
for line in head:
    print(f"  {line}")
