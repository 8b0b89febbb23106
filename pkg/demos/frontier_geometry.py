"""Where the relaxed equal-weight problem attains its optimum.

Each asset becomes the point (beta * sigma_f, residual variance) and every
K-subset the sum of its points. The equal-weight variance of a subset is
(u^2 + v) / K^2 at that sum, so the box relaxation minimises the same
function over the convex hull of all subset sums. Its optimum sits on the
lower frontier of the hull, between at most two vertices whose subsets
differ by one asset, which is why at most two coordinates are fractional.

Run with ``python demos/frontier_geometry.py [outdir]``; the scatter CSVs
(original and anti-sorted instance) are written to ``outdir`` if given.
"""

import sys
from pathlib import Path

import numpy as np

from ccportfolio import build_adhoc, check_inverse_monge, monge_matrix, verify_frontier
from ccportfolio.analysis import addition_set, build_A, convex_hull, write_scatter_csv
from ccportfolio.exact import brute_force_ew
from ccportfolio.verify import random_single_factor

inst = random_single_factor(np.random.default_rng(1002), 12)
K = 4

AK = addition_set(build_A(inst), K)
hull = convex_hull(AK.points)
print(f"{len(AK.labels)} subsets of size {K}, {len(hull)} hull vertices")

rep = verify_frontier(inst, K)
print(f"relaxation optimum {rep.relaxation_objective:.6f} at (u, v) = "
      f"({rep.point[0]:.4f}, {rep.point[1]:.4f}), fractional coordinates: {rep.fractional_count}")
for subset, lam in zip(rep.vertices, rep.coefficients):
    print(f"  vertex {subset} with weight {lam:.4f}")
print(f"on lower frontier: {rep.on_frontier}, vertices differ by one asset: {rep.differ_by_one}")

best = brute_force_ew(inst, K)
print(f"integer optimum {best.objective:.6f} at {best.support}")

M, _ = monge_matrix(inst, K)
mr = check_inverse_monge(M, tol=1e-10 * np.abs(M).max())
print(f"beta-sorted pair matrix inverse Monge: {mr.is_inverse_monge} "
      f"(worst violation {mr.worst_violation:.2e})")

if len(sys.argv) > 1:
    out = Path(sys.argv[1])
    out.mkdir(parents=True, exist_ok=True)
    write_scatter_csv(inst, out / "scatter_original.csv")
    write_scatter_csv(build_adhoc(inst), out / "scatter_adhoc.csv")
    print(f"scatter files written to {out}")
