"""
Fitting the fractional kernel with a sum of exponentials
=========================================================

The rough-variance kernel t**(alpha-1)/Gamma(alpha) is not Markovian.
Approximating it by n decaying exponentials restores a finite state, and
the whole fit quality hangs on one number: the ratio between consecutive
cells of the geometric partition that places the exponential nodes.
"""

from voltheston import (
    FractionalKernel,
    GeometricPartition,
    build_multiexp,
    l2_error_squared,
    optimize_ratio,
)

ALPHA = 0.6
HORIZON = 0.5

############################################################
# Sweep the factor count and let the optimiser pick the ratio.
# The squared L2 error on [0, T] drops by roughly 30x from
# n=4 to n=40 and by another ~70x out to n=200.

kernel = FractionalKernel(ALPHA)

print(f"{'n':>5} {'ratio':>12} {'L2 error^2':>14}")
for n in (4, 10, 20, 40, 200):
    fit = optimize_ratio(kernel, n, HORIZON)
    print(f"{n:>5} {fit.ratio:>12.4f} {fit.norm2:>14.6g}")

############################################################
# The objective is flat near its minimum: nudging the ratio a few
# percent away barely moves the error, which is why coarse published
# ratios reproduce the optimal errors to ~1e-5.

n = 20
best = optimize_ratio(kernel, n, HORIZON)
for bump in (0.95, 1.0, 1.05):
    ratio = best.ratio * bump
    approx = build_multiexp(kernel, GeometricPartition(n, ratio))
    err = l2_error_squared(kernel, approx, HORIZON)
    print(f"ratio {ratio:8.4f}  error^2 {err:.8f}")

############################################################
# The fitted object exposes its nodes and weights: one mean-reverting
# factor per cell, with stiffness growing geometrically.

approx = build_multiexp(kernel, GeometricPartition(8, optimize_ratio(kernel, 8, HORIZON).ratio))
print("\nnodes:  ", " ".join(f"{x:10.4g}" for x in approx.nodes))
print("weights:", " ".join(f"{c:10.4g}" for c in approx.weights))
