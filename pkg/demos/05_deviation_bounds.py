"""The constants sub-library: suboptimality factors, deviation rates, and
empirical verification of the tail bounds they rest on.

All bounds concern h(x) = |feature gradient|^2 for polynomial features on
s-concave input laws; they pivot on the median of h and are checked here
against Monte-Carlo tails with 3-standard-error slack.
"""

import numpy as np

from gradfeat import (DeviationProfile, FeatureBasis, FeatureMap,
                      build_index_set, check_large_deviation,
                      check_small_deviation, eta_constants, make_benchmark,
                      make_samples, objective_envelope,
                      suboptimality_constants, uniform_suboptimality_bounds)

print("deviation rate constants (growth factor 4):")
for s in (1.0, 0.5, 0.125, 0.0, -0.25):
    lower, upper = eta_constants(4.0, s)
    lo = f"{lower:.4f}" if lower is not None else "  n/a"
    print(f"  s = {s:+}: small-dev {lo:>8}, large-dev {upper:.4f}")

print("\nexact suboptimality constants vs closed bounds (uniform law):")
print(f"{'d':>3} {'deg-1':>6} {'gamma1':>10} {'gamma2':>12} {'gamma3':>10} "
      f"{'bound3':>10}")
for d in (2, 4, 8):
    for ell in (1, 2):
        g = suboptimality_constants(DeviationProfile.uniform_polynomial(d, ell))
        b = uniform_suboptimality_bounds(d, ell)
        print(f"{d:>3} {ell:>6} {g.gamma1:>10.2f} {g.gamma2:>12.1f} "
              f"{g.gamma3:>10.1f} {b.gamma3:>10.1f}")

print("\nempirical tail checks for a quadratic feature on the 8-d box:")
bench = make_benchmark("u1")
samples = make_samples(bench, 100000, seed=9)
basis = FeatureBasis(build_index_set(8, 1.0, 2.0), bench.families)
coeffs = np.zeros(basis.size)
for i, alpha in enumerate(basis.index_set.indices):
    if sum(alpha) == 2 and max(alpha) == 2:
        coeffs[i] = 1.0
h = np.sum(FeatureMap(basis, coeffs).gradients(samples.points)[:, :, 0] ** 2,
           axis=1)
small = check_small_deviation(h, k=2.0, A=4.0, s=1.0 / 8.0,
                              eps_grid=[1e-3, 1e-2, 0.1, 0.5, 1.0])
large = check_large_deviation(h, k=2.0, A=4.0, s=1.0 / 8.0,
                              t_grid=[1.5, 2.0, 3.0, 5.0])
for rep in (small, large):
    print(f"  {rep.kind}-deviation rows (threshold, empirical, bound):")
    for row in rep.rows:
        print(f"    {row.threshold:>7.3f} {row.empirical:>10.2e} "
              f"{row.bound:>10.2e}  "
              f"{'VIOLATED' if row.violated else 'ok'}")

print("\nloss envelope from the surrogate (2-d sharpness family):")
profile = DeviationProfile.uniform_polynomial(2, 1)
for surrogate_value in (1e-6, 1e-4, 1e-2):
    print(f"  surrogate {surrogate_value:.0e} -> loss <= "
          f"{objective_envelope(surrogate_value, profile):.4f}")
