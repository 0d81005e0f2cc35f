"""Learning two features one at a time with the greedy shifted eigensolves.

The target mixes two quadratic forms, cos(x.x / 2) + sin(x.Mx / 2), so two
polynomial features of degree 2 explain it exactly.  The greedy pass learns
the first feature from the single-feature surrogate, then deflates it out
and solves a shifted eigenproblem for the second.
"""

import numpy as np

from gradfeat import (FeatureBasis, FeatureMap, assemble_gram,
                      build_index_set, greedy_features, make_benchmark,
                      make_samples, poincare_loss)
from gradfeat.grassmann import learn_features
from gradfeat.surrogate import orthonormalize

bench = make_benchmark("u2")
train = make_samples(bench, 500, seed=0)
scale = train.mean_gradient_norm_sq()
basis = FeatureBasis(build_index_set(8, p=1.0, k=2.0), bench.families)
gram = assemble_gram(basis, train)
print(f"target: u2 (two quadratic features), {train.n} samples, K = {basis.size}")

for m in (1, 2):
    fmap = greedy_features(train, basis, m, gram=gram)
    loss = poincare_loss(train, fmap)
    print(f"greedy with m = {m}: loss = {loss:.4e} (relative {loss/scale:.2e})")

rng = np.random.default_rng(1)
random_losses = []
for _ in range(20):
    G = orthonormalize(rng.normal(size=(basis.size, 2)), gram)
    random_losses.append(poincare_loss(train, FeatureMap(basis, G)))
print(f"random orthonormal pairs, median of 20: "
      f"{np.median(random_losses):.4e}")

fmap_gsi, info = learn_features(train, basis, 2, "gsi", gram=gram)
print(f"descent from the greedy start (GSI): loss = "
      f"{info['loss_final']:.4e} after {info['iterations']} iterations")
print("\nthe greedy pair is far better than chance, and the descent "
      "refinement pushes the loss to the exact two-feature floor.")
