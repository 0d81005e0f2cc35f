"""The three learning procedures side by side on a non-reducible target.

u3 has no exact low-dimensional structure, so the loss floor is positive and
the procedures differ only in which minimum they find: descent from the
linear start (GLI), the surrogate eigensolve alone (SUR), and descent from
the surrogate start (GSI).
"""

from gradfeat import (FeatureBasis, assemble_gram, build_index_set,
                      make_benchmark, make_samples, poincare_loss)
from gradfeat.grassmann import learn_features, minimize_poincare_loss

bench = make_benchmark("u3")
train = make_samples(bench, 100, seed=3)
test = make_samples(bench, 1000, seed=4)
basis = FeatureBasis(build_index_set(8, p=1.0, k=2.0), bench.families)
gram = assemble_gram(basis, train)
print(f"target: u3, {train.n} training samples, K = {basis.size}, m = 1\n")

print(f"{'method':>6} {'train loss':>12} {'test loss':>12} {'iters':>6}")
results = {}
for method in ("gli", "sur", "gsi"):
    fmap, info = learn_features(train, basis, 1, method, gram=gram)
    results[method] = fmap
    print(f"{method:>6} {info['loss_final']:>12.5f} "
          f"{poincare_loss(test, fmap):>12.5f} {info['iterations']:>6}")

# descent is monotone: show the head and tail of the GSI trace
start = results["sur"].coeffs
_, trace = minimize_poincare_loss(train, basis, start, gram=gram)
shown = trace[:3] + [("...",)] + trace[-2:]
print("\nGSI descent trace (iter, loss, gradient norm, step):")
for row in shown:
    if row == ("...",):
        print("   ...")
    else:
        print(f"   {row[0]:4} {row[1]:.6f} {row[2]:.2e} {row[3]:.2e}")
print("\nevery accepted step decreases the loss; descent from the surrogate "
      "start ends in the same basin as descent from the linear start, while "
      "the eigensolve alone lands a few percent above it (at this sample "
      "size the three train losses are close, and the test column shows the "
      "refinement buys no generalization).")
