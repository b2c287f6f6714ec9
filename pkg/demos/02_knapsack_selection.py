"""From frame scores to a summary, two ways.

The top-fraction selector takes the best 15% of frames. The knapsack
selector works on whole fragments (shots): each fragment is worth the mean
score of its frames, costs its length in frames, and the 15% budget is the
knapsack capacity.
"""
import numpy as np

from sdmvsum.selection import (fragment_scores, knapsack_select, summary_capacity,
                               top_fraction_select)

rng = np.random.default_rng(3)
n = 40
scores = np.clip(rng.normal(0.3, 0.1, n), 0, 1)
scores[10:14] += 0.5   # an interesting 4-frame shot
scores[30:32] += 0.4   # a shorter, slightly less interesting one

fragments = [(0, 4), (5, 9), (10, 13), (14, 21), (22, 29), (30, 31), (32, 39)]
cap = summary_capacity(n)
print(f"{n} frames, budget {cap} frames")

top = top_fraction_select(scores)
print("top-fraction picks frames:", np.flatnonzero(top).tolist())

values = fragment_scores(scores, fragments)
weights = [b - a + 1 for a, b in fragments]
for (a, b), v, w in zip(fragments, values, weights):
    print(f"  fragment {a:2d}-{b:2d}  weight {w}  value {v:.3f}")
mask = knapsack_select(values, weights, cap, fragments)
print("knapsack picks frames:", np.flatnonzero(mask).tolist(), f"({mask.sum()} <= {cap})")
print("""
The knapsack keeps shots intact: it spends the budget on the two
high-value shots rather than scattering frames, which is what a viewer of
a summary video would actually watch.""")
