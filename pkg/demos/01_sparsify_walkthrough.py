"""Walkthrough: effective resistances, a sampled sparsifier, and how close its
spectrum stays to the original graph's.

Run with ``python demos/01_sparsify_walkthrough.py``.
"""
import numpy as np

from respars.effres import SketchConfig, approx_resistances, exact_resistances, foster_check
from respars.sparsifier import SparsifyConfig, sample_sparsifier, spectral_check, theory_sample_count
from respars.synth import erdos_renyi

g = erdos_renyi(100, 0.1, seed=0)
print(f"graph: n={g.n}, m={g.m}")

# exact resistances sum to n - 1 on a connected graph
r = exact_resistances(g)
print("Foster sum:", round(foster_check(g, r).total, 6), "expected", g.n - 1)

# the sketch trades accuracy for speed
r_hat = approx_resistances(g, SketchConfig(0.3, seed=0))
print(f"sketch (tau=0.3): max rel error {np.max(np.abs(r_hat.values - r.values) / r.values):.3f}")

for eps in (0.9, 0.5):
    for label, q in (("default q", None), ("theory q", theory_sample_count(g.n, eps))):
        sg = sample_sparsifier(g, r, SparsifyConfig(eps, q, seed=0))
        rec = sg.record()
        check = spectral_check(g, sg)
        print(f"eps={eps} {label:9s}: q={rec['q']:6d} kept {rec['distinct_edges']:4d}/{g.m} edges "
              f"({100 * rec['percent_reduction']:.1f}% removed), eps*={check.epsilon_star:.3f}")
