"""Measure how far one propagation step moves when the graph is replaced by a
sparsifier, next to the corresponding upper bound, for GCN-style
propagation and for symmetric attention."""
import numpy as np

from respars.effres import exact_resistances
from respars.gnn import attention_matrix, symmetric_attention_vector
from respars.sparsifier import SparsifyConfig, sample_sparsifier, theory_sample_count
from respars.synth import SBMSpec, erdos_renyi, sbm
from respars.theory import sparsify_gamma, theorem1_check, theorem2_check

rng = np.random.default_rng(0)

g = erdos_renyi(50, 0.2, seed=0)
h = sample_sparsifier(g, exact_resistances(g), SparsifyConfig(0.25, theory_sample_count(50, 0.25), 0)).graph
x, w = rng.standard_normal((50, 8)), rng.standard_normal((8, 4))
rep = theorem1_check(g, h, x, w, "relu")
print(f"gcn: ||H - H_s|| = {rep.lhs:.4f} <= bound {rep.rhs:.4f} (eps*={rep.eps_star:.3f})")

data = sbm(SBMSpec(n=40, k=4, seed=0))
p = {"W": 0.3 * rng.standard_normal((16, 4)), "a": symmetric_attention_vector(0.3 * rng.standard_normal(4))}
att = attention_matrix(data.graph, data.features, p)
rep = theorem2_check(att, sparsify_gamma(att, 0.25, seed=0), data.features, p["W"], "elu")
print(f"gat: ||H - H_s|| = {rep.lhs:.4f} <= bound {rep.rhs:.4f} (eps*={rep.eps_star:.3f})")
