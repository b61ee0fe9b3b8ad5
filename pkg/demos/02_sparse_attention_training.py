"""Train a two-layer attention network on a synthetic block-model graph, once
on the full graph and once on a fixed sparsifier, and compare accuracy and
the number of attention coefficients computed per epoch.
"""
import numpy as np

from respars.effres import exact_resistances
from respars.gnn import ModelConfig
from respars.synth import SBMSpec, sbm
from respars.train import AdaptiveConfig, TrainConfig, adaptive_train, train

data = sbm(SBMSpec(n=120, k=3, seed=1))
r = exact_resistances(data.graph)

for mode in ("full", "fastgat-const", "fastgat-layer"):
    accs, att = [], 0
    for seed in range(3):
        model = ModelConfig.two_layer(3, mode=mode, epsilon=0.5, seed=seed)
        res = train(TrainConfig(model, data.masks, epochs=200, seed=seed),
                    data.graph, data.features, data.labels, r)
        accs.append(res.test_acc)
        att = res.trace[-1].attention
    print(f"{mode:14s} test acc {np.mean(accs):.3f}  attention coefficients/epoch {att}")

# adaptive density: start very sparse and add edges when training stalls
model = ModelConfig.two_layer(3, mode="fastgat-const", epsilon=0.9, seed=0)
res = adaptive_train(TrainConfig(model, data.masks, epochs=200), AdaptiveConfig(),
                     data.graph, data.features, data.labels, r)
print(f"adaptive       test acc {res.test_acc:.3f}  edges in first epoch {res.edge_trace[0]}, last epoch {res.edge_trace[-1]}")
for epoch, action, changed, count in res.actions:
    print(f"  epoch {epoch:3d}: {action:6s} {changed:4d} edges -> {count}")
