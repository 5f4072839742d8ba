"""Sparsify a trained network: magnitude vs random, per-weight vs per-neuron.

Shows exact per-layer sparsity targets, structured compaction (the network
actually shrinks), and the iterative prune-retrain schedule with frozen
zeros.
"""

import numpy as np

from sparsemip import (
    FinetuneSpec,
    PruningSpec,
    accuracy,
    make_synthetic_classification,
    prune,
    random_init,
    train,
)
from sparsemip.pruning import prune_with_mask

data = make_synthetic_classification(n_inputs=16, classes=3, samples=300, seed=1)
dense = train(
    random_init([16, 32, 32, 3], seed=0, domain=(data.box.lo, data.box.hi)),
    data,
    epochs=30,
    learning_rate=0.1,
    seed=0,
)
print(f"dense accuracy: {accuracy(dense, data):.3f}")

print("\nunstructured pruning (weights zeroed in place):")
for rate in (0.3, 0.5, 0.8, 0.9, 0.95):
    for method in ("magnitude", "random"):
        sparse = prune(dense, PruningSpec(method, "unstructured", rate, seed=0))
        zeros = sum(int((w == 0).sum()) for w in sparse.weights)
        total = sum(w.size for w in sparse.weights)
        print(
            f"  {method[:9]:<9} rate {rate:4.2f}: {zeros:4d}/{total} zeros, "
            f"accuracy {accuracy(sparse, data):.3f}"
        )

print("\nstructured pruning (neurons removed, dims shrink):")
for rate in (0.5, 0.9):
    sparse = prune(dense, PruningSpec("magnitude", "structured", rate))
    print(f"  rate {rate}: dims {dense.dims} -> {sparse.dims}, "
          f"accuracy {accuracy(sparse, data):.3f}")

print("\niterative magnitude pruning with finetuning (5 rounds):")
spec = PruningSpec(
    "magnitude", "unstructured", 0.9, FinetuneSpec(rounds=5, epochs_per_round=5, learning_rate=0.1)
)
tuned, mask = prune_with_mask(dense, spec, data)
frozen = all(np.all(w[~m] == 0.0) for w, m in zip(tuned.weights, mask.weight_masks))
print(f"  final accuracy {accuracy(tuned, data):.3f} "
      f"(one-shot at 0.9 was {accuracy(prune(dense, PruningSpec('magnitude', 'unstructured', 0.9)), data):.3f})")
print(f"  masked positions still exactly zero after retraining: {frozen}")
