"""Find an adversarial input to a dense network by solving its pruned twin.

The verification model is built on the sparse surrogate; every incumbent the
solver produces is re-checked with an exact forward pass of the dense
network, and the first input the dense network actually misclassifies wins.
A heavily pruned surrogate with poor accuracy can still point at dense
adversarial inputs, and its smaller model tends to produce them sooner.
"""

import time

import numpy as np

from sparsemip import (
    PruningSpec,
    SolverConfig,
    VerificationInstance,
    accuracy,
    forward,
    make_synthetic_classification,
    predict,
    prune,
    random_init,
    train,
    verify_direct,
    verify_via_surrogate,
)

data = make_synthetic_classification(n_inputs=36, classes=3, samples=400, seed=36)
dense = train(
    random_init([36, 16, 16, 3], seed=1, domain=(data.box.lo, data.box.hi)),
    data,
    epochs=30,
    learning_rate=0.1,
    seed=1,
)

hit = int(np.flatnonzero(predict(dense, data.X) == data.y)[0])
x0 = data.X[hit]
y0 = forward(dense, x0).output
j = int(data.y[hit])
j_prime = int(np.argsort(y0)[-2])
eps = 0.6
instance = VerificationInstance(dense, x0, eps, j, j_prime)
print(f"instance: class {j} vs {j_prime}, L1 budget {eps}, dense accuracy {accuracy(dense, data):.2f}")

config = SolverConfig(time_limit_seconds=60, emphasis="feasibility")

t0 = time.perf_counter()
direct = verify_direct(instance, config)
print(
    f"\ndirect:    {direct.outcome} in {direct.wall_seconds:.3f}s "
    f"({direct.incumbents_evaluated} incumbents)"
)

sparse = prune(dense, PruningSpec("magnitude", "unstructured", 0.8))
print(f"\nsurrogate: 0.8-magnitude-pruned, accuracy {accuracy(sparse, data):.2f}")
surrogate = verify_via_surrogate(instance, sparse, config)
print(
    f"surrogate: {surrogate.outcome} in {surrogate.wall_seconds:.3f}s "
    f"({surrogate.incumbents_evaluated} incumbents dense-checked)"
)

for name, result in (("direct", direct), ("surrogate", surrogate)):
    if result.outcome == "adversarial-found":
        y = forward(dense, result.x).output
        print(
            f"  {name}: dense margin y_{j_prime} - y_{j} = {y[j_prime] - y[j]:.4f}, "
            f"L1 distance {np.abs(result.x - x0).sum():.3f} <= {eps}"
        )
