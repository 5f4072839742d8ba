"""Build, train, evaluate, and serialize a dense ReLU network.

Walks the basic data types: a synthetic blob dataset inside the unit box, a
randomly initialized network, minibatch SGD training, and the JSON network
format round trip.
"""

import tempfile
from pathlib import Path

import numpy as np

from sparsemip import (
    accuracy,
    forward,
    load_network,
    make_synthetic_classification,
    random_init,
    save_network,
    train,
)

data = make_synthetic_classification(n_inputs=16, classes=3, samples=300, seed=1)
print(f"dataset: {len(data)} samples, {data.num_classes} classes, box [0,1]^{data.box.dim}")

net = random_init([16, 32, 32, 3], seed=0, domain=(data.box.lo, data.box.hi))
print(f"initial accuracy: {accuracy(net, data):.3f}")

net = train(net, data, epochs=30, learning_rate=0.1, batch_size=32, seed=0)
print(f"trained accuracy: {accuracy(net, data):.3f}")

x = data.X[0]
acts = forward(net, x)
print(f"forward pass: input {x[:3]}..., output {acts.output}, label {data.y[0]}")
print(f"hidden layer 1 active neurons: {int((acts.pre[0] > 0).sum())}/{len(acts.pre[0])}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "net.json"
    save_network(net, path)
    back = load_network(path)
    same = all(np.array_equal(a, b) for a, b in zip(net.weights, back.weights))
    print(f"serialization round trip lossless: {same}")
