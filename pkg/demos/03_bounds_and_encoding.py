"""From activation intervals to a mixed-integer model.

Interval propagation gives each neuron a sound pre-activation range; stable
neurons (range on one side of zero) need no binary variable, unstable ones
get the four big-M rows.  Pruning tightens intervals, so the surrogate's
model is smaller on every axis.  The model exports to LP text format.
"""

import tempfile
from pathlib import Path

from sparsemip import (
    PruningSpec,
    encode_fm,
    encode_vnn,
    interval_propagate,
    make_synthetic_classification,
    prune,
    random_init,
    stability_summary,
    tighten_box,
    train,
    write_lp_file,
)

data = make_synthetic_classification(n_inputs=12, classes=3, samples=300, seed=1)
dense = train(
    random_init([12, 16, 16, 3], seed=0, domain=(data.box.lo, data.box.hi)),
    data,
    epochs=30,
    learning_rate=0.1,
    seed=0,
)
sparse = prune(dense, PruningSpec("magnitude", "unstructured", 0.9))

x0 = data.X[0]
eps = 0.4
box = tighten_box(dense.input_domain, x0, eps)

for name, net in (("dense", dense), ("0.9-pruned", sparse)):
    bounds = interval_propagate(net, box)
    print(f"{name}: per-layer (active, inactive, unstable) = {stability_summary(bounds)}")
    model = encode_vnn(net, bounds, x0, eps, j=0, j_prime=1)
    print(
        f"  adversarial-search model: {model.n_variables} vars "
        f"({len(model.binary_indices)} binary), {model.n_constraints} rows, "
        f"{model.nonzero_coefficient_count()} nonzeros"
    )

fm_net = random_init([6, 8, 1], seed=3)
model = encode_fm(fm_net, interval_propagate(fm_net))
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "fm.lp"
    write_lp_file(model, path)
    text = path.read_text().splitlines()
    print(f"\nLP export ({len(text)} lines):")
    for line in text[:8]:
        print(f"  {line}")
    print("  ...")
