"""Maximize a network's output indirectly through its pruned twin.

Unlike verification there is no early stop: the sparse model is solved to
the end (or the time limit), and each of its incumbents is scored by the
dense network; the best dense value wins.  The final value is always an
exact dense forward pass, never a solver-side number.
"""

from sparsemip import (
    PruningSpec,
    SolverConfig,
    forward,
    maximize_direct,
    maximize_via_surrogate,
    prune,
    random_init,
)

dense = random_init([20, 10, 10, 1], seed=5)

direct = maximize_direct(dense, SolverConfig(time_limit_seconds=120))
print(
    f"direct:    value {direct.value:.6f} ({direct.solver_status}) "
    f"in {direct.wall_seconds:.2f}s"
)

for rate in (0.5, 0.8, 0.95):
    sparse = prune(dense, PruningSpec("magnitude", "unstructured", rate))
    result = maximize_via_surrogate(
        dense, sparse, SolverConfig(time_limit_seconds=120, emphasis="feasibility")
    )
    gap = result.value - direct.value
    check = forward(dense, result.x).output[0]
    print(
        f"rate {rate:4.2f}: value {result.value:.6f} ({gap:+.6f} vs direct), "
        f"{result.incumbents_evaluated} incumbents, "
        f"exact recheck {check:.6f}, trace length {len(result.best_value_trace)}"
    )
