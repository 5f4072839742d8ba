"""Solve a network-maximization MILP with the built-in engine.

The solver explores LP relaxations, branching on ReLU indicator binaries;
each integral solution streams through the incumbent callback, which may
stop the search early.  Every node LP comes from the bounded-variable
simplex.
"""

from sparsemip import (
    CONTINUE,
    STOP,
    SolverConfig,
    branch_and_bound,
    encode_fm,
    interval_propagate,
    random_init,
    solve_lp,
)

net = random_init([5, 8, 6, 1], seed=2)
model = encode_fm(net, interval_propagate(net))
print(
    f"model: {model.n_variables} vars, {len(model.binary_indices)} binaries, "
    f"{model.n_constraints} rows"
)

relaxation = solve_lp(model)
print(f"root LP relaxation: {relaxation.objective:.4f} ({relaxation.iterations} pivots)")

print("\nincumbent stream (objective, running bound):")


def watch(values, objective):
    print(f"  incumbent {objective:.6f}")
    return CONTINUE


outcome = branch_and_bound(model, SolverConfig(emphasis="feasibility"), callback=watch)
print(
    f"status {outcome.status}: optimum {outcome.objective:.6f}, "
    f"bound {outcome.bound:.6f}, {outcome.stats.nodes_explored} nodes, "
    f"{outcome.stats.lps_solved} LPs in {outcome.stats.wall_seconds:.2f}s"
)
print(f"pool holds {len(outcome.pool)} solutions (insertion order)")

print("\nsame model, stopping at the first incumbent:")
outcome = branch_and_bound(model, SolverConfig(), callback=lambda v, o: STOP)
print(f"status {outcome.status} after {outcome.stats.nodes_explored} nodes")
