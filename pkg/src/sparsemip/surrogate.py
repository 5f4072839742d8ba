"""Verification and maximization through a sparse surrogate network.

The optimization model is built and solved on the sparse network; every
integral solution the solver reports is re-evaluated with an exact forward
pass of the dense network, and only those dense-side values count.  For
verification the search stops at the first input the dense network actually
misclassifies; for maximization the search runs to completion (there is no
early-stopping criterion) while a running best over the dense values is kept.

A "none found" outcome on the surrogate proves nothing about the dense
network: the method is a heuristic for *finding* solutions, not a certificate
of their absence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import interval_propagate, tighten_box
from .milp import encode_fm, encode_vnn
from .network import Network, forward
from .solver import CONTINUE, STOP, SolveStats, SolverConfig, branch_and_bound

__all__ = [
    "ADVERSARIAL_MARGIN",
    "VerificationInstance",
    "SurrogateResult",
    "verify_via_surrogate",
    "verify_direct",
    "maximize_via_surrogate",
    "maximize_direct",
]

# strictness tolerance: x counts as adversarial when y_{j'} - y_j exceeds this
ADVERSARIAL_MARGIN = 1e-9
_L1_SLACK = 1e-6


@dataclass(frozen=True)
class VerificationInstance:
    """A robustness query around a sample the dense network classifies as j."""

    dense: Network
    x0: np.ndarray
    eps: float
    j: int
    j_prime: int

    def __post_init__(self):
        object.__setattr__(
            self, "x0", np.asarray(self.x0, dtype=np.float64)
        )
        net = self.dense
        if self.x0.shape != (net.n_inputs,):
            raise ValueError("x0 dimension does not match the network")
        if not net.input_domain.contains(self.x0):
            raise ValueError("x0 lies outside the input domain")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.j == self.j_prime:
            raise ValueError("target class must differ from the true class")
        if not (0 <= self.j < net.n_outputs and 0 <= self.j_prime < net.n_outputs):
            raise ValueError("class index out of range")
        y = forward(net, self.x0).output
        others = np.delete(y, self.j)
        if not np.all(y[self.j] > others):
            raise ValueError(
                f"network does not classify x0 as class {self.j}; "
                "verification instances require a correctly classified sample"
            )


@dataclass
class SurrogateResult:
    """Outcome of one direct or surrogate-mediated solve.

    ``value`` is always a dense-network quantity: the margin y_{j'} - y_j of
    the returned adversarial input, or the best dense output found.
    """

    outcome: str  # "adversarial-found" | "none-found" | "best-value"
    x: Optional[np.ndarray]
    value: Optional[float]
    wall_seconds: float
    incumbents_evaluated: int
    incumbents_accepted: int
    solver_status: str
    solver_stats: SolveStats
    sparse_objective: Optional[float] = None
    sparse_bound: Optional[float] = None
    best_value_trace: list = field(default_factory=list)


def _check_surrogate_compatible(dense: Network, sparse: Network) -> None:
    if sparse.n_inputs != dense.n_inputs:
        raise ValueError("surrogate input size differs from the dense network")
    if sparse.n_outputs != dense.n_outputs:
        raise ValueError("surrogate output count differs from the dense network")


def _assert_adversarial(instance: VerificationInstance, x: np.ndarray, margin: float):
    """Runtime soundness check on every returned adversarial input."""
    l1 = float(np.abs(x - instance.x0).sum())
    if l1 > instance.eps + _L1_SLACK:
        raise RuntimeError(
            f"adversarial input violates the L1 budget: {l1} > {instance.eps}"
        )
    if not instance.dense.input_domain.contains(x):
        raise RuntimeError("adversarial input leaves the input domain")
    if margin <= ADVERSARIAL_MARGIN:
        raise RuntimeError("adversarial margin check failed")


def _verify(
    instance: VerificationInstance,
    sparse: Network,
    config: Optional[SolverConfig],
    check_every_incumbent: bool,
) -> SurrogateResult:
    _check_surrogate_compatible(instance.dense, sparse)
    config = config or SolverConfig()
    box = tighten_box(sparse.input_domain, instance.x0, instance.eps)
    bounds = interval_propagate(sparse, box)
    model = encode_vnn(
        sparse, bounds, instance.x0, instance.eps, instance.j, instance.j_prime
    )
    x_idx = model.relu.x_idx
    state = {"evaluated": 0, "hit_x": None, "hit_margin": None}

    def on_incumbent(values, objective):
        state["evaluated"] += 1
        if not check_every_incumbent and objective <= ADVERSARIAL_MARGIN:
            # direct solve: a nonpositive objective cannot certify anything
            return CONTINUE
        x = values[x_idx]
        y = forward(instance.dense, x).output
        margin = float(y[instance.j_prime] - y[instance.j])
        if margin > ADVERSARIAL_MARGIN:
            state["hit_x"] = x.copy()
            state["hit_margin"] = margin
            return STOP
        return CONTINUE

    outcome = branch_and_bound(model, config, on_incumbent)
    if state["hit_x"] is not None:
        _assert_adversarial(instance, state["hit_x"], state["hit_margin"])
        return SurrogateResult(
            outcome="adversarial-found",
            x=state["hit_x"],
            value=state["hit_margin"],
            wall_seconds=outcome.stats.wall_seconds,
            incumbents_evaluated=state["evaluated"],
            incumbents_accepted=1,
            solver_status=outcome.status,
            solver_stats=outcome.stats,
            sparse_objective=outcome.objective,
            sparse_bound=outcome.bound,
        )
    return SurrogateResult(
        outcome="none-found",
        x=None,
        value=None,
        wall_seconds=outcome.stats.wall_seconds,
        incumbents_evaluated=state["evaluated"],
        incumbents_accepted=0,
        solver_status=outcome.status,
        solver_stats=outcome.stats,
        sparse_objective=outcome.objective,
        sparse_bound=outcome.bound,
    )


def verify_via_surrogate(
    instance: VerificationInstance,
    sparse: Network,
    config: Optional[SolverConfig] = None,
) -> SurrogateResult:
    """Search for a dense-network adversarial input via the sparse model.

    Every incumbent of the sparse model, improving or not, is checked against
    the dense network; the first dense misclassification stops the search and
    is returned after an independent L1/domain/margin recheck.
    """
    return _verify(instance, sparse, config, check_every_incumbent=True)


def verify_direct(
    instance: VerificationInstance, config: Optional[SolverConfig] = None
) -> SurrogateResult:
    """Solve the verification model on the dense network itself.

    A positive incumbent objective already certifies adversariality on the
    dense network, so nonpositive incumbents are skipped; the returned input
    still passes the same forward-pass recheck.
    """
    return _verify(instance, instance.dense, config, check_every_incumbent=False)


def maximize_via_surrogate(
    dense: Network,
    sparse: Network,
    config: Optional[SolverConfig] = None,
) -> SurrogateResult:
    """Maximize the dense network's output by solving the sparse model.

    Keeps the running best of the dense forward values over all incumbents;
    never stops early.  The reported value is recomputed from scratch as
    forward(dense, x*) so no solver-side quantity leaks into the result.
    """
    if dense.n_outputs != 1 or sparse.n_outputs != 1:
        raise ValueError("function maximization requires single-output networks")
    _check_surrogate_compatible(dense, sparse)
    config = config or SolverConfig()
    bounds = interval_propagate(sparse)
    model = encode_fm(sparse, bounds)
    x_idx = model.relu.x_idx
    state = {"evaluated": 0, "accepted": 0, "best_x": None, "best_y": -np.inf}
    trace = []

    def on_incumbent(values, objective):
        state["evaluated"] += 1
        x = values[x_idx]
        y = float(forward(dense, x).output[0])
        if state["best_x"] is None or y > state["best_y"]:
            state["best_x"] = x.copy()
            state["best_y"] = y
            state["accepted"] += 1
        trace.append(state["best_y"])
        return CONTINUE

    outcome = branch_and_bound(model, config, on_incumbent)
    if state["best_x"] is None:
        return SurrogateResult(
            outcome="best-value",
            x=None,
            value=None,
            wall_seconds=outcome.stats.wall_seconds,
            incumbents_evaluated=0,
            incumbents_accepted=0,
            solver_status=outcome.status,
            solver_stats=outcome.stats,
            sparse_objective=outcome.objective,
            sparse_bound=outcome.bound,
            best_value_trace=trace,
        )
    x_star = state["best_x"]
    y_star = float(forward(dense, x_star).output[0])
    return SurrogateResult(
        outcome="best-value",
        x=x_star,
        value=y_star,
        wall_seconds=outcome.stats.wall_seconds,
        incumbents_evaluated=state["evaluated"],
        incumbents_accepted=state["accepted"],
        solver_status=outcome.status,
        solver_stats=outcome.stats,
        sparse_objective=outcome.objective,
        sparse_bound=outcome.bound,
        best_value_trace=trace,
    )


def maximize_direct(
    dense: Network, config: Optional[SolverConfig] = None
) -> SurrogateResult:
    """Maximize the dense network's output on its own model."""
    return maximize_via_surrogate(dense, dense, config)
