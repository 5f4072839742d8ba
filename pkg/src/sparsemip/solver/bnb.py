"""Branch-and-bound over ReLU indicator binaries with incumbent callbacks.

Node selection is best-bound with depth-first plunging: after branching, the
preferred child is explored immediately (a dive), the sibling joins a
best-bound heap.  Under ``emphasis="feasibility"`` the preferred branch
activates the neuron (z = 1) and the rounding heuristic runs at every node;
under ``"balanced"`` the z = 0 branch is preferred and the heuristic runs
every tenth node.  Every new integral solution (from a node LP or the
heuristic, deduplicated) is handed to the callback before the search
continues; the callback may stop the search.

The rounding heuristic takes a fractional node LP, keeps its input values,
and propagates them exactly through the attached network: each z is rounded
to the sign of the propagated pre-activation, so the resulting point is
always feasible (input-side constraints are untouched and the propagation
satisfies the ReLU rows by construction).
"""

from __future__ import annotations

import enum
import heapq
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..milp import (
    MilpModel,
    assignment_from_input,
    constraint_violation,
    objective_value,
)
from .simplex import PreparedLp

__all__ = [
    "CallbackAction",
    "CONTINUE",
    "STOP",
    "SolverConfig",
    "SolverError",
    "Incumbent",
    "SolveStats",
    "SolveOutcome",
    "branch_and_bound",
    "rounding_heuristic",
]

_INT_TOL = 1e-7
_PRUNE_SLACK = 1e-9


class CallbackAction(enum.Enum):
    CONTINUE = "continue"
    STOP = "stop"


CONTINUE = CallbackAction.CONTINUE
STOP = CallbackAction.STOP


class SolverError(RuntimeError):
    """LP numeric failure inside the tree; carries the node's fixings."""

    def __init__(self, message: str, node_fixings=()):
        self.node_fixings = tuple(node_fixings)
        super().__init__(f"{message} (node fixings: {list(node_fixings)})")


@dataclass
class SolverConfig:
    """Search limits and behavior knobs.

    ``emphasis="feasibility"`` biases the search toward producing integral
    solutions early (z=1-first diving plus per-node rounding), mirroring
    solution-hunting parameter presets of commercial solvers.
    """

    time_limit_seconds: float = 300.0
    gap_tolerance: float = 1e-6
    pool_size: int = 1000
    emphasis: str = "balanced"  # "balanced" | "feasibility"
    node_order: str = "hybrid"  # "hybrid" (best-bound + diving) | "best-bound"
    seed: int = 0
    node_log: Optional[object] = None  # path or open file-like

    def __post_init__(self):
        if self.emphasis not in ("balanced", "feasibility"):
            raise ValueError(f"unknown emphasis {self.emphasis!r}")
        if self.node_order not in ("hybrid", "best-bound"):
            raise ValueError(f"unknown node order {self.node_order!r}")
        if self.time_limit_seconds <= 0:
            raise ValueError("time limit must be positive")


@dataclass(frozen=True)
class Incumbent:
    values: np.ndarray
    objective: float


@dataclass
class SolveStats:
    nodes_explored: int = 0
    lps_solved: int = 0
    wall_seconds: float = 0.0
    max_lp_seconds: float = 0.0
    incumbents_found: int = 0


@dataclass
class SolveOutcome:
    """Search result: proven status, best incumbent, bound, incumbent pool."""

    status: str  # optimal | feasible | infeasible | timeout_no_incumbent | stopped_by_callback
    objective: Optional[float]
    bound: Optional[float]
    best_values: Optional[np.ndarray]
    pool: list
    stats: SolveStats

    @property
    def has_incumbent(self) -> bool:
        return self.best_values is not None


@dataclass(order=True)
class _Node:
    sort_key: float
    order: int
    bound: float = field(compare=False)
    fixings: tuple = field(compare=False)
    depth: int = field(compare=False)


class _Search:
    def __init__(self, model, config, callback):
        self.model = model
        self.config = config
        self.callback = callback
        self.prep = PreparedLp(model)
        self.z_idx = np.array(model.binary_indices, dtype=np.int64)
        self.base_lo = model.lower_bounds()
        self.base_hi = model.upper_bounds()
        self.best_obj = -np.inf
        self.best_values = None
        self.pool = []
        self.seen = set()
        self.stats = SolveStats()
        self.heap = []
        self.dive = []
        self.counter = 0
        self.stopped = False
        self.t0 = time.perf_counter()
        self.log_fh = None
        self.log_owned = False

    # -- frontier ---------------------------------------------------------

    def push(self, node: _Node, prefer_dive: bool):
        if prefer_dive:
            self.dive.append(node)
        else:
            heapq.heappush(self.heap, node)

    def pop(self) -> Optional[_Node]:
        while self.dive:
            node = self.dive.pop()
            if node.bound > self.best_obj + _PRUNE_SLACK:
                return node
        while self.heap:
            node = heapq.heappop(self.heap)
            if node.bound > self.best_obj + _PRUNE_SLACK:
                return node
        return None

    def global_bound(self) -> float:
        bound = self.best_obj
        if self.heap:
            bound = max(bound, self.heap[0].bound)
        for node in self.dive:
            bound = max(bound, node.bound)
        return bound

    # -- incumbents -------------------------------------------------------

    def offer(self, values: np.ndarray, objective: float) -> None:
        """Deliver a new integral solution to the pool and the callback."""
        key = np.round(values, 9).tobytes()
        if key in self.seen:
            return
        self.seen.add(key)
        self.stats.incumbents_found += 1
        incumbent = Incumbent(values.copy(), float(objective))
        if len(self.pool) < self.config.pool_size:
            self.pool.append(incumbent)
        if objective > self.best_obj:
            self.best_obj = float(objective)
            self.best_values = values.copy()
        self._log_incumbent(objective)
        if self.callback is not None:
            action = self.callback(incumbent.values, incumbent.objective)
            if action is STOP:
                self.stopped = True

    def _log_incumbent(self, objective: float):
        if self.log_fh is not None:
            wall = time.perf_counter() - self.t0
            bound = max(self.global_bound(), objective)
            self.log_fh.write(
                f"{wall:.6f},{objective!r},{bound!r},{self.stats.nodes_explored}\n"
            )

    # -- node processing --------------------------------------------------

    def overlays(self, fixings):
        lo = self.base_lo.copy()
        hi = self.base_hi.copy()
        for idx, val in fixings:
            lo[idx] = val
            hi[idx] = val
        return lo, hi

    def solve_node(self, node: _Node):
        lo, hi = self.overlays(node.fixings)
        t0 = time.perf_counter()
        res = self.prep.solve(lo, hi)
        dt = time.perf_counter() - t0
        self.stats.lps_solved += 1
        self.stats.max_lp_seconds = max(self.stats.max_lp_seconds, dt)
        if res.status == "numeric_failure":
            raise SolverError("LP solve failed numerically", node.fixings)
        if res.status == "unbounded":
            raise SolverError("LP relaxation is unbounded", node.fixings)
        return res

    def heuristic_due(self) -> bool:
        if self.model.relu is None:
            return False
        if self.config.emphasis == "feasibility":
            return True
        return self.stats.nodes_explored % 10 == 1  # root and every tenth node

    def _fast_violation(self, values: np.ndarray) -> float:
        """Vectorized feasibility check against the prepared arrays."""
        prep = self.prep
        worst = float(np.max(self.base_lo - values, initial=0.0))
        worst = max(worst, float(np.max(values - self.base_hi, initial=0.0)))
        if prep.m:
            s = prep.b - prep.cols[:, : prep.n] @ values
            worst = max(worst, float(np.max(prep.slack_lo - s, initial=0.0)))
            worst = max(worst, float(np.max(s - prep.slack_hi, initial=0.0)))
        return worst

    def try_rounding(self, res) -> None:
        x = res.x[self.model.relu.x_idx]
        values = assignment_from_input(self.model, x)
        if self._fast_violation(values) > 1e-6:
            return
        self.offer(values, objective_value(self.model, values))

    def branch_variable(self, zvals: np.ndarray) -> int:
        frac = np.abs(zvals - 0.5)
        return int(np.argmin(frac))  # most fractional; argmin is layer-major on ties

    def run(self) -> SolveOutcome:
        cfg = self.config
        if cfg.node_log is not None:
            if hasattr(cfg.node_log, "write"):
                self.log_fh = cfg.node_log
            else:
                self.log_fh = open(cfg.node_log, "w")
                self.log_owned = True
            self.log_fh.write("wall_seconds,objective,bound,nodes\n")
        try:
            return self._run()
        finally:
            if self.log_owned and self.log_fh is not None:
                self.log_fh.close()

    def _run(self) -> SolveOutcome:
        cfg = self.config
        self.push(_Node(0.0, 0, np.inf, (), 0), prefer_dive=True)
        timed_out = False
        prefer_one = cfg.emphasis == "feasibility"
        diving = cfg.node_order == "hybrid"

        while not self.stopped:
            node = self.pop()
            if node is None:
                break
            if time.perf_counter() - self.t0 > cfg.time_limit_seconds:
                timed_out = True
                break
            self.stats.nodes_explored += 1
            res = self.solve_node(node)
            if res.status == "infeasible":
                continue
            bound = res.objective
            if bound <= self.best_obj + _PRUNE_SLACK:
                continue
            zvals = res.x[self.z_idx] if self.z_idx.size else np.zeros(0)
            fractional = (
                float(np.max(np.abs(zvals - np.round(zvals)), initial=0.0)) > _INT_TOL
            )
            if not fractional:
                self.offer(res.x, bound)
                continue
            if self.heuristic_due():
                self.try_rounding(res)
                if self.stopped:
                    break
            j = self.branch_variable(zvals)
            var = int(self.z_idx[j])
            first = 1.0 if prefer_one else 0.0
            for val, dive in ((1.0 - first, False), (first, diving)):
                self.counter += 1
                child = _Node(
                    -bound,
                    self.counter,
                    bound,
                    node.fixings + ((var, val),),
                    node.depth + 1,
                )
                self.push(child, prefer_dive=dive)
            # gap-based early finish
            if self.best_values is not None:
                gap = self.global_bound() - self.best_obj
                if gap <= cfg.gap_tolerance * max(1.0, abs(self.best_obj)):
                    break

        self.stats.wall_seconds = time.perf_counter() - self.t0
        if self.stopped:
            status = "stopped_by_callback"
            bound = max(self.global_bound(), self.best_obj)
        elif timed_out:
            status = "feasible" if self.best_values is not None else "timeout_no_incumbent"
            bound = max(self.global_bound(), self.best_obj)
        elif self.best_values is None:
            # frontier exhausted without an integral solution: every leaf was
            # LP-infeasible, so the MILP itself is infeasible
            status = "infeasible"
            bound = -np.inf
        else:
            remaining = self.global_bound()
            gap = remaining - self.best_obj
            if gap <= cfg.gap_tolerance * max(1.0, abs(self.best_obj)):
                status = "optimal"
                bound = max(remaining, self.best_obj)
            else:
                status = "feasible"
                bound = remaining
        return SolveOutcome(
            status=status,
            objective=self.best_obj if self.best_values is not None else None,
            bound=None if not np.isfinite(bound) else float(bound),
            best_values=self.best_values,
            pool=self.pool,
            stats=self.stats,
        )


def rounding_heuristic(model: MilpModel, lp_values) -> Optional[np.ndarray]:
    """Integral solution derived from an LP solution of an encoded network.

    Keeps the LP's input values, propagates them exactly through the attached
    network, and rounds each z to the sign of its propagated pre-activation.
    An already-integral LP solution maps to itself.  Returns None when the
    model has no network attachment or the (rare, numerical) feasibility
    check fails.
    """
    if model.relu is None:
        return None
    lp_values = np.asarray(lp_values, dtype=np.float64)
    values = assignment_from_input(model, lp_values[model.relu.x_idx])
    if constraint_violation(model, values) > 1e-6:
        return None
    return values


def branch_and_bound(
    model: MilpModel,
    config: Optional[SolverConfig] = None,
    callback: Optional[Callable] = None,
) -> SolveOutcome:
    """Solve the model to proven optimality or a time limit.

    ``callback(values, objective)`` runs synchronously on each new integral
    solution, in discovery order, and may return ``STOP`` to halt the search.
    Identical (model, config) pairs replay the identical node and incumbent
    sequence; only wall-clock-dependent exits can differ.
    """
    search = _Search(model, config or SolverConfig(), callback)
    return search.run()
