"""MILP models embedding ReLU networks for verification and maximization.

A :class:`MilpModel` holds continuous/binary variables with bounds, sparse
linear constraints, and a linear maximize objective.  The network encoder
emits, per unstable hidden neuron with pre-activation interval [lo, hi]:

    g = W h_prev + b          (affine definition)
    h >= g,  h >= 0           (ReLU lower envelope)
    h <= g - lo (1 - z)       (z = 1 forces h = g)
    h <= hi z                 (z = 0 forces h = 0, hence g <= 0 via h >= g)

Stable neurons are substituted out before any variable is created: stably
inactive neurons become a single variable fixed at zero, stably active ones a
single variable defined by the affine row.  Intervals are inflated by
``bounds.BIG_M_SLACK`` before use so borderline forward values stay feasible.
Variable order is layer-major then neuron index, so rebuilding a model from
the same inputs is byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import STABLY_ACTIVE, STABLY_INACTIVE, ActivationBounds
from .network import Network

__all__ = [
    "LE",
    "EQ",
    "GE",
    "Variable",
    "LinearConstraint",
    "MilpModel",
    "ReluStructure",
    "EncodingError",
    "encode_network",
    "encode_vnn",
    "encode_fm",
    "assignment_from_input",
    "constraint_violation",
    "objective_value",
    "write_lp_file",
]

LE = "<="
EQ = "="
GE = ">="
_RELATIONS = (LE, EQ, GE)


class EncodingError(ValueError):
    """The network cannot be encoded (for example, non-finite bounds)."""


@dataclass
class Variable:
    name: str
    lo: float
    hi: float
    binary: bool = False


@dataclass
class LinearConstraint:
    coeffs: list  # [(var_index, coefficient), ...] with zero coefficients dropped
    relation: str
    rhs: float
    name: str = ""


class MilpModel:
    """Sparse linear maximize model with named variables."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.variables: list = []
        self.constraints: list = []
        self.objective: list = []  # [(var_index, coefficient), ...]
        self.name_to_index: dict = {}
        self.relu: Optional["ReluStructure"] = None

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def n_constraints(self) -> int:
        return len(self.constraints)

    @property
    def binary_indices(self) -> list:
        return [i for i, v in enumerate(self.variables) if v.binary]

    def add_variable(self, name: str, lo: float, hi: float, binary: bool = False) -> int:
        if name in self.name_to_index:
            raise ValueError(f"duplicate variable name {name!r}")
        if binary and not (lo == 0.0 and hi == 1.0):
            raise ValueError("binary variables must have bounds [0, 1]")
        if lo > hi:
            raise ValueError(f"variable {name!r} has lo > hi")
        idx = len(self.variables)
        self.variables.append(Variable(name, float(lo), float(hi), binary))
        self.name_to_index[name] = idx
        return idx

    def add_constraint(self, coeffs, relation: str, rhs: float, name: str = "") -> int:
        if relation not in _RELATIONS:
            raise ValueError(f"unknown relation {relation!r}")
        clean = []
        for idx, coef in coeffs:
            if not (0 <= idx < len(self.variables)):
                raise ValueError(f"constraint references undeclared variable {idx}")
            if coef != 0.0:
                clean.append((int(idx), float(coef)))
        row = len(self.constraints)
        self.constraints.append(
            LinearConstraint(clean, relation, float(rhs), name or f"c{row}")
        )
        return row

    def set_objective(self, coeffs) -> None:
        self.objective = [(int(i), float(c)) for i, c in coeffs if c != 0.0]

    def lower_bounds(self) -> np.ndarray:
        return np.array([v.lo for v in self.variables])

    def upper_bounds(self) -> np.ndarray:
        return np.array([v.hi for v in self.variables])

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(len(self.variables))
        for i, coef in self.objective:
            c[i] += coef
        return c

    def dense_constraints(self):
        """(A, relations, b) with A dense; fine at the model sizes handled here."""
        m, n = len(self.constraints), len(self.variables)
        A = np.zeros((m, n))
        b = np.zeros(m)
        rel = []
        for r, con in enumerate(self.constraints):
            for i, coef in con.coeffs:
                A[r, i] += coef
            b[r] = con.rhs
            rel.append(con.relation)
        return A, rel, b

    def nonzero_coefficient_count(self) -> int:
        return sum(len(c.coeffs) for c in self.constraints)


@dataclass
class ReluStructure:
    """Mapping from model variables back to network coordinates.

    Index arrays hold -1 where a neuron has no variable of that kind (stable
    neurons carry no g/z; every hidden neuron keeps an h variable).  Attached
    to encoder-produced models so solvers and callers can reconstruct network
    quantities from LP solutions.
    """

    net: Network
    x_idx: np.ndarray
    h_idx: tuple
    g_idx: tuple
    z_idx: tuple
    y_idx: np.ndarray
    stability: tuple
    delta_idx: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    eps: Optional[float] = None
    target_pair: Optional[tuple] = None  # (j, j_prime) for verification models

    def input_values(self, values: np.ndarray) -> np.ndarray:
        return values[self.x_idx]

    def output_values(self, values: np.ndarray) -> np.ndarray:
        return values[self.y_idx]


def encode_network(model: MilpModel, net: Network, bounds: ActivationBounds, input_indices):
    """Append the network constraints to ``model``; returns output var indices.

    ``bounds`` must be sound for the box the input variables live in.
    """
    input_indices = np.asarray(input_indices, dtype=np.int64)
    if input_indices.shape[0] != net.n_inputs:
        raise EncodingError("input variable count does not match network")
    for lo, hi in zip(bounds.pre_lo, bounds.pre_hi):
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise EncodingError("unbounded pre-activation interval; big-M unavailable")

    h_prev = input_indices
    h_all = []
    g_all = []
    z_all = []
    stab_all = []
    last = net.layer_count - 1
    for l in range(last):
        w, b = net.weights[l], net.biases[l]
        lo_infl, hi_infl = bounds.big_m_interval(l)
        flags = bounds.stability(l)
        width = w.shape[0]
        h_idx = np.full(width, -1, dtype=np.int64)
        g_idx = np.full(width, -1, dtype=np.int64)
        z_idx = np.full(width, -1, dtype=np.int64)
        for i in range(width):
            tag = f"{l + 1}_{i}"
            affine = [(int(h_prev[j]), w[i, j]) for j in np.flatnonzero(w[i])]
            if flags[i] == STABLY_INACTIVE:
                h_idx[i] = model.add_variable(f"h_{tag}", 0.0, 0.0)
            elif flags[i] == STABLY_ACTIVE:
                h_idx[i] = model.add_variable(f"h_{tag}", lo_infl[i], hi_infl[i])
                model.add_constraint(
                    [(h_idx[i], 1.0)] + [(j, -c) for j, c in affine],
                    EQ,
                    b[i],
                    name=f"def_h_{tag}",
                )
            else:
                g_idx[i] = model.add_variable(f"g_{tag}", lo_infl[i], hi_infl[i])
                h_idx[i] = model.add_variable(f"h_{tag}", 0.0, max(0.0, hi_infl[i]))
                z_idx[i] = model.add_variable(f"z_{tag}", 0.0, 1.0, binary=True)
                model.add_constraint(
                    [(g_idx[i], 1.0)] + [(j, -c) for j, c in affine],
                    EQ,
                    b[i],
                    name=f"def_g_{tag}",
                )
                model.add_constraint(
                    [(h_idx[i], 1.0), (g_idx[i], -1.0)], GE, 0.0, name=f"relu_lb_{tag}"
                )
                model.add_constraint([(h_idx[i], 1.0)], GE, 0.0, name=f"relu_pos_{tag}")
                model.add_constraint(
                    [(h_idx[i], 1.0), (g_idx[i], -1.0), (z_idx[i], -lo_infl[i])],
                    LE,
                    -lo_infl[i],
                    name=f"relu_on_{tag}",
                )
                model.add_constraint(
                    [(h_idx[i], 1.0), (z_idx[i], -hi_infl[i])],
                    LE,
                    0.0,
                    name=f"relu_off_{tag}",
                )
        h_all.append(h_idx)
        g_all.append(g_idx)
        z_all.append(z_idx)
        stab_all.append(flags)
        h_prev = h_idx

    w, b = net.weights[last], net.biases[last]
    lo_infl, hi_infl = bounds.big_m_interval(last)
    y_idx = np.empty(net.n_outputs, dtype=np.int64)
    for j in range(net.n_outputs):
        y_idx[j] = model.add_variable(f"y_{j}", lo_infl[j], hi_infl[j])
        affine = [(int(h_prev[k]), w[j, k]) for k in np.flatnonzero(w[j])]
        model.add_constraint(
            [(int(y_idx[j]), 1.0)] + [(k, -c) for k, c in affine],
            EQ,
            b[j],
            name=f"def_y_{j}",
        )

    model.relu = ReluStructure(
        net=net,
        x_idx=input_indices,
        h_idx=tuple(h_all),
        g_idx=tuple(g_all),
        z_idx=tuple(z_all),
        y_idx=y_idx,
        stability=tuple(stab_all),
    )
    return y_idx


def encode_vnn(
    net: Network,
    bounds: ActivationBounds,
    x0,
    eps: float,
    j: int,
    j_prime: int,
) -> MilpModel:
    """Adversarial-search model: maximize y_{j'} - y_j over the L1 ball.

    ``bounds`` must have been propagated over the eps-tightened input box;
    the input variables take their bounds from ``bounds.input_box``.  The L1
    constraint is linearized with one auxiliary d_k >= |x_k - x0_k| per input.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    if j == j_prime:
        raise ValueError("target class must differ from the true class")
    if not (0 <= j < net.n_outputs and 0 <= j_prime < net.n_outputs):
        raise ValueError("class indices out of range")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if not net.input_domain.contains(x0):
        raise ValueError("x0 lies outside the network input domain")

    model = MilpModel("vnn")
    box = bounds.input_box
    x_idx = np.array(
        [model.add_variable(f"x_{k}", box.lo[k], box.hi[k]) for k in range(net.n_inputs)]
    )
    d_idx = np.array(
        [model.add_variable(f"d_{k}", 0.0, eps) for k in range(net.n_inputs)]
    )
    for k in range(net.n_inputs):
        model.add_constraint(
            [(int(d_idx[k]), 1.0), (int(x_idx[k]), -1.0)], GE, -x0[k], name=f"abs_pos_{k}"
        )
        model.add_constraint(
            [(int(d_idx[k]), 1.0), (int(x_idx[k]), 1.0)], GE, x0[k], name=f"abs_neg_{k}"
        )
    model.add_constraint(
        [(int(i), 1.0) for i in d_idx], LE, eps, name="l1_budget"
    )
    y_idx = encode_network(model, net, bounds, x_idx)
    model.set_objective([(int(y_idx[j_prime]), 1.0), (int(y_idx[j]), -1.0)])
    model.relu.delta_idx = d_idx
    model.relu.x0 = x0
    model.relu.eps = float(eps)
    model.relu.target_pair = (int(j), int(j_prime))
    return model


def encode_fm(net: Network, bounds: ActivationBounds) -> MilpModel:
    """Maximize the single network output over the input box."""
    if net.n_outputs != 1:
        raise ValueError("function maximization requires a single-output network")
    model = MilpModel("fm")
    box = bounds.input_box
    x_idx = np.array(
        [model.add_variable(f"x_{k}", box.lo[k], box.hi[k]) for k in range(net.n_inputs)]
    )
    y_idx = encode_network(model, net, bounds, x_idx)
    model.set_objective([(int(y_idx[0]), 1.0)])
    return model


def assignment_from_input(model: MilpModel, x) -> np.ndarray:
    """Full variable assignment implied by an input: exact forward propagation.

    z variables take the sign of their neuron's propagated pre-activation, so
    the assignment satisfies every encoded constraint whenever the attached
    bounds were sound.
    """
    relu = model.relu
    if relu is None:
        raise ValueError("model has no attached network structure")
    net = relu.net
    x = np.asarray(x, dtype=np.float64)
    values = np.zeros(model.n_variables)
    values[relu.x_idx] = x
    if relu.delta_idx is not None:
        values[relu.delta_idx] = np.abs(x - relu.x0)
    h = x
    for l in range(net.layer_count - 1):
        g = net.weights[l] @ h + net.biases[l]
        h = np.maximum(0.0, g)
        values[relu.h_idx[l]] = h
        unstable = relu.z_idx[l] >= 0
        values[relu.g_idx[l][unstable]] = g[unstable]
        values[relu.z_idx[l][unstable]] = (g[unstable] > 0.0).astype(np.float64)
    y = net.weights[-1] @ h + net.biases[-1]
    values[relu.y_idx] = y
    return values


def constraint_violation(model: MilpModel, values: np.ndarray) -> float:
    """Largest constraint/bound violation of an assignment (0 when feasible)."""
    worst = 0.0
    lo = model.lower_bounds()
    hi = model.upper_bounds()
    worst = max(worst, float(np.max(lo - values, initial=0.0)))
    worst = max(worst, float(np.max(values - hi, initial=0.0)))
    for con in model.constraints:
        lhs = sum(values[i] * c for i, c in con.coeffs)
        if con.relation == LE:
            worst = max(worst, lhs - con.rhs)
        elif con.relation == GE:
            worst = max(worst, con.rhs - lhs)
        else:
            worst = max(worst, abs(lhs - con.rhs))
    return worst


def objective_value(model: MilpModel, values: np.ndarray) -> float:
    return float(sum(values[i] * c for i, c in model.objective))


# -- LP file export -----------------------------------------------------------


def _num(x: float) -> str:
    return repr(float(x))


def _terms(coeffs, variables) -> str:
    parts = []
    for i, coef in coeffs:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {variables[i].name}")
    if not parts:
        return "0 " + variables[0].name
    joined = " ".join(parts)
    return joined[2:] if joined.startswith("+ ") else joined


def write_lp_file(model: MilpModel, path) -> None:
    """Emit the model in LP text format with deterministic ordering."""
    lines = [f"\\ {model.name}", "Maximize"]
    lines.append(f" obj: {_terms(model.objective, model.variables)}")
    lines.append("Subject To")
    for con in model.constraints:
        lines.append(
            f" {con.name}: {_terms(con.coeffs, model.variables)} {con.relation} {_num(con.rhs)}"
        )
    lines.append("Bounds")
    for v in model.variables:
        if v.binary:
            continue
        if np.isinf(v.lo) and np.isinf(v.hi):
            lines.append(f" {v.name} free")
        elif np.isinf(v.lo):
            lines.append(f" {v.name} <= {_num(v.hi)}")
        elif np.isinf(v.hi):
            lines.append(f" {v.name} >= {_num(v.lo)}")
        else:
            lines.append(f" {_num(v.lo)} <= {v.name} <= {_num(v.hi)}")
    binaries = [v.name for v in model.variables if v.binary]
    if binaries:
        lines.append("Binary")
        for name in binaries:
            lines.append(f" {name}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
