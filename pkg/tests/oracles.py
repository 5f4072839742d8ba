"""Independent oracles used by the test suite.

Everything here deliberately avoids the package's encoder and solver: affine
maps are propagated by hand per activation pattern and the per-pattern LPs go
to scipy.  These provide the ground truth the branch-and-bound engine and the
MILP encodings are checked against.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def _affine_maps(net, pattern_bits):
    """Per-layer (P, q) with pre_l = P x + q under the given hidden gating."""
    maps = []
    M = np.eye(net.n_inputs)
    v = np.zeros(net.n_inputs)
    offset = 0
    for l in range(net.layer_count):
        P = net.weights[l] @ M
        q = net.weights[l] @ v + net.biases[l]
        maps.append((P, q))
        if l < net.layer_count - 1:
            width = net.weights[l].shape[0]
            gate = np.array(pattern_bits[offset : offset + width], dtype=float)
            offset += width
            M = gate[:, None] * P
            v = gate * q
    return maps


def _pattern_lp(net, pattern_bits, objective_rows, box, l1_center=None, l1_radius=None):
    """Maximize objective_rows . y over one activation region; None if infeasible.

    Returns (value, x) using scipy's LP solver.  ``l1_center``/``l1_radius``
    add the |x - center|_1 <= radius constraint via auxiliary variables.
    """
    maps = _affine_maps(net, pattern_bits)
    n = net.n_inputs
    A_rows = []
    b_vals = []
    offset = 0
    for l in range(net.layer_count - 1):
        P, q = maps[l]
        width = P.shape[0]
        for i in range(width):
            if pattern_bits[offset + i]:
                A_rows.append(-P[i])  # P x + q >= 0
                b_vals.append(q[i])
            else:
                A_rows.append(P[i])  # P x + q <= 0
                b_vals.append(-q[i])
        offset += width
    P_out, q_out = maps[-1]
    c_x = objective_rows @ P_out
    const = float(objective_rows @ q_out)

    if l1_radius is None:
        A = np.array(A_rows) if A_rows else None
        b = np.array(b_vals) if A_rows else None
        res = linprog(
            -c_x,
            A_ub=A,
            b_ub=b,
            bounds=list(zip(box.lo, box.hi)),
            method="highs",
        )
        if not res.success:
            return None
        return -res.fun + const, res.x

    # variables [x, d]; d_k >= |x_k - center_k|, sum d <= radius
    n_all = 2 * n
    A_ub = []
    b_ub = []
    for row, rhs in zip(A_rows, b_vals):
        A_ub.append(np.concatenate([row, np.zeros(n)]))
        b_ub.append(rhs)
    for k in range(n):
        row = np.zeros(n_all)
        row[k] = 1.0
        row[n + k] = -1.0
        A_ub.append(row)  # x_k - d_k <= center_k
        b_ub.append(l1_center[k])
        row = np.zeros(n_all)
        row[k] = -1.0
        row[n + k] = -1.0
        A_ub.append(row)  # -x_k - d_k <= -center_k
        b_ub.append(-l1_center[k])
    row = np.zeros(n_all)
    row[n:] = 1.0
    A_ub.append(row)
    b_ub.append(l1_radius)
    c_full = np.concatenate([-c_x, np.zeros(n)])
    res = linprog(
        c_full,
        A_ub=np.array(A_ub),
        b_ub=np.array(b_ub),
        bounds=list(zip(box.lo, box.hi)) + [(0, l1_radius)] * n,
        method="highs",
    )
    if not res.success:
        return None
    return -res.fun + const, res.x[:n]


def _hidden_width(net):
    return sum(w.shape[0] for w in net.weights[:-1])


def fm_pattern_enumeration(net, box=None):
    """Exact max of the single output: one LP per hidden activation pattern."""
    assert net.n_outputs == 1
    if box is None:
        box = net.input_domain
    obj = np.array([1.0])
    best, best_x = -np.inf, None
    for bits in itertools.product((0, 1), repeat=_hidden_width(net)):
        out = _pattern_lp(net, bits, obj, box)
        if out is not None and out[0] > best:
            best, best_x = out
    return best, best_x


def vnn_pattern_enumeration(net, x0, eps, j, j_prime, box=None):
    """Exact max of y_{j'} - y_j over the L1 ball, one LP per pattern."""
    if box is None:
        box = net.input_domain
    obj = np.zeros(net.n_outputs)
    obj[j_prime] = 1.0
    obj[j] = -1.0
    best, best_x = -np.inf, None
    for bits in itertools.product((0, 1), repeat=_hidden_width(net)):
        out = _pattern_lp(net, bits, obj, box, l1_center=np.asarray(x0), l1_radius=eps)
        if out is not None and out[0] > best:
            best, best_x = out
    return best, best_x


def lp_via_scipy(A, relations, b, lo, hi, c):
    """Maximize c.x subject to mixed-sense rows; independent LP reference."""
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for row, rel, rhs in zip(A, relations, b):
        if rel == "<=":
            A_ub.append(row)
            b_ub.append(rhs)
        elif rel == ">=":
            A_ub.append(-row)
            b_ub.append(-rhs)
        else:
            A_eq.append(row)
            b_eq.append(rhs)
    res = linprog(
        -np.asarray(c),
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(A_eq) if A_eq else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=list(zip(lo, hi)),
        method="highs",
    )
    return res


def milp_model_via_scipy(model):
    """Solve a MilpModel with scipy's MILP (HiGHS): independent cross-check.

    Returns (status, objective) with status in {"optimal", "infeasible"}.
    """
    from scipy.optimize import milp as scipy_milp
    from scipy.optimize import Bounds as ScipyBounds
    from scipy.optimize import LinearConstraint as ScipyLinCon

    A, rel, b = model.dense_constraints()
    lb = np.full(len(b), -np.inf)
    ub = np.full(len(b), np.inf)
    for r, s in enumerate(rel):
        if s in ("<=", "="):
            ub[r] = b[r]
        if s in (">=", "="):
            lb[r] = b[r]
    integrality = np.zeros(model.n_variables)
    for i in model.binary_indices:
        integrality[i] = 1
    res = scipy_milp(
        -model.objective_vector(),
        constraints=[ScipyLinCon(A, lb, ub)] if len(b) else [],
        bounds=ScipyBounds(model.lower_bounds(), model.upper_bounds()),
        integrality=integrality,
    )
    if res.status == 2:
        return "infeasible", None
    assert res.status == 0, f"scipy milp status {res.status}"
    return "optimal", -res.fun
