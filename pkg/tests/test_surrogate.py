import numpy as np
import pytest

from sparsemip.network import Box, Network, forward, random_init
from sparsemip.pruning import PruningSpec, prune
from sparsemip.solver import SolverConfig
from sparsemip.surrogate import (
    VerificationInstance,
    maximize_direct,
    maximize_via_surrogate,
    verify_direct,
    verify_via_surrogate,
)

from oracles import fm_pattern_enumeration


def toy_net(weights, biases, lo=-1.0, hi=1.0):
    n0 = np.asarray(weights[0]).shape[1]
    return Network(
        tuple(np.asarray(w, dtype=float) for w in weights),
        tuple(np.asarray(b, dtype=float) for b in biases),
        Box(np.full(n0, lo), np.full(n0, hi)),
    )


def tilted_boundary_net():
    """y_k = x_k + 5 through a stably-active hidden layer on [0, 1]^2.

    Class 0 wins exactly when x_0 > x_1, so the adversarial region for an
    instance at (0.6, 0.4) is the half-plane x_1 > x_0, reachable inside an
    L1 ball of radius 0.5.
    """
    return toy_net(
        [np.eye(2), np.eye(2)],
        [np.array([5.0, 5.0]), np.array([0.0, 0.0])],
        lo=0.0,
        hi=1.0,
    )


class TestVerificationInstance:
    def test_rejects_misclassified_sample(self):
        net = tilted_boundary_net()
        with pytest.raises(ValueError, match="classify"):
            VerificationInstance(net, np.array([0.4, 0.6]), 0.5, j=0, j_prime=1)

    def test_rejects_bad_arguments(self):
        net = tilted_boundary_net()
        x0 = np.array([0.6, 0.4])
        with pytest.raises(ValueError):
            VerificationInstance(net, x0, -1.0, 0, 1)
        with pytest.raises(ValueError):
            VerificationInstance(net, x0, 0.5, 0, 0)
        with pytest.raises(ValueError):
            VerificationInstance(net, np.array([2.0, 0.0]), 0.5, 0, 1)

    def test_accepts_valid_instance(self):
        net = tilted_boundary_net()
        inst = VerificationInstance(net, np.array([0.6, 0.4]), 0.5, 0, 1)
        assert inst.eps == 0.5


class TestVerify:
    def instance(self, eps=0.5):
        return VerificationInstance(
            tilted_boundary_net(), np.array([0.6, 0.4]), eps, j=0, j_prime=1
        )

    def test_direct_finds_known_adversarial(self):
        result = verify_direct(self.instance())
        assert result.outcome == "adversarial-found"
        # the analytic adversarial region is x_1 > x_0
        assert result.x[1] > result.x[0]
        y = forward(self.instance().dense, result.x).output
        assert y[1] - y[0] > 1e-9
        assert np.abs(result.x - np.array([0.6, 0.4])).sum() <= 0.5 + 1e-6

    def test_surrogate_finds_adversarial_with_pruned_network(self):
        inst = self.instance()
        sparse = prune(inst.dense, PruningSpec("magnitude", "unstructured", 0.5))
        result = verify_via_surrogate(inst, sparse)
        assert result.outcome == "adversarial-found"
        y = forward(inst.dense, result.x).output
        assert y[1] - y[0] > 1e-9

    def test_eps_zero_always_none_found(self):
        result = verify_direct(self.instance(eps=0.0))
        assert result.outcome == "none-found"
        assert result.solver_status == "optimal"

    def test_sparse_equals_dense_degenerate_surrogate(self):
        inst = self.instance()
        direct = verify_direct(inst)
        degenerate = verify_via_surrogate(inst, inst.dense)
        assert direct.outcome == degenerate.outcome == "adversarial-found"
        y = forward(inst.dense, degenerate.x).output
        assert y[1] - y[0] > 1e-9

    def test_none_found_when_ball_too_small(self):
        # distance to the boundary x_0 = x_1 is 0.2 in L1
        result = verify_direct(self.instance(eps=0.1))
        assert result.outcome == "none-found"
        assert result.solver_status == "optimal"

    def test_trained_random_net_soundness(self):
        # the returned adversarial input from a less structured instance also
        # passes the dense forward recheck
        for seed in range(4):
            net = random_init([4, 8, 3], seed=seed)
            rng = np.random.default_rng(seed)
            x0 = net.input_domain.sample(rng, 1)[0]
            y0 = forward(net, x0).output
            j = int(np.argmax(y0))
            j_prime = int(np.argsort(y0)[-2])
            inst = VerificationInstance(net, x0, 1.5, j, j_prime)
            sparse = prune(net, PruningSpec("magnitude", "unstructured", 0.5))
            result = verify_via_surrogate(
                inst, sparse, SolverConfig(emphasis="feasibility")
            )
            if result.outcome == "adversarial-found":
                y = forward(net, result.x).output
                assert y[j_prime] - y[j] > 1e-9
                assert np.abs(result.x - x0).sum() <= 1.5 + 1e-6

    def test_incompatible_surrogate_rejected(self):
        inst = self.instance()
        other = random_init([3, 4, 2], seed=0)
        with pytest.raises(ValueError, match="input size"):
            verify_via_surrogate(inst, other)


class TestMaximize:
    def test_sparse_equals_dense_matches_oracle(self):
        for seed in range(4):
            net = random_init([3, 5, 1], seed=seed)
            result = maximize_via_surrogate(net, net)
            oracle, _ = fm_pattern_enumeration(net)
            assert result.solver_status == "optimal"
            assert result.value == pytest.approx(oracle, abs=1e-5)
            assert result.value == forward(net, result.x).output[0]

    def test_constant_network_returns_bias(self):
        dense = toy_net([np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), [1.75]])
        sparse = prune(dense, PruningSpec("magnitude", "unstructured", 0.5))
        result = maximize_via_surrogate(dense, sparse)
        assert result.incumbents_evaluated >= 1
        assert result.value == pytest.approx(1.75, abs=1e-12)

    def test_reported_value_is_exact_forward(self):
        dense = random_init([4, 6, 1], seed=1)
        sparse = prune(dense, PruningSpec("magnitude", "unstructured", 0.8))
        result = maximize_via_surrogate(
            dense, sparse, SolverConfig(emphasis="feasibility")
        )
        assert result.value == forward(dense, result.x).output[0]

    def test_trace_is_monotone_and_value_is_max(self):
        dense = random_init([4, 8, 1], seed=2)
        sparse = prune(dense, PruningSpec("magnitude", "unstructured", 0.5))
        result = maximize_via_surrogate(
            dense, sparse, SolverConfig(emphasis="feasibility")
        )
        trace = result.best_value_trace
        assert len(trace) == result.incumbents_evaluated
        assert all(b >= a for a, b in zip(trace, trace[1:]))
        assert result.value == pytest.approx(trace[-1], abs=1e-12)

    def test_direct_equals_degenerate_surrogate(self):
        dense = random_init([3, 6, 1], seed=3)
        a = maximize_direct(dense)
        b = maximize_via_surrogate(dense, dense)
        assert a.value == pytest.approx(b.value, abs=1e-12)
        assert a.solver_status == b.solver_status == "optimal"

    def test_multi_output_rejected(self):
        net = random_init([3, 4, 2], seed=0)
        with pytest.raises(ValueError):
            maximize_direct(net)
