import json

import numpy as np
import pytest

from sparsemip.network import (
    Box,
    Dataset,
    Network,
    NetworkFormatError,
    _loss_and_grads,
    accuracy,
    forward,
    forward_batch,
    load_idx_dataset,
    load_network,
    make_synthetic_classification,
    random_init,
    save_network,
    train,
)


def toy_net(weights, biases, lo=-1.0, hi=1.0):
    n0 = np.asarray(weights[0]).shape[1]
    return Network(
        tuple(np.asarray(w, dtype=float) for w in weights),
        tuple(np.asarray(b, dtype=float) for b in biases),
        Box(np.full(n0, lo), np.full(n0, hi)),
    )


class TestForward:
    def test_zero_network_outputs_zero(self):
        net = toy_net(
            [np.zeros((3, 2)), np.zeros((1, 3))], [np.zeros(3), np.zeros(1)]
        )
        acts = forward(net, [0.4, -0.9])
        assert np.array_equal(acts.output, [0.0])

    def test_sign_flip_then_relu(self):
        # hidden pre = -x, so x=-2 gives pre=2, post=2, output 2
        net = toy_net([[[-1.0]], [[1.0]]], [[0.0], [0.0]], lo=-3, hi=3)
        acts = forward(net, [-2.0])
        assert acts.pre[0][0] == 2.0
        assert acts.post[0][0] == 2.0
        assert acts.output[0] == 2.0

    def test_matches_hand_evaluated_products(self):
        # frozen from an independent two-matrix-product evaluation of the
        # seed-0 [2,3,1] initialization
        net = random_init([2, 3, 1], seed=0)
        assert forward(net, net.input_domain.midpoint()).output[0] == 0.0
        y = forward(net, [0.3, -0.7]).output[0]
        assert y == pytest.approx(0.36294580447153646, abs=1e-12)

    def test_dimension_mismatch_raises(self):
        net = random_init([4, 3, 2], seed=1)
        with pytest.raises(ValueError):
            forward(net, [1.0, 2.0])

    def test_deterministic(self):
        net = random_init([5, 4, 2], seed=9)
        x = np.linspace(-1, 1, 5)
        a = forward(net, x)
        b = forward(net, x)
        for pa, pb in zip(a.pre, b.pre):
            assert np.array_equal(pa, pb)

    def test_relu_identity_on_hidden_layers(self):
        rng = np.random.default_rng(5)
        for trial in range(20):
            net = random_init([4, 6, 5, 2], seed=trial)
            x = rng.uniform(-1, 1, 4)
            acts = forward(net, x)
            for l in range(net.layer_count - 1):
                assert np.array_equal(acts.post[l], np.maximum(0.0, acts.pre[l]))
            assert np.array_equal(acts.post[-1], acts.pre[-1])

    def test_batch_matches_single(self):
        net = random_init([3, 8, 4], seed=2)
        X = np.random.default_rng(0).uniform(-1, 1, (10, 3))
        batch = forward_batch(net, X)
        for i in range(10):
            assert np.allclose(batch[i], forward(net, X[i]).output, atol=1e-12)


class TestStructure:
    def test_shape_contract(self):
        net = random_init([100, 50, 1], seed=7)
        assert net.weights[0].shape == (50, 100)
        assert net.weights[1].shape == (1, 50)
        assert net.dims == [100, 50, 1]

    def test_random_init_deterministic(self):
        a = random_init([100, 50, 1], seed=7)
        b = random_init([100, 50, 1], seed=7)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_large_grid_point_constructs(self):
        net = random_init([10000, 200, 200, 200, 200, 200, 1], seed=0)
        assert net.dims == [10000, 200, 200, 200, 200, 200, 1]

    def test_bad_shapes_rejected(self):
        with pytest.raises(ValueError):
            random_init([5], seed=0)
        with pytest.raises(ValueError):
            toy_net([np.zeros((3, 2)), np.zeros((1, 4))], [np.zeros(3), np.zeros(1)])
        with pytest.raises(ValueError):
            toy_net([np.zeros((3, 2))], [np.zeros(4)])

    def test_networks_are_immutable(self):
        net = random_init([3, 3, 1], seed=0)
        with pytest.raises(ValueError):
            net.weights[0][0, 0] = 5.0


class TestTraining:
    def blobs(self, seed=3):
        return make_synthetic_classification(2, 2, 200, seed=seed)

    def test_zero_epochs_is_identity(self):
        net = random_init([2, 16, 2], seed=0)
        out = train(net, self.blobs(), epochs=0, learning_rate=0.1)
        for wa, wb in zip(net.weights, out.weights):
            assert np.array_equal(wa, wb)

    def test_separable_blobs_reach_high_accuracy(self):
        # blob separability itself is vouched for by a least-squares linear
        # classifier oracle (>= 0.99 on this seed)
        data = self.blobs()
        net = random_init([2, 16, 2], seed=0)
        fitted = train(net, data, epochs=50, learning_rate=0.5, batch_size=32, seed=0)
        assert accuracy(fitted, data) >= 0.95

    def test_same_seed_same_result(self):
        data = self.blobs()
        net = random_init([2, 8, 2], seed=1)
        a = train(net, data, epochs=3, learning_rate=0.2, batch_size=16, seed=5)
        b = train(net, data, epochs=3, learning_rate=0.2, batch_size=16, seed=5)
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)

    def test_arity_mismatch_rejected(self):
        net = random_init([2, 8, 3], seed=1)
        with pytest.raises(ValueError):
            train(net, self.blobs(), epochs=1, learning_rate=0.1)

    def test_masked_training_keeps_zeros(self):
        data = self.blobs()
        net = random_init([2, 8, 2], seed=1)
        masks = [np.ones_like(w) for w in net.weights]
        masks[0][0, :] = 0.0
        out = train(
            net, data, epochs=3, learning_rate=0.2, weight_masks=masks, seed=0
        )
        assert np.all(out.weights[0][0, :] == 0.0)

    def test_gradient_matches_finite_differences(self):
        # central differences on a 2-8-2 net; re-sample inputs that land within
        # 1e-3 of a ReLU kink so the comparison stays differentiable
        rng = np.random.default_rng(12)
        net = random_init([2, 8, 2], seed=4)
        ws = [w.copy() for w in net.weights]
        bs = [b.copy() for b in net.biases]
        for attempt in range(50):
            X = rng.uniform(-1, 1, (4, 2))
            Y = np.zeros((4, 2))
            Y[np.arange(4), rng.integers(0, 2, 4)] = 1.0
            _, grads_w, grads_b = _loss_and_grads(ws, bs, X, Y, "classification")
            pre1 = X @ ws[0].T + bs[0]
            if np.min(np.abs(pre1)) < 1e-3:
                continue
            break
        else:
            pytest.fail("could not sample a batch away from ReLU kinks")
        step = 1e-5
        for l in range(2):
            flat = ws[l].ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                lp, _, _ = _loss_and_grads(ws, bs, X, Y, "classification")
                flat[k] = orig - step
                lm, _, _ = _loss_and_grads(ws, bs, X, Y, "classification")
                flat[k] = orig
                fd = (lp - lm) / (2 * step)
                an = grads_w[l].ravel()[k]
                denom = max(abs(fd), abs(an), 1e-8)
                assert abs(fd - an) / denom < 1e-4, (l, k, fd, an)

    def test_regression_training_reduces_loss(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (100, 2))
        y = X[:, 0] - 0.5 * X[:, 1]
        data = Dataset(X, y, "regression", Box.symmetric(2))
        net = random_init([2, 8, 1], seed=0)
        before, _, _ = _loss_and_grads(
            list(net.weights), list(net.biases), X, y.reshape(-1, 1), "regression"
        )
        fitted = train(net, data, epochs=30, learning_rate=0.1, seed=0)
        after, _, _ = _loss_and_grads(
            list(fitted.weights), list(fitted.biases), X, y.reshape(-1, 1), "regression"
        )
        assert after < before * 0.2


class TestSerialization:
    def test_round_trip_is_lossless(self, tmp_path):
        net = train(
            random_init([3, 7, 2], seed=0),
            make_synthetic_classification(3, 2, 60, seed=0),
            epochs=2,
            learning_rate=0.3,
        )
        path = tmp_path / "net.json"
        save_network(net, path)
        back = load_network(path)
        for wa, wb in zip(net.weights, back.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(net.biases, back.biases):
            assert np.array_equal(ba, bb)
        assert np.array_equal(net.input_domain.lo, back.input_domain.lo)

    def test_mismatched_shape_is_parse_error(self, tmp_path):
        net = random_init([2, 3, 1], seed=0)
        path = tmp_path / "net.json"
        save_network(net, path)
        doc = json.loads(path.read_text())
        doc["layers"][0]["weights"] = doc["layers"][0]["weights"][:-1]
        path.write_text(json.dumps(doc))
        with pytest.raises(NetworkFormatError, match="layer 0"):
            load_network(path)

    def test_missing_field_is_parse_error(self, tmp_path):
        path = tmp_path / "net.json"
        path.write_text(json.dumps({"dims": [2, 1]}))
        with pytest.raises(NetworkFormatError, match="domain_lo"):
            load_network(path)

    def test_not_json_is_parse_error(self, tmp_path):
        path = tmp_path / "net.json"
        path.write_text("weights: nope")
        with pytest.raises(NetworkFormatError):
            load_network(path)

    def test_foreign_writer_round_trip(self, tmp_path):
        # emulate a second, independent writer for the same format and check
        # forward agreement on random inputs
        rng = np.random.default_rng(8)
        W1 = rng.normal(size=(4, 3))
        b1 = rng.normal(size=4)
        W2 = rng.normal(size=(2, 4))
        b2 = rng.normal(size=2)
        doc_lines = [
            "{",
            '"dims": [3, 4, 2],',
            '"domain_lo": [-1.0, -1.0, -1.0],',
            '"domain_hi": [1.0, 1.0, 1.0],',
            '"layers": [',
            json.dumps({"weights": list(W1.ravel()), "biases": list(b1)}) + ",",
            json.dumps({"weights": list(W2.ravel()), "biases": list(b2)}),
            "]}",
        ]
        path = tmp_path / "foreign.json"
        path.write_text("\n".join(doc_lines))
        net = load_network(path)
        for _ in range(10):
            x = rng.uniform(-1, 1, 3)
            expect = W2 @ np.maximum(0.0, W1 @ x + b1) + b2
            assert np.allclose(forward(net, x).output, expect, atol=1e-9)


class TestSyntheticData:
    def test_balanced_generation(self):
        data = make_synthetic_classification(4, 2, 200, seed=0)
        assert np.sum(data.y == 0) == 100
        assert np.sum(data.y == 1) == 100

    def test_deterministic_per_seed(self):
        a = make_synthetic_classification(4, 3, 90, seed=11)
        b = make_synthetic_classification(4, 3, 90, seed=11)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.y, b.y)

    def test_inside_unit_box(self):
        data = make_synthetic_classification(6, 3, 120, seed=2)
        assert data.X.min() >= 0.0
        assert data.X.max() <= 1.0

    def test_trainable_to_high_accuracy(self):
        # separation target: a small 2-layer net fits the blobs
        data = make_synthetic_classification(16, 3, 300, seed=1)
        net = random_init([16, 32, 32, 3], seed=0)
        fitted = train(net, data, epochs=30, learning_rate=0.1, seed=0)
        assert accuracy(fitted, data) >= 0.9


def write_idx(tmp_path, images, labels):
    import struct

    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    ipath = tmp_path / "imgs.idx"
    lpath = tmp_path / "labels.idx"
    with open(ipath, "wb") as fh:
        fh.write(struct.pack(">iiii", 0x00000803, *images.shape))
        fh.write(images.tobytes())
    with open(lpath, "wb") as fh:
        fh.write(struct.pack(">ii", 0x00000801, labels.shape[0]))
        fh.write(labels.tobytes())
    return ipath, lpath


class TestIdxLoader:
    def test_full_size_gives_784_inputs(self, tmp_path):
        rng = np.random.default_rng(0)
        ipath, lpath = write_idx(
            tmp_path, rng.integers(0, 256, (5, 28, 28)), rng.integers(0, 10, 5)
        )
        data = load_idx_dataset(ipath, lpath)
        assert data.X.shape == (5, 784)
        assert data.X.max() <= 1.0

    def test_downscale_to_18_gives_324_inputs(self, tmp_path):
        rng = np.random.default_rng(1)
        imgs = rng.integers(0, 256, (3, 28, 28))
        ipath, lpath = write_idx(tmp_path, imgs, rng.integers(0, 10, 3))
        data = load_idx_dataset(ipath, lpath, downscale=18)
        assert data.X.shape == (3, 324)
        # area averaging preserves the image mean
        for i in range(3):
            assert data.X[i].mean() == pytest.approx(imgs[i].mean() / 255.0, abs=1e-9)

    def test_max_samples_truncates(self, tmp_path):
        rng = np.random.default_rng(2)
        ipath, lpath = write_idx(
            tmp_path, rng.integers(0, 256, (12, 28, 28)), rng.integers(0, 10, 12)
        )
        data = load_idx_dataset(ipath, lpath, max_samples=10)
        assert len(data) == 10

    def test_bad_magic_rejected(self, tmp_path):
        import struct

        path = tmp_path / "bad.idx"
        with open(path, "wb") as fh:
            fh.write(struct.pack(">iiii", 0x12345678, 1, 28, 28))
            fh.write(bytes(784))
        with pytest.raises(NetworkFormatError, match="magic"):
            load_idx_dataset(path, path)

    def test_truncated_payload_rejected(self, tmp_path):
        import struct

        ipath = tmp_path / "short.idx"
        with open(ipath, "wb") as fh:
            fh.write(struct.pack(">iiii", 0x00000803, 2, 28, 28))
            fh.write(bytes(784))  # one image short
        with pytest.raises(NetworkFormatError, match="truncated"):
            load_idx_dataset(ipath, ipath)
