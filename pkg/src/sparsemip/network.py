"""Fully-connected ReLU networks: evaluation, SGD training, serialization, datasets.

Networks are immutable once constructed (weight/bias arrays are frozen), so
they can be shared freely between concurrent workers.  All hidden layers use
ReLU; the output layer is affine, which lets downstream objectives built from
outputs take negative values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Box",
    "Network",
    "LayerActivations",
    "Dataset",
    "NetworkFormatError",
    "TrainingDivergenceError",
    "forward",
    "forward_batch",
    "predict",
    "accuracy",
    "train",
    "random_init",
    "save_network",
    "load_network",
    "make_synthetic_classification",
    "load_idx_dataset",
]


class NetworkFormatError(ValueError):
    """A network file is malformed; the message names the offending field."""


class TrainingDivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, loss: float):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}")


def _frozen(a, dtype=np.float64) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Box:
    """Axis-aligned box lo <= x <= hi, used as an input domain."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", _frozen(np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", _frozen(np.atleast_1d(self.hi)))
        if self.lo.shape != self.hi.shape:
            raise ValueError("box lo/hi shapes differ")
        if not (np.isfinite(self.lo).all() and np.isfinite(self.hi).all()):
            raise ValueError("box bounds must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("box has lo > hi")

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x: np.ndarray, atol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lo - atol) and np.all(x <= self.hi + atol))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.dim))

    @staticmethod
    def symmetric(dim: int, radius: float = 1.0) -> "Box":
        return Box(np.full(dim, -radius), np.full(dim, radius))

    @staticmethod
    def unit(dim: int) -> "Box":
        return Box(np.zeros(dim), np.ones(dim))


@dataclass(frozen=True)
class Network:
    """Layered dense ReLU network y = W_L h_{L-1} + b_L, h_l = relu(W_l h_{l-1} + b_l).

    ``weights[l]`` has shape (n_{l+1-ish}, n_l-previous); concretely
    ``weights[l].shape == (dims[l+1], dims[l])`` for l in 0..L-1.  The final
    layer is affine only.
    """

    weights: tuple
    biases: tuple
    input_domain: Box

    def __post_init__(self):
        ws = tuple(_frozen(w) for w in self.weights)
        bs = tuple(_frozen(b) for b in self.biases)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        if len(ws) == 0:
            raise ValueError("network needs at least one layer")
        if len(ws) != len(bs):
            raise ValueError("weights/biases layer counts differ")
        prev = None
        for l, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.ndim != 1:
                raise ValueError(f"layer {l}: weights must be 2-d, biases 1-d")
            if w.shape[0] != b.shape[0]:
                raise ValueError(
                    f"layer {l}: {w.shape[0]} weight rows vs {b.shape[0]} biases"
                )
            if prev is not None and w.shape[1] != prev:
                raise ValueError(
                    f"layer {l}: expected {prev} input columns, got {w.shape[1]}"
                )
            prev = w.shape[0]
        if self.input_domain.dim != ws[0].shape[1]:
            raise ValueError("input domain dimension does not match first layer")

    @property
    def layer_count(self) -> int:
        return len(self.weights)

    @property
    def dims(self) -> list:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    def with_parameters(self, weights, biases) -> "Network":
        return Network(tuple(weights), tuple(biases), self.input_domain)


@dataclass(frozen=True)
class LayerActivations:
    """All intermediate values of one forward pass.

    ``pre[l]`` is the affine value entering layer l's activation; ``post[l]``
    equals ``max(0, pre[l])`` on hidden layers and ``pre[l]`` on the output
    layer.
    """

    input: np.ndarray
    pre: tuple
    post: tuple

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


def forward(net: Network, x) -> LayerActivations:
    """Evaluate the network on a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.n_inputs,):
        raise ValueError(f"expected input of shape ({net.n_inputs},), got {x.shape}")
    pre = []
    post = []
    h = x
    last = net.layer_count - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        g = w @ h + b
        h = g if l == last else np.maximum(0.0, g)
        pre.append(g)
        post.append(h)
    return LayerActivations(input=x, pre=tuple(pre), post=tuple(post))


def forward_batch(net: Network, X: np.ndarray) -> np.ndarray:
    """Outputs for a batch of inputs, shape (N, n_outputs)."""
    H = np.asarray(X, dtype=np.float64)
    last = net.layer_count - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        G = H @ w.T + b
        H = G if l == last else np.maximum(0.0, G)
    return H


def predict(net: Network, X: np.ndarray) -> np.ndarray:
    """Class labels (argmax of outputs) for a batch."""
    return np.argmax(forward_batch(net, X), axis=1)


def accuracy(net: Network, data: "Dataset") -> float:
    if data.kind != "classification":
        raise ValueError("accuracy is defined for classification datasets")
    return float(np.mean(predict(net, data.X) == data.y))


@dataclass(frozen=True)
class Dataset:
    """Input/label pairs inside a declared bounding box."""

    X: np.ndarray
    y: np.ndarray
    kind: str  # "classification" | "regression"
    box: Box

    def __post_init__(self):
        object.__setattr__(self, "X", _frozen(self.X))
        if self.kind == "classification":
            object.__setattr__(self, "y", _frozen(self.y, dtype=np.int64))
        elif self.kind == "regression":
            object.__setattr__(self, "y", _frozen(self.y))
        else:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.X.ndim != 2 or self.y.shape[0] != self.X.shape[0]:
            raise ValueError("X must be (N, n_inputs) with matching labels")
        if self.X.shape[1] != self.box.dim:
            raise ValueError("sample dimension does not match bounding box")
        if self.X.size and not self.box.contains(self.X.min(axis=0)):
            raise ValueError("samples fall outside the declared box")
        if self.X.size and not self.box.contains(self.X.max(axis=0)):
            raise ValueError("samples fall outside the declared box")
        if self.kind == "classification" and self.y.size and self.y.min() < 0:
            raise ValueError("class labels must be nonnegative")

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def num_classes(self) -> int:
        if self.kind != "classification":
            raise ValueError("num_classes only applies to classification data")
        return int(self.y.max()) + 1 if len(self) else 0

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.kind, self.box)


def _one_hot(y: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros((y.shape[0], m))
    out[np.arange(y.shape[0]), y] = 1.0
    return out


def _loss_and_grads(weights, biases, X, Y, kind):
    """Mean loss over the batch plus gradients w.r.t. every weight and bias.

    ``Y`` is one-hot for classification (softmax cross-entropy) or a column of
    targets for regression (mean squared error).
    """
    L = len(weights)
    post = [np.asarray(X, dtype=np.float64)]
    pres = []
    H = post[0]
    for l in range(L):
        G = H @ weights[l].T + biases[l]
        pres.append(G)
        H = G if l == L - 1 else np.maximum(0.0, G)
        post.append(H)
    n = X.shape[0]
    out = post[-1]
    if kind == "classification":
        shifted = out - out.max(axis=1, keepdims=True)
        expv = np.exp(shifted)
        probs = expv / expv.sum(axis=1, keepdims=True)
        loss = float(np.mean(-shifted[Y.astype(bool)] + np.log(expv.sum(axis=1))))
        delta = (probs - Y) / n
    else:
        diff = out - Y
        loss = float(np.mean(diff**2))
        delta = 2.0 * diff / diff.size
    grads_w = [None] * L
    grads_b = [None] * L
    for l in range(L - 1, -1, -1):
        grads_w[l] = delta.T @ post[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ weights[l]) * (pres[l - 1] > 0.0)
    return loss, grads_w, grads_b


def train(
    net: Network,
    data: Dataset,
    epochs: int,
    learning_rate: float,
    batch_size: int = 32,
    seed: int = 0,
    weight_masks=None,
) -> Network:
    """Minibatch SGD; returns a new network, deterministic per seed.

    ``weight_masks`` (one 0/1 array per layer) freezes masked weights at zero:
    their gradients are discarded every step.  Raises
    :class:`TrainingDivergenceError` if the loss goes non-finite.
    """
    if epochs < 0 or learning_rate <= 0 or batch_size <= 0:
        raise ValueError("epochs >= 0, learning_rate > 0, batch_size > 0 required")
    if data.kind == "classification":
        if net.n_outputs != data.num_classes:
            raise ValueError(
                f"net has {net.n_outputs} outputs but data has {data.num_classes} classes"
            )
        Y = _one_hot(data.y, net.n_outputs)
    else:
        if net.n_outputs != 1:
            raise ValueError("regression training requires a single-output network")
        Y = np.asarray(data.y, dtype=np.float64).reshape(-1, 1)
    if epochs == 0:
        return net

    rng = np.random.default_rng(seed)
    ws = [w.copy() for w in net.weights]
    bs = [b.copy() for b in net.biases]
    if weight_masks is not None:
        masks = [np.asarray(m, dtype=np.float64) for m in weight_masks]
        for w, m in zip(ws, masks):
            w *= m
    else:
        masks = None
    n = len(data)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            loss, gw, gb = _loss_and_grads(ws, bs, data.X[idx], Y[idx], data.kind)
            if not np.isfinite(loss):
                raise TrainingDivergenceError(epoch, loss)
            for l in range(len(ws)):
                step = learning_rate * gw[l]
                if masks is not None:
                    step *= masks[l]
                ws[l] -= step
                bs[l] -= learning_rate * gb[l]
    return net.with_parameters(ws, bs)


def random_init(dims, seed: int, domain=None) -> Network:
    """Network with uniform(-a, a) weights, a = sqrt(6/(fan_in+fan_out)), zero biases.

    ``domain`` defaults to the symmetric unit box [-1, 1]^{n_0}.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d <= 0 for d in dims):
        raise ValueError("dims needs >= 2 positive entries")
    if domain is None:
        domain = Box.symmetric(dims[0])
    elif not isinstance(domain, Box):
        lo, hi = domain
        lo = np.broadcast_to(np.asarray(lo, dtype=np.float64), (dims[0],))
        hi = np.broadcast_to(np.asarray(hi, dtype=np.float64), (dims[0],))
        domain = Box(lo, hi)
    rng = np.random.default_rng(seed)
    ws = []
    bs = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-a, a, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Network(tuple(ws), tuple(bs), domain)


# -- serialization ------------------------------------------------------------

_FORMAT_VERSION = 1


def save_network(net: Network, path) -> None:
    """Write the network as JSON; float rendering round-trips exactly."""
    doc = {
        "format_version": _FORMAT_VERSION,
        "dims": net.dims,
        "domain_lo": net.input_domain.lo.tolist(),
        "domain_hi": net.input_domain.hi.tolist(),
        "layers": [
            {"weights": w.ravel().tolist(), "biases": b.tolist()}
            for w, b in zip(net.weights, net.biases)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def _require(doc, key, path):
    if key not in doc:
        raise NetworkFormatError(f"{path}: missing field {key!r}")
    return doc[key]


def load_network(path) -> Network:
    """Read a network written by :func:`save_network` (or any compatible writer)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise NetworkFormatError(f"{path}: invalid JSON ({exc})") from exc
    dims = _require(doc, "dims", path)
    if not isinstance(dims, list) or len(dims) < 2:
        raise NetworkFormatError(f"{path}: dims must list >= 2 layer sizes")
    lo = _require(doc, "domain_lo", path)
    hi = _require(doc, "domain_hi", path)
    if len(lo) != dims[0] or len(hi) != dims[0]:
        raise NetworkFormatError(f"{path}: domain length != dims[0]")
    layers = _require(doc, "layers", path)
    if len(layers) != len(dims) - 1:
        raise NetworkFormatError(
            f"{path}: expected {len(dims) - 1} layers, found {len(layers)}"
        )
    ws = []
    bs = []
    for l, layer in enumerate(layers):
        w = _require(layer, "weights", f"{path}: layer {l}")
        b = _require(layer, "biases", f"{path}: layer {l}")
        n_out, n_in = dims[l + 1], dims[l]
        if len(w) != n_out * n_in:
            raise NetworkFormatError(
                f"{path}: layer {l} has {len(w)} weights, expected {n_out}x{n_in}"
            )
        if len(b) != n_out:
            raise NetworkFormatError(
                f"{path}: layer {l} has {len(b)} biases, expected {n_out}"
            )
        ws.append(np.array(w, dtype=np.float64).reshape(n_out, n_in))
        bs.append(np.array(b, dtype=np.float64))
    try:
        return Network(tuple(ws), tuple(bs), Box(lo, hi))
    except ValueError as exc:
        raise NetworkFormatError(f"{path}: {exc}") from exc


# -- datasets -----------------------------------------------------------------


def _class_directions(n_inputs: int, classes: int, rng: np.random.Generator):
    """Well-separated unit directions, orthonormal whenever classes <= n_inputs."""
    raw = rng.standard_normal((n_inputs, classes))
    if classes <= n_inputs:
        q, _ = np.linalg.qr(raw)
        return q[:, :classes].T
    return (raw / np.linalg.norm(raw, axis=0)).T


def make_synthetic_classification(
    n_inputs: int,
    classes: int,
    samples: int,
    seed: int,
    spread: float = 0.12,
) -> Dataset:
    """Gaussian blobs in the unit box, one per class, balanced and seeded.

    Class means sit at radius 0.35 from the box center along well-separated
    directions; per-coordinate noise scales as spread/sqrt(n_inputs) so blob
    diameter stays comparable across input sizes.  Sample counts are balanced
    (remainder goes to the lowest class indices); samples are clipped to the
    box.
    """
    if classes < 2 or samples < classes:
        raise ValueError("need >= 2 classes and at least one sample per class")
    rng = np.random.default_rng(seed)
    dirs = _class_directions(n_inputs, classes, rng)
    means = 0.5 + 0.35 * dirs
    counts = [samples // classes] * classes
    for c in range(samples % classes):
        counts[c] += 1
    sigma = spread / np.sqrt(n_inputs)
    xs = []
    ys = []
    for c in range(classes):
        pts = means[c] + sigma * rng.standard_normal((counts[c], n_inputs))
        xs.append(np.clip(pts, 0.0, 1.0))
        ys.append(np.full(counts[c], c, dtype=np.int64))
    X = np.concatenate(xs)
    y = np.concatenate(ys)
    order = rng.permutation(samples)
    return Dataset(X[order], y[order], "classification", Box.unit(n_inputs))


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _area_average_matrix(src: int, dst: int) -> np.ndarray:
    """Row-stochastic matrix averaging ``src`` cells into ``dst`` cells by overlap."""
    scale = src / dst
    mat = np.zeros((dst, src))
    for i in range(dst):
        left = i * scale
        right = (i + 1) * scale
        j0 = int(np.floor(left))
        j1 = int(np.ceil(right))
        for j in range(j0, min(j1, src)):
            overlap = min(right, j + 1) - max(left, j)
            if overlap > 0:
                mat[i, j] = overlap / scale
    return mat


def _read_idx(path, magic, header_dims):
    with open(path, "rb") as fh:
        blob = fh.read()
    header = 4 + 4 * header_dims
    if len(blob) < header:
        raise NetworkFormatError(f"{path}: truncated IDX header")
    fields = struct.unpack(f">{header_dims + 1}i", blob[:header])
    if fields[0] != magic:
        raise NetworkFormatError(
            f"{path}: bad IDX magic {fields[0]:#010x}, expected {magic:#010x}"
        )
    shape = fields[1:]
    count = int(np.prod(shape))
    if len(blob) - header < count:
        raise NetworkFormatError(f"{path}: truncated IDX payload")
    data = np.frombuffer(blob, dtype=np.uint8, count=count, offset=header)
    return data.reshape(shape)


def load_idx_dataset(
    images_path,
    labels_path,
    max_samples=None,
    downscale=None,
) -> Dataset:
    """Load IDX-format images/labels, scale pixels to [0, 1], optionally downscale.

    ``downscale`` gives the target side length; resampling is an exact area
    average, so image means are preserved.
    """
    images = _read_idx(images_path, _IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, _IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise NetworkFormatError("image/label counts differ")
    if max_samples is not None:
        images = images[:max_samples]
        labels = labels[:max_samples]
    X = images.astype(np.float64) / 255.0
    if downscale is not None:
        rows, cols = X.shape[1], X.shape[2]
        R = _area_average_matrix(rows, int(downscale))
        C = _area_average_matrix(cols, int(downscale))
        X = np.einsum("ir,nrc,jc->nij", R, X, C)
    X = X.reshape(X.shape[0], -1)
    X = np.clip(X, 0.0, 1.0)
    return Dataset(X, labels.astype(np.int64), "classification", Box.unit(X.shape[1]))
