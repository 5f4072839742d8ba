"""Sparsify networks by magnitude or random pruning, whole-neuron or per-weight.

Masks use the keep convention: 1 = weight survives, 0 = pruned.  Per-layer
pruned counts are exact: floor(rate * count), so no layer is ever emptied for
rates below 1.  Structured pruning removes hidden neurons only and
``apply_mask`` compacts the network (dims shrink) rather than leaving zero
rows behind.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .network import Dataset, Network, train

__all__ = [
    "FinetuneSpec",
    "PruningSpec",
    "Mask",
    "magnitude_mask",
    "random_mask",
    "structured_mask",
    "apply_mask",
    "prune",
    "prune_with_mask",
    "iterative_rate_schedule",
]


@dataclass(frozen=True)
class FinetuneSpec:
    """Iterative prune-retrain schedule; masked weights stay frozen at zero."""

    rounds: int
    epochs_per_round: int
    learning_rate: float
    batch_size: int = 32

    def __post_init__(self):
        if self.rounds < 1 or self.epochs_per_round < 1:
            raise ValueError("rounds and epochs_per_round must be >= 1")
        if self.learning_rate <= 0 or self.batch_size < 1:
            raise ValueError("learning_rate > 0 and batch_size >= 1 required")


@dataclass(frozen=True)
class PruningSpec:
    """What to remove: method x granularity x layerwise rate, plus finetuning."""

    method: str  # "magnitude" | "random"
    granularity: str  # "unstructured" | "structured"
    rate: float
    finetune: Optional[FinetuneSpec] = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("magnitude", "random"):
            raise ValueError(f"unknown pruning method {self.method!r}")
        if self.granularity not in ("unstructured", "structured"):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if not (0.0 <= self.rate < 1.0):
            raise ValueError("rate must lie in [0, 1)")

    def label(self) -> str:
        mp = "MP" if self.method == "magnitude" else "RP"
        ft = "F" if self.finetune is not None else "NF"
        return f"{mp}-{self.granularity}-{self.rate:g}-{ft}"


@dataclass(frozen=True)
class Mask:
    """Per-layer keep masks; ``neuron_alive`` present only for structured masks.

    Structured masks zero the dead neuron's entire incoming row (and its bias
    disappears on compaction).
    """

    weight_masks: tuple
    neuron_alive: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(
            self, "weight_masks", tuple(np.asarray(m, dtype=bool) for m in self.weight_masks)
        )
        if self.neuron_alive is not None:
            object.__setattr__(
                self, "neuron_alive", tuple(np.asarray(a, dtype=bool) for a in self.neuron_alive)
            )

    @property
    def structured(self) -> bool:
        return self.neuron_alive is not None

    def pruned_counts(self) -> list:
        return [int(m.size - m.sum()) for m in self.weight_masks]

    def union(self, other: "Mask") -> "Mask":
        kept = tuple(a & b for a, b in zip(self.weight_masks, other.weight_masks))
        return Mask(kept, self.neuron_alive)


def _target_count(rate: float, count: int) -> int:
    return int(np.floor(rate * count))


def _smallest_positions(values: np.ndarray, eligible: np.ndarray, k: int) -> np.ndarray:
    """Flat indices of the k smallest eligible entries; ties resolve row-major."""
    flat = values.ravel().copy()
    flat[~eligible.ravel()] = np.inf
    order = np.argsort(flat, kind="stable")
    return order[:k]


def magnitude_mask(net: Network, rate: float) -> Mask:
    """Remove the floor(rate*count) smallest-|w| weights in every layer."""
    if not (0.0 <= rate < 1.0):
        raise ValueError("rate must lie in [0, 1)")
    masks = []
    for w in net.weights:
        keep = np.ones(w.shape, dtype=bool)
        k = _target_count(rate, w.size)
        drop = _smallest_positions(np.abs(w), keep, k)
        keep.ravel()[drop] = False
        masks.append(keep)
    return Mask(tuple(masks))


def random_mask(net: Network, rate: float, seed: int) -> Mask:
    """Remove floor(rate*count) weights per layer uniformly, seeded."""
    if not (0.0 <= rate < 1.0):
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    masks = []
    for w in net.weights:
        keep = np.ones(w.shape, dtype=bool)
        k = _target_count(rate, w.size)
        drop = rng.choice(w.size, size=k, replace=False)
        keep.ravel()[drop] = False
        masks.append(keep)
    return Mask(tuple(masks))


def incoming_l1_score(net: Network, layer: int) -> np.ndarray:
    """Default structured importance: L1 norm of each neuron's incoming row."""
    return np.abs(net.weights[layer]).sum(axis=1)


def structured_mask(
    net: Network,
    rate: float,
    method: str = "magnitude",
    seed: int = 0,
    score: Callable[[Network, int], np.ndarray] = incoming_l1_score,
) -> Mask:
    """Mark floor(rate*width) hidden neurons dead per layer; output layer untouched."""
    if not (0.0 <= rate < 1.0):
        raise ValueError("rate must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    alive = []
    for l in range(net.layer_count - 1):
        width = net.weights[l].shape[0]
        k = _target_count(rate, width)
        a = np.ones(width, dtype=bool)
        if method == "magnitude":
            order = np.argsort(score(net, l), kind="stable")
            a[order[:k]] = False
        elif method == "random":
            a[rng.choice(width, size=k, replace=False)] = False
        else:
            raise ValueError(f"unknown pruning method {method!r}")
        alive.append(a)
    return _structured_mask_from_alive(net, alive)


def _structured_mask_from_alive(net: Network, alive) -> Mask:
    masks = []
    for l, w in enumerate(net.weights):
        keep = np.ones(w.shape, dtype=bool)
        if l < net.layer_count - 1:
            keep[~alive[l], :] = False
        if l > 0:
            keep[:, ~alive[l - 1]] = False
        masks.append(keep)
    return Mask(tuple(masks), tuple(alive))


def apply_mask(net: Network, mask: Mask) -> Network:
    """Zero pruned weights; structured masks compact dead neurons away."""
    if len(mask.weight_masks) != net.layer_count:
        raise ValueError("mask layer count does not match network")
    for m, w in zip(mask.weight_masks, net.weights):
        if m.shape != w.shape:
            raise ValueError("mask shape does not match weights")
    if not mask.structured:
        ws = [w * m for w, m in zip(net.weights, mask.weight_masks)]
        return net.with_parameters(ws, [b.copy() for b in net.biases])
    alive = mask.neuron_alive
    ws = []
    bs = []
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        rows = alive[l] if l < net.layer_count - 1 else np.ones(w.shape[0], dtype=bool)
        cols = alive[l - 1] if l > 0 else np.ones(w.shape[1], dtype=bool)
        ws.append(w[np.ix_(rows, cols)])
        bs.append(b[rows])
    return Network(tuple(ws), tuple(bs), net.input_domain)


def iterative_rate_schedule(rate: float, rounds: int) -> list:
    """Cumulative per-round rates, linear up to the final rate."""
    return [rate * k / rounds for k in range(1, rounds + 1)]


def _grow_unstructured(net: Network, kept, targets, method: str, rng) -> list:
    """Extend the kept masks so each layer's pruned count reaches its target."""
    new_kept = []
    for w, keep, target in zip(net.weights, kept, targets):
        keep = keep.copy()
        already = keep.size - int(keep.sum())
        extra = target - already
        if extra > 0:
            if method == "magnitude":
                drop = _smallest_positions(np.abs(w), keep, extra)
            else:
                survivors = np.flatnonzero(keep.ravel())
                drop = rng.choice(survivors, size=extra, replace=False)
            keep.ravel()[drop] = False
        new_kept.append(keep)
    return new_kept


def prune_with_mask(
    net: Network, spec: PruningSpec, data: Optional[Dataset] = None, history=None
):
    """Prune per spec and also return the mask, expressed on the input network.

    When ``history`` is a list, the mask after each finetuning round is
    appended to it (masks are always relative to the original network).
    """
    if spec.finetune is None:
        mask = _one_shot_mask(net, spec)
        if history is not None:
            history.append(mask)
        return apply_mask(net, mask), mask
    if data is None:
        raise ValueError("finetuning requires a dataset")
    if spec.granularity == "unstructured":
        return _iterative_unstructured(net, spec, data, history)
    return _iterative_structured(net, spec, data, history)


def prune(net: Network, spec: PruningSpec, data: Optional[Dataset] = None) -> Network:
    """Sparse counterpart of ``net``: one-shot, or iterative prune+retrain."""
    return prune_with_mask(net, spec, data)[0]


def _one_shot_mask(net: Network, spec: PruningSpec) -> Mask:
    if spec.granularity == "structured":
        return structured_mask(net, spec.rate, spec.method, spec.seed)
    if spec.method == "magnitude":
        return magnitude_mask(net, spec.rate)
    return random_mask(net, spec.rate, spec.seed)


def _iterative_unstructured(net: Network, spec: PruningSpec, data: Dataset, history=None):
    ft = spec.finetune
    rng = np.random.default_rng(spec.seed)
    train_seeds = rng.integers(2**31, size=ft.rounds)
    kept = [np.ones(w.shape, dtype=bool) for w in net.weights]
    current = net
    for k, cum_rate in enumerate(iterative_rate_schedule(spec.rate, ft.rounds)):
        targets = [_target_count(cum_rate, w.size) for w in current.weights]
        kept = _grow_unstructured(current, kept, targets, spec.method, rng)
        mask = Mask(tuple(kept))
        if history is not None:
            history.append(mask)
        current = apply_mask(current, mask)
        current = train(
            current,
            data,
            epochs=ft.epochs_per_round,
            learning_rate=ft.learning_rate,
            batch_size=ft.batch_size,
            seed=int(train_seeds[k]),
            weight_masks=[m.astype(np.float64) for m in kept],
        )
    return current, Mask(tuple(kept))


def _iterative_structured(net: Network, spec: PruningSpec, data: Dataset, history=None):
    ft = spec.finetune
    rng = np.random.default_rng(spec.seed)
    train_seeds = rng.integers(2**31, size=ft.rounds)
    hidden = net.layer_count - 1
    widths = [net.weights[l].shape[0] for l in range(hidden)]
    # orig_idx[l] maps the compacted net's neuron positions back to the original
    orig_idx = [np.arange(w) for w in widths]
    current = net

    def snapshot():
        alive_full = []
        for l in range(hidden):
            a = np.zeros(widths[l], dtype=bool)
            a[orig_idx[l]] = True
            alive_full.append(a)
        return alive_full

    for k, cum_rate in enumerate(iterative_rate_schedule(spec.rate, ft.rounds)):
        alive_now = []
        for l in range(hidden):
            target_dead = _target_count(cum_rate, widths[l])
            dead_so_far = widths[l] - orig_idx[l].size
            extra = target_dead - dead_so_far
            width_now = current.weights[l].shape[0]
            a = np.ones(width_now, dtype=bool)
            if extra > 0:
                if spec.method == "magnitude":
                    order = np.argsort(incoming_l1_score(current, l), kind="stable")
                    a[order[:extra]] = False
                else:
                    a[rng.choice(width_now, size=extra, replace=False)] = False
            alive_now.append(a)
        mask_now = _structured_mask_from_alive(current, alive_now)
        current = apply_mask(current, mask_now)
        orig_idx = [idx[a] for idx, a in zip(orig_idx, alive_now)]
        if history is not None:
            history.append(_structured_mask_from_alive(net, snapshot()))
        current = train(
            current,
            data,
            epochs=ft.epochs_per_round,
            learning_rate=ft.learning_rate,
            batch_size=ft.batch_size,
            seed=int(train_seeds[k]),
        )
    return current, _structured_mask_from_alive(net, snapshot())
