"""Interval propagation of pre-activation bounds and neuron stability analysis.

Bounds are computed with plain interval arithmetic over the input box: sound,
fast, and monotone in the box.  The stored intervals are exact interval
arithmetic; consumers turning them into big-M constants should inflate them by
``BIG_M_SLACK`` to absorb floating-point edge cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Box, Network

__all__ = [
    "BIG_M_SLACK",
    "STABLY_ACTIVE",
    "STABLY_INACTIVE",
    "UNSTABLE",
    "ActivationBounds",
    "InfeasibleDomainError",
    "interval_propagate",
    "tighten_box",
    "stability_summary",
]

# absolute inflation applied to intervals before they become big-M constants
BIG_M_SLACK = 1e-6

STABLY_ACTIVE = 1
STABLY_INACTIVE = -1
UNSTABLE = 0


class InfeasibleDomainError(ValueError):
    """The (tightened) input box is empty."""


@dataclass(frozen=True)
class ActivationBounds:
    """Sound per-neuron pre-activation intervals over a given input box.

    ``pre_lo[l][i] <= g_i of layer l <= pre_hi[l][i]`` for every input in the
    box, including the output layer (no ReLU there).
    """

    input_box: Box
    pre_lo: tuple
    pre_hi: tuple

    def stability(self, layer: int) -> np.ndarray:
        """STABLY_ACTIVE / STABLY_INACTIVE / UNSTABLE flag per neuron."""
        lo, hi = self.pre_lo[layer], self.pre_hi[layer]
        out = np.zeros(lo.shape[0], dtype=np.int8)
        out[lo >= 0.0] = STABLY_ACTIVE
        out[hi <= 0.0] = STABLY_INACTIVE
        return out

    def unstable_count(self, hidden_only: bool = True) -> int:
        layers = range(len(self.pre_lo) - 1) if hidden_only else range(len(self.pre_lo))
        return int(sum(np.sum(self.stability(l) == UNSTABLE) for l in layers))

    def big_m_interval(self, layer: int) -> tuple:
        """Inflated (lo, hi) arrays safe to use as big-M constants."""
        return self.pre_lo[layer] - BIG_M_SLACK, self.pre_hi[layer] + BIG_M_SLACK


def tighten_box(box: Box, center: np.ndarray, radius: float) -> Box:
    """Intersect a box with the box relaxation of an L1 ball around ``center``.

    Raises :class:`InfeasibleDomainError` when the intersection is empty.
    """
    center = np.asarray(center, dtype=np.float64)
    lo = np.maximum(box.lo, center - radius)
    hi = np.minimum(box.hi, center + radius)
    if np.any(lo > hi):
        k = int(np.argmax(lo - hi))
        raise InfeasibleDomainError(
            f"coordinate {k}: tightened interval [{lo[k]}, {hi[k]}] is empty"
        )
    return Box(lo, hi)


def interval_propagate(net: Network, domain: Box = None) -> ActivationBounds:
    """Layer-by-layer interval arithmetic over ``domain`` (default: net domain).

    Splits each weight matrix into positive and negative parts so each bound
    uses the worst-case corner of the previous layer's interval; hidden-layer
    post-activation intervals are clamped at zero, the output layer passes
    through.
    """
    if domain is None:
        domain = net.input_domain
    if domain.dim != net.n_inputs:
        raise ValueError("domain dimension does not match network input size")
    h_lo = domain.lo.astype(np.float64)
    h_hi = domain.hi.astype(np.float64)
    pre_lo = []
    pre_hi = []
    last = net.layer_count - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        w_pos = np.maximum(w, 0.0)
        w_neg = np.minimum(w, 0.0)
        lo = w_pos @ h_lo + w_neg @ h_hi + b
        hi = w_pos @ h_hi + w_neg @ h_lo + b
        pre_lo.append(lo)
        pre_hi.append(hi)
        if l != last:
            h_lo = np.maximum(0.0, lo)
            h_hi = np.maximum(0.0, hi)
    return ActivationBounds(domain, tuple(pre_lo), tuple(pre_hi))


def stability_summary(bounds: ActivationBounds) -> list:
    """Per-layer (stably_active, stably_inactive, unstable) neuron counts."""
    out = []
    for l in range(len(bounds.pre_lo)):
        flags = bounds.stability(l)
        out.append(
            (
                int(np.sum(flags == STABLY_ACTIVE)),
                int(np.sum(flags == STABLY_INACTIVE)),
                int(np.sum(flags == UNSTABLE)),
            )
        )
    return out
