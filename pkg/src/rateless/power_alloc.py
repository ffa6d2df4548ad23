"""Per-block, per-layer powers for the dithered-repetition code.

Block 1 is an ordinary layered code. Each later block gets whatever power
each layer needs to make up the mutual information it loses when the
channel gain drops to the next threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .capacity import CodeSpec, ThresholdMode, ThresholdSchedule, threshold_schedule

__all__ = [
    "PowerAllocation",
    "allocate_powers",
    "extend_allocation",
    "per_block_snr",
    "verify_allocation",
    "layer_shortfalls",
    "efficiency_lower_bound",
    "conservative_rate",
]


@dataclass
class PowerAllocation:
    """Powers ``powers[m-1, l-1] = p_{m,l}`` with the spec and ideal thresholds."""

    powers: np.ndarray
    spec: CodeSpec
    thresholds: ThresholdSchedule

    @property
    def per_layer_rate(self) -> float:
        return self.spec.layer_rate

    @property
    def blocks(self) -> int:
        return self.powers.shape[0]

    @property
    def layers(self) -> int:
        return self.powers.shape[1]

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "per_layer_rate": self.per_layer_rate,
            "thresholds": {
                "mode": self.thresholds.mode.value,
                "gains_sq": [float(g) for g in self.thresholds.gains_sq],
            },
            "powers": [[float(p) for p in row] for row in self.powers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PowerAllocation":
        spec = CodeSpec.from_dict(d["spec"])
        th = d["thresholds"]
        sched = ThresholdSchedule(ThresholdMode(th["mode"]), tuple(float(g) for g in th["gains_sq"]))
        powers = np.array(d["powers"], dtype=float)
        if powers.ndim != 2 or powers.shape != (len(sched), spec.layers):
            raise ValueError(f"powers grid {powers.shape} does not match "
                             f"{len(sched)} thresholds x {spec.layers} layers")
        return cls(powers, spec, sched)

    def __eq__(self, other):
        if not isinstance(other, PowerAllocation):
            return NotImplemented
        return (self.spec == other.spec and self.thresholds == other.thresholds
                and np.array_equal(self.powers, other.powers))


def per_block_snr(powers: np.ndarray, gain_sq: float, noise_var: float) -> np.ndarray:
    """SNR of every layer in every block at one channel gain.

    Layers above l are taken as decoded, layers below as noise.
    """
    powers = np.asarray(powers, dtype=float)
    below = np.cumsum(powers, axis=1) - powers
    return gain_sq * powers / (gain_sq * below + noise_var)


def _fill_block(prev: np.ndarray, gain_sq: float, spec: CodeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Powers for the next block given the powers of all earlier blocks."""
    L = spec.layers
    if prev.shape[0]:
        have = np.sum(np.log2(1.0 + per_block_snr(prev, gain_sq, spec.noise_var)), axis=0)
    else:
        have = np.zeros(L)
    delta = spec.layer_rate - have
    if np.any(delta < -1e-12):
        raise ArithmeticError(f"negative layer shortfall {delta.min():.3e}; "
                              "thresholds must be strictly decreasing")
    delta = np.maximum(delta, 0.0)
    p = np.empty(L)
    floor = spec.noise_var / gain_sq
    acc = 0.0
    for l in range(L):
        p[l] = math.expm1(delta[l] * math.log(2.0)) * (acc + floor)
        acc += p[l]
    return p, delta


def allocate_powers(spec: CodeSpec, blocks: int | None = None) -> PowerAllocation:
    """Solve the block-by-block power recursion for ``blocks`` (default M) blocks."""
    M = spec.blocks if blocks is None else blocks
    sched = threshold_schedule(spec, ThresholdMode.IDEAL, blocks=M)
    powers = np.zeros((0, spec.layers))
    for m in range(1, M + 1):
        p, _ = _fill_block(powers, sched[m], spec)
        powers = np.vstack([powers, p])
    return PowerAllocation(powers, spec, sched)


def extend_allocation(alloc: PowerAllocation, blocks: int) -> PowerAllocation:
    """Add blocks to an allocation; existing rows are reused unchanged."""
    if blocks < alloc.blocks:
        raise ValueError("can only extend an allocation")
    spec = alloc.spec
    sched = threshold_schedule(spec, ThresholdMode.IDEAL, blocks=blocks)
    powers = alloc.powers.copy()
    for m in range(alloc.blocks + 1, blocks + 1):
        p, _ = _fill_block(powers, sched[m], spec)
        powers = np.vstack([powers, p])
    return PowerAllocation(powers, spec, sched)


def layer_shortfalls(alloc: PowerAllocation) -> np.ndarray:
    """Shortfalls ``[m-1, l-1]`` that block m was sized to cover (row 1 is R/L)."""
    spec = alloc.spec
    out = np.empty_like(alloc.powers)
    for m in range(1, alloc.blocks + 1):
        prev = alloc.powers[: m - 1]
        if m == 1:
            out[0] = spec.layer_rate
            continue
        have = np.sum(np.log2(1.0 + per_block_snr(prev, alloc.thresholds[m], spec.noise_var)), axis=0)
        out[m - 1] = spec.layer_rate - have
    return out


def verify_allocation(alloc: PowerAllocation) -> np.ndarray:
    """Accumulated-MI residual ``sum_{m'<=m} log2(1 + SNR_{m',l}(alpha_m)) - R/L``."""
    spec = alloc.spec
    M = alloc.blocks
    out = np.empty((M, alloc.layers))
    for m in range(1, M + 1):
        snr = per_block_snr(alloc.powers[:m], alloc.thresholds[m], spec.noise_var)
        out[m - 1] = np.sum(np.log2(1.0 + snr), axis=0) - spec.layer_rate
    return out


def efficiency_lower_bound(base_rate):
    """Lower bounds on efficiency for a base code of ``base_rate`` bits per layer.

    Returns ``(mid, linear)`` where mid = ln2 r / (2^r - 1) and
    linear = 1 - (ln2 / 2) r. Works elementwise on arrays.
    """
    r = np.asarray(base_rate, dtype=float)
    if np.any(r <= 0):
        raise ValueError("base_rate must be positive")
    x = np.log(2.0) * r
    mid = x / np.expm1(x)
    linear = 1.0 - 0.5 * x
    if mid.ndim == 0:
        return float(mid), float(linear)
    return mid, linear


def conservative_rate(R: float, L: int) -> float:
    """Ceiling rate R'' that the ln(1+u) <= u bound guarantees is decodable."""
    if R <= 0 or L <= 0:
        raise ValueError("R and L must be positive")
    return L * math.log2(1.0 + math.log(2.0) * R / L)
