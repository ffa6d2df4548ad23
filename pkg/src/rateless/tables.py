"""Reference tables: layering loss, shortfall, powers and efficiency curves."""

from __future__ import annotations

import numpy as np

from .capacity import CodeSpec, ThresholdMode, layering_loss_db, threshold_schedule
from .closed_form import GainMatrix
from .optimizer import ShortfallReport, shortfall_report
from .power_alloc import PowerAllocation, allocate_powers, efficiency_lower_bound

__all__ = [
    "REFERENCE_GAIN_10X3",
    "reference_gain_10x3",
    "loss_table",
    "reference_shortfall",
    "powers_table",
    "efficiency_curves",
]

# Reference optimised L=3, M=10, R=5 gain matrix (P = 31, sigma^2 = 1),
# rows of (magnitude, phase) per layer.
REFERENCE_GAIN_10X3 = (
    ((1.4747, 0.0), (2.6277, 0.0), (4.6819, 0.0)),
    ((3.5075, 0.0), (3.7794, 2.0510), (2.1009, -1.9486)),
    ((4.0648, 0.0), (3.1298, -0.9531), (2.1637, 2.5732)),
    ((3.2146, 0.0), (3.1322, 3.0765), (3.2949, 0.9132)),
    ((3.2146, 0.0), (3.3328, -1.6547), (3.0918, -1.4248)),
    ((3.2146, 0.0), (3.1049, 0.9409), (3.3206, 2.8982)),
    ((3.2146, 0.0), (3.3248, 1.2506), (3.1004, -0.2027)),
    ((3.2146, 0.0), (3.0980, -1.4196), (3.3270, 1.9403)),
    ((3.2146, 0.0), (3.2880, -2.9449), (3.1394, -1.9243)),
    ((3.2146, 0.0), (3.1795, 0.7839), (3.2492, 0.3413)),
)


def reference_gain_10x3() -> GainMatrix:
    arr = np.array(REFERENCE_GAIN_10X3)
    return GainMatrix(arr[..., 0], arr[..., 1], 31.0)


def loss_table(rate: float = 5.0, max_layers: int = 9, max_blocks: int = 10) -> np.ndarray:
    """Layering loss in dB, ``out[L-1, m-2]`` for L = 1..max_layers, m = 2..max_blocks."""
    return np.array([[layering_loss_db(m, L, rate) for m in range(2, max_blocks + 1)]
                     for L in range(1, max_layers + 1)])


def reference_shortfall(G: GainMatrix | None = None, rate: float = 5.0,
                        noise_var: float = 1.0) -> ShortfallReport:
    """Shortfall of a gain matrix at layered-bound thresholds (default: the reference 10x3)."""
    G = G or reference_gain_10x3()
    spec = CodeSpec(rate, G.cols, G.rows, G.power, noise_var)
    return shortfall_report(G, spec, threshold_schedule(spec, ThresholdMode.LAYERED_BOUND))


def powers_table(per_layer_rate: float = 2.0, layers: int = 4, blocks: int = 5,
                 power: float = 255.0, noise_var: float = 1.0) -> PowerAllocation:
    return allocate_powers(CodeSpec(per_layer_rate * layers, layers, blocks, power, noise_var))


def efficiency_curves(max_rate: float = 4.0, points: int = 200) -> np.ndarray:
    """Columns: base rate, mid bound, linear bound; rates evenly spaced on (0, max_rate]."""
    if max_rate <= 0 or points < 1:
        raise ValueError("need max_rate > 0 and points >= 1")
    r = max_rate * np.arange(1, points + 1) / points
    mid, lin = efficiency_lower_bound(r)
    return np.column_stack([r, mid, lin])
