"""Information-theoretic primitives for layered rateless codes.

All rates are in bits per complex symbol and all gains are stored as
squared magnitudes ``|alpha|**2``; the phase of the channel gain never
enters any of the formulas below.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "CodeSpec",
    "ThresholdMode",
    "ThresholdSchedule",
    "snr_from_gain",
    "ideal_threshold_gain_sq",
    "layered_threshold_gain_sq",
    "threshold_schedule",
    "layering_loss_db",
    "asymptotic_layering_loss",
    "accumulated_layer_mi",
    "layer_mi_grid",
    "log2det_hermitian",
    "kappa_rate_schedule",
    "to_db",
]


@dataclass(frozen=True)
class CodeSpec:
    """Design problem for a rateless code.

    Parameters
    ----------
    rate : float
        Ceiling rate R, i.e. the rate when decoding from one block.
    layers : int
        Number of superimposed layers L. Every layer carries R/L.
    blocks : int
        Range M, the maximum number of redundancy blocks.
    power : float
        Per-symbol power P (codebooks have unit power).
    noise_var : float
        Noise variance sigma**2.
    """

    rate: float
    layers: int
    blocks: int
    power: float
    noise_var: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if not self.power > 0:
            raise ValueError(f"power must be positive, got {self.power}")
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        if int(self.layers) != self.layers or self.layers < 1:
            raise ValueError(f"layers must be a positive integer, got {self.layers}")
        if int(self.blocks) != self.blocks or self.blocks < 1:
            raise ValueError(f"blocks must be a positive integer, got {self.blocks}")

    @property
    def layer_rate(self) -> float:
        return self.rate / self.layers

    @classmethod
    def natural(cls, rate: float, layers: int, blocks: int) -> "CodeSpec":
        """Spec normalised so that sigma**2 = 1 and |alpha_1|**2 = 1."""
        return cls(rate, layers, blocks, power=2.0 ** rate - 1.0, noise_var=1.0)

    def to_dict(self) -> dict:
        return {
            "rate": self.rate,
            "layers": self.layers,
            "blocks": self.blocks,
            "power": self.power,
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CodeSpec":
        return cls(float(d["rate"]), int(d["layers"]), int(d["blocks"]),
                   float(d["power"]), float(d["noise_var"]))


class ThresholdMode(str, enum.Enum):
    IDEAL = "ideal"
    LAYERED_BOUND = "layered_bound"


@dataclass(frozen=True)
class ThresholdSchedule:
    """Channel-gain thresholds ``|alpha_m|**2`` for m = 1..M."""

    mode: ThresholdMode
    gains_sq: tuple

    def __post_init__(self):
        g = np.asarray(self.gains_sq, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("gains_sq must be a non-empty sequence")
        if np.any(np.diff(g) >= 0):
            raise ValueError("threshold gains must be strictly decreasing")

    def __len__(self):
        return len(self.gains_sq)

    def __getitem__(self, m: int) -> float:
        """1-based access, ``schedule[m]`` is ``|alpha_m|**2``."""
        if m < 1:
            raise IndexError("block index is 1-based")
        return self.gains_sq[m - 1]

    @property
    def gains_db(self) -> np.ndarray:
        return to_db(np.asarray(self.gains_sq))


def to_db(x):
    """Power ratio to decibels."""
    return 10.0 * np.log10(x)


def snr_from_gain(gain_sq: float, spec: CodeSpec) -> float:
    if gain_sq < 0:
        raise ValueError("gain_sq must be non-negative")
    return spec.power * gain_sq / spec.noise_var


def ideal_threshold_gain_sq(m: int, spec: CodeSpec) -> float:
    """Smallest ``|alpha|**2`` such that m blocks carry the ceiling rate."""
    if m < 1:
        raise ValueError("m must be >= 1")
    # expm1 keeps full relative precision when R/m is small
    return math.expm1(spec.rate / m * math.log(2.0)) * spec.noise_var / spec.power


def layered_threshold_gain_sq(m: int, spec: CodeSpec) -> float:
    """Threshold forced by using only L layers (matches ideal for m <= L)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    L = spec.layers
    if m <= L:
        return ideal_threshold_gain_sq(m, spec)
    return math.expm1(spec.layer_rate * math.log(2.0)) * (L / m) * spec.noise_var / spec.power


def threshold_schedule(spec: CodeSpec, mode: ThresholdMode | str = ThresholdMode.IDEAL,
                       blocks: int | None = None) -> ThresholdSchedule:
    mode = ThresholdMode(mode)
    M = spec.blocks if blocks is None else blocks
    fn = ideal_threshold_gain_sq if mode is ThresholdMode.IDEAL else layered_threshold_gain_sq
    return ThresholdSchedule(mode, tuple(fn(m, spec) for m in range(1, M + 1)))


def layering_loss_db(m: int, L: int, R: float) -> float:
    """Threshold penalty from layering, ``10 log10(|alpha'_m|^2 / |alpha_m|^2)``.

    Only the ratio matters, so power and noise drop out.
    """
    if m < 1 or L < 1:
        raise ValueError("m and L must be >= 1")
    if R <= 0:
        raise ValueError("R must be positive")
    if m <= L:
        return 0.0
    ln2 = math.log(2.0)
    ratio = math.expm1(R / L * ln2) * (L / m) / math.expm1(R / m * ln2)
    return 10.0 * math.log10(ratio)


def asymptotic_layering_loss(R: float, L: float) -> float:
    """Limit of the layering loss as m -> infinity, as a linear power ratio."""
    if R <= 0 or L <= 0:
        raise ValueError("R and L must be positive")
    r = R / L * math.log(2.0)
    return math.expm1(r) / r


def log2det_hermitian(A: np.ndarray) -> float:
    """log2 det of a Hermitian positive-definite matrix via Cholesky."""
    C = np.linalg.cholesky(A)
    return 2.0 * float(np.sum(np.log(np.real(np.diag(C))))) / math.log(2.0)


def _as_complex(G) -> np.ndarray:
    if hasattr(G, "matrix"):
        G = G.matrix
    return np.asarray(G, dtype=complex)


def accumulated_layer_mi(G, m: int, l: int, gain_sq: float, noise_var: float = 1.0) -> float:
    """Mutual information of layer l accumulated over the first m blocks.

    Layers l+1..L are assumed decoded and removed, layers 1..l-1 are
    treated as Gaussian noise. Indices are 1-based.
    """
    G = _as_complex(G)
    M, L = G.shape
    if not (1 <= m <= M and 1 <= l <= L):
        raise ValueError(f"(m, l) = ({m}, {l}) outside a {M}x{L} gain matrix")
    a = gain_sq / noise_var
    eye = np.eye(m)
    top = G[:m, :l]
    hi = log2det_hermitian(eye + a * (top @ top.conj().T))
    if l == 1:
        return hi
    low = G[:m, : l - 1]
    return hi - log2det_hermitian(eye + a * (low @ low.conj().T))


def layer_mi_grid(G, gains_sq: Sequence[float], noise_var: float = 1.0) -> np.ndarray:
    """All accumulated per-layer MIs, ``out[m-1, l-1]`` at gain ``gains_sq[m-1]``.

    Uses det(I_m + a G G^H) = det(I_l + a G^H G) so each block count needs a
    single L x L Cholesky factor; its leading minors give every layer.
    """
    G = _as_complex(G)
    M, L = G.shape
    gains_sq = np.asarray(gains_sq, dtype=float)
    if gains_sq.shape != (M,):
        raise ValueError(f"need {M} threshold gains, got {gains_sq.shape}")
    out = np.empty((M, L))
    eye = np.eye(L)
    for m in range(1, M + 1):
        Gm = G[:m]
        gram = eye + (gains_sq[m - 1] / noise_var) * (Gm.conj().T @ Gm)
        C = np.linalg.cholesky(gram)
        out[m - 1] = 2.0 * np.log2(np.real(np.diag(C)))
    return out


def kappa_rate_schedule(R: float, kappa: float, M: int) -> list[float]:
    """Decodable rates when a rate-kappa*R code is decoded after >= kappa blocks."""
    if not 1 <= kappa <= M:
        raise ValueError(f"kappa must lie in [1, {M}], got {kappa}")
    out = []
    j = 0
    while kappa + j <= M + 1e-12:
        out.append(R * kappa / (kappa + j))
        j += 1
    return out
