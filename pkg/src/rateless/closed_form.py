"""Closed-form perfect gain matrices for two and three layers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import CodeSpec, threshold_schedule

__all__ = [
    "GainMatrix",
    "RateTooHigh",
    "design_2x2",
    "design_3x3",
    "max_rate_3x3",
    "triangle_deficit",
    "validate_perfect",
    "canonical_gauge",
]

# absolute slack on the phasor-triangle inequality
TRIANGLE_ATOL = 1e-9


class RateTooHigh(ValueError):
    """No 3x3 perfect code exists at the requested ceiling rate."""


@dataclass
class GainMatrix:
    """M x L complex combining weights stored as magnitude and phase.

    Row m holds the weights used to build redundancy block m from the L
    unit-power layer codewords, so each row has squared norm ``power``.
    """

    mag: np.ndarray
    phase: np.ndarray
    power: float
    _cache: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.mag = np.asarray(self.mag, dtype=float)
        self.phase = np.asarray(self.phase, dtype=float)
        if self.mag.ndim != 2 or self.mag.shape != self.phase.shape:
            raise ValueError("mag and phase must be 2-D arrays of equal shape")
        if np.any(self.mag < 0):
            raise ValueError("magnitudes must be non-negative")

    @classmethod
    def from_complex(cls, G, power: float | None = None) -> "GainMatrix":
        G = np.asarray(G, dtype=complex)
        if power is None:
            power = float(np.mean(np.sum(np.abs(G) ** 2, axis=1)))
        return cls(np.abs(G), np.angle(G), float(power))

    @property
    def shape(self) -> tuple[int, int]:
        return self.mag.shape

    @property
    def rows(self) -> int:
        return self.mag.shape[0]

    @property
    def cols(self) -> int:
        return self.mag.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        if self._cache is None:
            self._cache = self.mag * np.exp(1j * self.phase)
        return self._cache

    def row_power_residual(self) -> float:
        """Largest relative deviation of a row's squared norm from ``power``."""
        rp = np.sum(self.mag ** 2, axis=1)
        return float(np.max(np.abs(rp - self.power)) / self.power)

    def unitarity_residual(self) -> float | None:
        """``||G^H G - P I||_F / P``; None unless the matrix is square."""
        if self.rows != self.cols:
            return None
        G = self.matrix
        return float(np.linalg.norm(G.conj().T @ G - self.power * np.eye(self.cols)) / self.power)

    def conjugate(self) -> "GainMatrix":
        return GainMatrix(self.mag.copy(), -self.phase, self.power)

    def scaled(self, power: float) -> "GainMatrix":
        """Same matrix with rows rescaled to squared norm ``power``."""
        return GainMatrix(self.mag * math.sqrt(power / self.power), self.phase.copy(), power)

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "power": self.power,
            "entries": [
                [{"mag": float(a), "phase_rad": float(p)} for a, p in zip(mr, pr)]
                for mr, pr in zip(self.mag, self.phase)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GainMatrix":
        entries = d["entries"]
        mag = np.array([[e["mag"] for e in row] for row in entries], dtype=float)
        phase = np.array([[e["phase_rad"] for e in row] for row in entries], dtype=float)
        if mag.shape != (int(d["rows"]), int(d["cols"])):
            raise ValueError(f"entries shape {mag.shape} disagrees with rows/cols "
                             f"({d['rows']}, {d['cols']})")
        return cls(mag, phase, float(d["power"]))

    def __eq__(self, other):
        if not isinstance(other, GainMatrix):
            return NotImplemented
        return (self.power == other.power and np.array_equal(self.mag, other.mag)
                and np.array_equal(self.phase, other.phase))


def canonical_gauge(G):
    """Rotate columns then rows so the first row and column are real-positive.

    Row and column phasors leave every log-det unchanged, so this is a pure
    relabelling. Zero entries are left alone.
    """
    gm = G if isinstance(G, GainMatrix) else None
    A = np.array(gm.matrix if gm is not None else G, dtype=complex)
    first_row = A[0]
    col_rot = np.where(np.abs(first_row) > 0, np.exp(-1j * np.angle(first_row)), 1.0)
    A = A * col_rot[None, :]
    first_col = A[:, 0]
    row_rot = np.where(np.abs(first_col) > 0, np.exp(-1j * np.angle(first_col)), 1.0)
    A = A * row_rot[:, None]
    # exact zeros instead of +-1e-17 imaginary parts on the gauge-fixed entries
    A[0, :] = np.abs(A[0, :])
    A[:, 0] = np.abs(A[:, 0])
    if gm is None:
        return A
    return GainMatrix(np.abs(A), np.angle(A), gm.power)


def design_2x2(R: float, P: float | None = None) -> GainMatrix:
    """The (essentially unique) perfect two-layer, two-block gain matrix."""
    if R <= 0:
        raise ValueError("R must be positive")
    if P is None:
        P = 2.0 ** R - 1.0
    if P <= 0:
        raise ValueError("P must be positive")
    scale = math.sqrt(P / (2.0 ** (R / 2) + 1.0))
    big = 2.0 ** (R / 4)
    mag = scale * np.array([[1.0, big], [big, 1.0]])
    phase = np.array([[0.0, 0.0], [0.0, math.pi]])
    return GainMatrix(mag, phase, float(P))


def max_rate_3x3() -> float:
    """Largest ceiling rate for which a perfect 3x3 code exists (about 8.33)."""
    return 6.0 * math.log2((3.0 + math.sqrt(5.0)) / 2.0)


def _triangle_sides(x: float) -> tuple[float, float, float]:
    return math.sqrt(x), math.sqrt(x ** 4 - x ** 3 + x ** 2 - x + 1.0), math.sqrt(x ** 3)


def triangle_deficit(x: float) -> float:
    """Sum of the two short phasors minus the long one; negative means no triangle."""
    a, b, c = _triangle_sides(x)
    return a + c - b


def design_3x3(R: float, P: float | None = None) -> GainMatrix:
    """Perfect three-layer, three-block gain matrix.

    Built in the natural normalisation (sigma**2 = |alpha_1|**2 = 1, so
    P = 2**R - 1) and rescaled to ``P`` when given; all constraints depend
    only on |alpha|^2 P / sigma^2, so rescaling preserves perfection.

    Of the two mirror-image solutions the one with theta_1 in (0, pi) is
    returned; ``.conjugate()`` gives the other.

    Raises
    ------
    RateTooHigh
        If ``R`` exceeds :func:`max_rate_3x3`.
    """
    if R <= 0:
        raise ValueError("R must be positive")
    x = 2.0 ** (R / 6.0)
    if triangle_deficit(x) < -TRIANGLE_ATOL:
        raise RateTooHigh(
            f"no perfect 3x3 rateless code exists at R={R}: the ceiling rate "
            f"must be at most {max_rate_3x3():.4f} (about 8.33) bits per complex symbol")
    mag2 = (x - 1.0) * np.array([
        [x + 1.0, x ** 2 * (x + 1.0), x ** 4 * (x + 1.0)],
        [x ** 3 * (x + 1.0), x ** 5 + 1.0, x * (x + 1.0)],
        [x ** 2 * (x ** 3 + 1.0), x * (x ** 3 + 1.0), x ** 3 + 1.0],
    ])
    mag = np.sqrt(mag2)

    # close the phasor triangle  a + b e^{j t1} + c e^{j t2} = 0
    a, b, c = _triangle_sides(x)
    cos_t1 = np.clip((c * c - a * a - b * b) / (2.0 * a * b), -1.0, 1.0)
    t1 = math.acos(cos_t1)
    t2 = np.angle(-(a + b * np.exp(1j * t1)) / c)

    r1 = mag[0].astype(complex)
    r2 = mag[1] * np.exp(1j * np.array([0.0, t1, t2]))
    # the Hermitian-orthogonal complement of two rows in C^3 is conj(r1 x r2)
    r3 = np.conj(np.cross(r1, r2))
    r3 *= np.exp(-1j * np.angle(r3[0]))
    r3 *= math.sqrt(np.sum(mag2[2])) / np.linalg.norm(r3)

    phase = np.zeros((3, 3))
    phase[1, 1], phase[1, 2] = t1, float(t2)
    phase[2, 1:] = np.angle(r3[1:])
    G = GainMatrix(mag, phase, float(x ** 6 - 1.0))
    if P is not None:
        if P <= 0:
            raise ValueError("P must be positive")
        G = G.scaled(float(P))
    return G


def validate_perfect(G: GainMatrix, spec: CodeSpec, tol: float = 1e-9):
    """Check a square gain matrix against the perfect-code equalities.

    Every accumulated layer MI at the ideal thresholds must equal R/L to
    relative tolerance ``tol`` and G^H G must equal P I to ``tol``.
    """
    from .optimizer import shortfall_report

    if G.shape != (spec.blocks, spec.layers):
        raise ValueError(f"gain matrix is {G.shape}, spec wants {(spec.blocks, spec.layers)}")
    if spec.blocks != spec.layers:
        raise ValueError("perfect-code validation needs L = M")
    report = shortfall_report(G, spec, threshold_schedule(spec, "ideal"))
    unit = G.unitarity_residual()
    report.unitarity_residual = unit
    report.passed = bool(report.max_abs_relative <= tol and unit <= tol)
    return report
