"""Numerical construction of gain matrices for general L <= M.

The unknowns are the complex entries of G. Each row is normalised to
squared norm P on every evaluation, which is the projection onto the
power constraint, and the first row and first column are held real
(their phases are a gauge freedom that no mutual information sees).
The residuals are the signed relative rate shortfalls at every
(block, layer) pair; they are driven to zero with a trust-region
least-squares solver using an analytic Jacobian (finite differences
are available as a check), restarted from several seeded starting points.

For L = M each restart runs twice: first with penalty terms that pull G
towards a scaled unitary matrix, which keeps the search away from poor
local minima, then without them to polish the rate equalities.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .capacity import CodeSpec, ThresholdMode, ThresholdSchedule, layer_mi_grid, threshold_schedule
from .closed_form import GainMatrix, canonical_gauge

__all__ = [
    "ShortfallReport",
    "OptimizerConfig",
    "NonConvergence",
    "shortfall_report",
    "optimize_gain_matrix",
    "default_schedule",
    "success_tolerance",
]

log = logging.getLogger(__name__)


class NonConvergence(RuntimeWarning):
    """Best restart missed the success tolerance by more than a factor of ten."""


@dataclass
class ShortfallReport:
    """Per-(block, layer) rate shortfall of a gain matrix.

    ``relative`` holds the signed deficit (R/L - I)/(R/L) indexed
    ``[m-1, l-1]``; ``grid`` is the percentage view clipped at zero.
    """

    relative: np.ndarray
    mi: np.ndarray
    gains_sq: np.ndarray
    unitarity_residual: float | None = None
    passed: bool | None = None
    status: str | None = None
    objective: float | None = None

    @property
    def grid(self) -> np.ndarray:
        return 100.0 * np.maximum(self.relative, 0.0)

    @property
    def max_shortfall(self) -> float:
        """Worst percent shortfall."""
        return float(np.max(self.grid))

    @property
    def max_abs_relative(self) -> float:
        return float(np.max(np.abs(self.relative)))

    @property
    def converged(self) -> bool:
        return self.status != "nonconvergence"


@dataclass(frozen=True)
class OptimizerConfig:
    """Solver settings; ``target`` is the success threshold in percent
    (default: :func:`success_tolerance`)."""

    max_iterations: int = 2000
    restarts: int = 4
    seed: int = 0
    ftol: float = 1e-14
    xtol: float = 1e-14
    gtol: float = 1e-14
    jacobian: str = "analytic"
    orth_weight: float = 1.0
    # fraction of the trust-region radius scipy starts from
    x_scale: float | str = 1.0
    target: float | None = None
    workers: int = 1
    stop_at_target: bool = False
    # rerun each restart without the orthogonality terms from its end point
    polish: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not (self.ftol > 0 and self.xtol > 0 and self.gtol > 0):
            raise ValueError("tolerances must be positive")
        if self.jacobian not in ("analytic", "2-point", "3-point"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def default_schedule(spec: CodeSpec) -> ThresholdSchedule:
    """Ideal thresholds when L = M, layered-bound thresholds when L < M."""
    mode = ThresholdMode.IDEAL if spec.layers == spec.blocks else ThresholdMode.LAYERED_BOUND
    return threshold_schedule(spec, mode)


def success_tolerance(spec: CodeSpec) -> float:
    """Percent shortfall counted as success: 0.1 for L = M, 2 for L < M."""
    return 0.1 if spec.layers == spec.blocks else 2.0


def shortfall_report(G, spec: CodeSpec, schedule: ThresholdSchedule | None = None) -> ShortfallReport:
    if schedule is None:
        schedule = default_schedule(spec)
    A = G.matrix if isinstance(G, GainMatrix) else np.asarray(G, dtype=complex)
    if A.shape[1] != spec.layers or A.shape[0] != len(schedule):
        raise ValueError(f"gain matrix is {A.shape}, expected {len(schedule)} x {spec.layers}")
    gains = np.asarray(schedule.gains_sq, dtype=float)
    mi = layer_mi_grid(A, gains, spec.noise_var)
    rel = (spec.layer_rate - mi) / spec.layer_rate
    unit = None
    if A.shape[0] == A.shape[1]:
        P = spec.power
        unit = float(np.linalg.norm(A.conj().T @ A - P * np.eye(A.shape[1])) / P)
    return ShortfallReport(rel, mi, gains, unitarity_residual=unit)


class _Problem:
    """Maps a real parameter vector to a row-normalised, gauge-fixed G.

    With ``orth_weight > 0`` (square case only) the residual vector also
    carries the off-diagonal entries of G G^H / P, which vanish at every
    perfect code and keep the search near the scaled-unitary set.
    """

    def __init__(self, spec: CodeSpec, schedule: ThresholdSchedule, orth_weight: float = 0.0):
        self.spec = spec
        self.M, self.L = spec.blocks, spec.layers
        self.gains = np.asarray(schedule.gains_sq, dtype=float)
        free = np.ones((self.M, self.L), dtype=bool)
        free[0, :] = False
        free[:, 0] = False
        self.free_imag = free
        self.n_real = self.M * self.L
        self.n_params = self.n_real + int(free.sum())
        self.orth_weight = orth_weight if self.M == self.L else 0.0
        self.pairs = np.triu_indices(self.M, 1)

    def _rows(self, theta: np.ndarray):
        U = theta[: self.n_real].reshape(self.M, self.L).astype(complex)
        U[self.free_imag] += 1j * theta[self.n_real:]
        norms = np.sqrt(np.sum(np.abs(U) ** 2, axis=1, keepdims=True))
        return U, norms

    def unpack(self, theta: np.ndarray) -> np.ndarray:
        U, norms = self._rows(theta)
        return np.sqrt(self.spec.power) * U / norms

    def pack(self, G: np.ndarray) -> np.ndarray:
        G = canonical_gauge(np.asarray(G, dtype=complex))
        return np.concatenate([G.real.ravel(), G.imag[self.free_imag]])

    def residuals(self, theta: np.ndarray) -> np.ndarray:
        G = self.unpack(theta)
        mi = layer_mi_grid(G, self.gains, self.spec.noise_var)
        r = self.spec.layer_rate
        res = ((mi - r) / r).ravel()
        if self.orth_weight:
            K = (G @ G.conj().T)[self.pairs] / self.spec.power
            res = np.concatenate([res, self.orth_weight * K.real, self.orth_weight * K.imag])
        return res

    def _pullback(self, c: np.ndarray, U: np.ndarray, norms: np.ndarray) -> np.ndarray:
        """Gradient wrt G (d/dRe + j d/dIm, stacked per residual) to parameters."""
        s = np.sqrt(self.spec.power)
        proj = np.real(np.sum(c.conj() * U, axis=-1, keepdims=True))
        cu = (s / norms) * (c - proj * U / norms ** 2)
        lead = cu.shape[:-2]
        return np.concatenate([cu.real.reshape(*lead, -1), cu.imag[..., self.free_imag]], axis=-1)

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        """Exact Jacobian of :meth:`residuals`.

        With A = I + a G^H G, the gradient of log det A[:l, :l] with respect
        to G (as d/dRe + j d/dIm) is 2 a G B_l, B_l being the inverse of the
        leading l x l block padded with zeros. The row normalisation then
        projects out the radial component of each row.
        """
        M, L = self.M, self.L
        U, norms = self._rows(theta)
        G = np.sqrt(self.spec.power) * U / norms
        scale = 1.0 / (self.spec.layer_rate * np.log(2.0))

        C = np.zeros((M, L, M, L), dtype=complex)
        eye = np.eye(L)
        for m in range(1, M + 1):
            a = self.gains[m - 1] / self.spec.noise_var
            Gm = G[:m]
            A = eye + a * (Gm.conj().T @ Gm)
            prev = np.zeros((m, L), dtype=complex)
            for l in range(1, L + 1):
                B = np.zeros((L, L), dtype=complex)
                B[:l, :l] = np.linalg.inv(A[:l, :l])
                cur = 2.0 * a * (Gm @ B)
                C[m - 1, l - 1, :m] = (cur - prev) * scale
                prev = cur
        J = self._pullback(C.reshape(M * L, M, L), U, norms)
        if not self.orth_weight:
            return J

        # K_ik = g_i . conj(g_k) / P for i < k
        i, k = self.pairs
        npair = len(i)
        P = self.spec.power
        Cr = np.zeros((npair, M, L), dtype=complex)
        Ci = np.zeros((npair, M, L), dtype=complex)
        idx = np.arange(npair)
        Cr[idx, i] = G[k] / P
        Cr[idx, k] = G[i] / P
        Ci[idx, i] = 1j * G[k] / P
        Ci[idx, k] = -1j * G[i] / P
        w = self.orth_weight
        return np.vstack([J, w * self._pullback(Cr, U, norms), w * self._pullback(Ci, U, norms)])


def _initial_matrix(spec: CodeSpec, schedule: ThresholdSchedule, restart: int,
                    rng: np.random.Generator) -> np.ndarray:
    M, L, P = spec.blocks, spec.layers, spec.power
    if restart > 0:
        return rng.standard_normal((M, L)) + 1j * rng.standard_normal((M, L))
    # staircase: powers that meet every layer equality of block 1 exactly
    a1 = schedule.gains_sq[0] / spec.noise_var
    cum = np.expm1(np.arange(L + 1) * spec.layer_rate * np.log(2.0)) / a1
    stair = np.sqrt(np.diff(cum) * P / cum[-1])
    mag = np.empty((M, L))
    mag[: min(L, M)] = stair
    mag[L:] = np.sqrt(P / L)
    phase = rng.uniform(-np.pi, np.pi, size=(M, L))
    phase[0] = 0.0
    return mag * np.exp(1j * phase)


def _run_restart(problem: _Problem, spec: CodeSpec, schedule: ThresholdSchedule,
                 config: OptimizerConfig, restart: int, initial) -> tuple:
    rng = np.random.default_rng([config.seed, restart])
    if restart == 0 and initial is not None:
        G0 = initial.matrix if isinstance(initial, GainMatrix) else np.asarray(initial, complex)
    else:
        G0 = _initial_matrix(spec, schedule, restart, rng)
    G = np.sqrt(spec.power) * G0 / np.linalg.norm(G0, axis=1, keepdims=True)
    stages = [problem]
    if problem.orth_weight and config.polish:
        stages.append(_Problem(spec, schedule, 0.0))
    for stage in stages:
        res = least_squares(
            stage.residuals,
            stage.pack(G),
            jac=stage.jacobian if config.jacobian == "analytic" else config.jacobian,
            method="trf",
            ftol=config.ftol,
            xtol=config.xtol,
            gtol=config.gtol,
            max_nfev=config.max_iterations,
            x_scale=config.x_scale,
        )
        G = stage.unpack(res.x)
    G = canonical_gauge(G)
    rep = shortfall_report(G, spec, schedule)
    obj = float(np.sum(rep.relative ** 2))
    log.debug("restart %d: objective %.3e max shortfall %.4f%%", restart, obj, rep.max_shortfall)
    return obj, rep.unitarity_residual or 0.0, restart, G


def optimize_gain_matrix(spec: CodeSpec, config: OptimizerConfig | None = None,
                         schedule: ThresholdSchedule | None = None,
                         initial=None) -> tuple[GainMatrix, ShortfallReport]:
    """Search for a gain matrix meeting the successive-decoding equalities.

    Returns the best restart by objective (ties: lower unitarity residual,
    then lower restart index) with its shortfall report. ``report.status``
    is ``"success"`` when the worst shortfall is within the target,
    ``"approximate"`` within ten times it, and ``"nonconvergence"`` beyond.
    ``initial`` seeds restart 0, e.g. to warm-start from a nearby design.
    """
    if spec.layers > spec.blocks:
        raise ValueError("optimizer needs L <= M")
    config = config or OptimizerConfig()
    schedule = schedule or default_schedule(spec)
    problem = _Problem(spec, schedule, config.orth_weight)
    target = config.target if config.target is not None else success_tolerance(spec)

    results = []
    if config.workers > 1 and not config.stop_at_target:
        with ThreadPoolExecutor(config.workers) as pool:
            futs = [pool.submit(_run_restart, problem, spec, schedule, config, k, initial)
                    for k in range(config.restarts)]
            results = [f.result() for f in futs]
    else:
        for k in range(config.restarts):
            out = _run_restart(problem, spec, schedule, config, k, initial)
            results.append(out)
            if config.stop_at_target and 100.0 * np.sqrt(out[0]) <= target:
                break

    obj, _, restart, G = min(results, key=lambda t: (t[0], t[1], t[2]))
    gm = GainMatrix(np.abs(G), np.angle(G), spec.power)
    report = shortfall_report(gm, spec, schedule)
    report.objective = obj
    worst = report.max_shortfall
    if worst <= target:
        report.status = "success"
    elif worst <= 10.0 * target:
        report.status = "approximate"
    else:
        report.status = "nonconvergence"
        log.warning("best of %d restarts misses the %.3g%% target by more than 10x "
                    "(worst shortfall %.3g%%)", len(results), target, worst)
    report.passed = report.status == "success"
    return gm, report
