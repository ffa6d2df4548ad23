"""Monte Carlo check of dithered repetition with MRC successive cancellation.

Every block repeats the same L layer symbols with per-layer powers from a
:class:`~rateless.power_alloc.PowerAllocation` and an i.i.d. multiplicative
dither. The receiver peels layers from the top: it removes the layer's
dither, maximal-ratio combines the first m blocks and measures the SINR of
the combined statistic. Decoded layers are cancelled with the true symbols
(genie-aided), so what is checked is the SINR formula, not a base code.

Sample generation is split into chunks seeded by (seed, chunk index); the
per-chunk sufficient statistics are reduced in chunk order, so the result
does not depend on how chunks are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .power_alloc import PowerAllocation, per_block_snr

__all__ = [
    "SimConfig",
    "SimReport",
    "analytic_sinr_grid",
    "simulate_dithered_repetition",
    "dither_decorrelation_check",
    "population_block_correlation",
]

DITHER_ALPHABETS = ("pm1", "phase", "none")
CHUNK = 1 << 15


@dataclass(frozen=True)
class SimConfig:
    allocation: PowerAllocation
    num_symbols: int
    seed: int
    gain_sq: float
    dither: str = "pm1"
    cancel_all: bool = False
    workers: int = 1
    chunk_size: int = CHUNK

    def __post_init__(self):
        if self.num_symbols < 1:
            raise ValueError("num_symbols must be >= 1")
        if not self.gain_sq > 0:
            raise ValueError("gain_sq must be positive")
        if self.dither not in DITHER_ALPHABETS:
            raise ValueError(f"dither must be one of {DITHER_ALPHABETS}, got {self.dither!r}")
        if self.chunk_size < 1 or self.workers < 1:
            raise ValueError("chunk_size and workers must be >= 1")


@dataclass
class SimReport:
    """Empirical and analytic post-MRC SINR, ``[m-1, l-1]`` = decode layer l from m blocks."""

    empirical_sinr: np.ndarray
    analytic_sinr: np.ndarray
    relative_se: np.ndarray
    max_offdiag_corr: float
    block_power: np.ndarray
    max_dither_symbol_corr: float
    seed_used: int
    num_symbols: int
    gain_sq: float
    dither: str
    extra: dict = field(default_factory=dict)

    @property
    def relative_error(self) -> np.ndarray:
        return self.empirical_sinr / self.analytic_sinr - 1.0

    def within(self, n_se: float = 5.0) -> bool:
        """True when every entry is within ``n_se`` relative standard errors."""
        return bool(np.all(np.abs(self.relative_error) <= n_se * self.relative_se))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed_used,
            "num_symbols": self.num_symbols,
            "gain_sq": self.gain_sq,
            "dither": self.dither,
            "empirical_sinr": self.empirical_sinr.tolist(),
            "analytic_sinr": self.analytic_sinr.tolist(),
            "relative_se": self.relative_se.tolist(),
            "max_offdiag_corr": self.max_offdiag_corr,
            "max_dither_symbol_corr": self.max_dither_symbol_corr,
            "block_power": self.block_power.tolist(),
        }


def analytic_sinr_grid(powers: np.ndarray, gain_sq: float, noise_var: float,
                       cancel_all: bool = False) -> np.ndarray:
    """Sum over the first m blocks of the per-block layer SNRs, for every m."""
    powers = np.asarray(powers, dtype=float)
    if cancel_all:
        per = gain_sq * powers / noise_var
    else:
        per = per_block_snr(powers, gain_sq, noise_var)
    return np.cumsum(per, axis=0)


def _draw_dither(rng: np.random.Generator, kind: str, shape) -> np.ndarray:
    if kind == "pm1":
        return (2.0 * rng.integers(0, 2, size=shape) - 1.0).astype(complex)
    if kind == "phase":
        return np.exp(2j * np.pi * rng.random(shape))
    return np.ones(shape, dtype=complex)


def _cgauss(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _chunk_stats(cfg: SimConfig, index: int, n: int) -> dict:
    """Sufficient statistics of one chunk of ``n`` symbols."""
    alloc = cfg.allocation
    M, L = alloc.powers.shape
    sigma2 = alloc.spec.noise_var
    alpha = math.sqrt(cfg.gain_sq)
    rng = np.random.default_rng([cfg.seed, index])

    amp = np.sqrt(alloc.powers)                       # M x L
    c = _cgauss(rng, (L, n))                          # layer symbols
    d = _draw_dither(rng, cfg.dither, (M, L, n))      # dither
    z = math.sqrt(sigma2) * _cgauss(rng, (M, n))      # noise
    contrib = alpha * amp[:, :, None] * d * c[None, :, :]   # M x L x n
    x_power = np.sum(np.abs(np.sum(contrib, axis=1) / alpha) ** 2, axis=1)

    # residual after cancelling layers l+1..L, for every l: below[l] excludes layers > l
    cum = np.cumsum(contrib, axis=1)                  # cum[:, l] = layers 1..l+1
    stats = {
        "n": n,
        "x_power": x_power,
        "sc": np.zeros((M, L), dtype=complex),
        "cc": np.zeros(L),
        "ss": np.zeros((M, L)),
        "e2": np.zeros((M, L)),
        "e4": np.zeros((M, L)),
    }
    snr_pow = alloc.powers
    below_pow = np.cumsum(snr_pow, axis=1) - snr_pow
    for l in range(L):
        if cfg.cancel_all:
            v = contrib[:, l, :] + z
        else:
            v = cum[:, l, :] + z
        v = np.conj(d[:, l, :]) * v                   # remove this layer's dither
        var = cfg.gain_sq * (0.0 if cfg.cancel_all else below_pow[:, l]) + sigma2
        w = alpha * amp[:, l] / var                   # whitened MRC weights
        s = np.cumsum(w[:, None] * v, axis=0)         # combine first m blocks, all m
        h = np.cumsum(w * alpha * amp[:, l])          # population signal coefficient
        cl = c[l]
        stats["sc"][:, l] = s @ np.conj(cl)
        stats["cc"][l] = float(np.sum(np.abs(cl) ** 2))
        stats["ss"][:, l] = np.sum(np.abs(s) ** 2, axis=1)
        e = np.abs(s - h[:, None] * cl[None, :]) ** 2
        stats["e2"][:, l] = e.sum(axis=1)
        stats["e4"][:, l] = (e ** 2).sum(axis=1)

    # dither / symbol independence (complex correlation, both unit power)
    stats["dc"] = d.reshape(M * L, n) @ np.conj(c).T
    return stats


def _reduce(parts: list[dict]) -> dict:
    out = {}
    out["n"] = sum(p["n"] for p in parts)
    for key in ("x_power", "sc", "cc", "ss", "e2", "e4", "dc"):
        acc = parts[0][key].copy()
        for p in parts[1:]:
            acc = acc + p[key]
        out[key] = acc
    return out


def _run_chunks(cfg: SimConfig) -> dict:
    sizes = []
    left = cfg.num_symbols
    while left > 0:
        sizes.append(min(cfg.chunk_size, left))
        left -= sizes[-1]
    if cfg.workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(lambda a: _chunk_stats(cfg, *a), enumerate(sizes)))
    else:
        parts = [_chunk_stats(cfg, i, n) for i, n in enumerate(sizes)]
    return _reduce(parts)


def simulate_dithered_repetition(cfg: SimConfig) -> SimReport:
    alloc = cfg.allocation
    sigma2 = alloc.spec.noise_var
    st = _run_chunks(cfg)
    n = st["n"]

    cc = st["cc"][None, :]
    h_hat = st["sc"] / cc
    # least-squares residual of s on the known layer symbol
    resid = (st["ss"] - np.abs(st["sc"]) ** 2 / cc) / n
    empirical = np.abs(h_hat) ** 2 * (cc / n) / resid
    analytic = analytic_sinr_grid(alloc.powers, cfg.gain_sq, sigma2, cfg.cancel_all)

    # delta-method standard error: residual-variance term plus coefficient term
    kurt = (st["e4"] / n) / (st["e2"] / n) ** 2
    rel_se = np.sqrt(np.maximum(kurt - 1.0, 0.0) / n + 2.0 / (analytic * n))

    corr = dither_decorrelation_check(cfg) if alloc.blocks > 1 else 0.0
    return SimReport(
        empirical_sinr=empirical,
        analytic_sinr=analytic,
        relative_se=rel_se,
        max_offdiag_corr=corr,
        block_power=st["x_power"] / n,
        max_dither_symbol_corr=float(np.max(np.abs(st["dc"]))) / n if cfg.dither != "none" else float("nan"),
        seed_used=cfg.seed,
        num_symbols=n,
        gain_sq=cfg.gain_sq,
        dither=cfg.dither,
    )


def population_block_correlation(alloc: PowerAllocation, gain_sq: float,
                                 layer: int | None = None) -> np.ndarray:
    """Normalised block covariance of the undecoded-layer residual without dither."""
    L = alloc.layers
    layer = L if layer is None else layer
    amp = np.sqrt(alloc.powers[:, : layer - 1])
    cov = gain_sq * amp @ amp.T + alloc.spec.noise_var * np.eye(alloc.blocks)
    dg = np.sqrt(np.diag(cov))
    return cov / np.outer(dg, dg)


def dither_decorrelation_check(cfg: SimConfig, layer: int | None = None) -> float:
    """Largest normalised off-diagonal covariance of the residual across blocks.

    The residual is what the MRC combiner sees as noise while decoding
    ``layer`` (default: the top layer): the lower layers plus noise, after
    removing the decoded layer's dither.
    """
    alloc = cfg.allocation
    M, L = alloc.powers.shape
    if M == 1:
        return 0.0
    layer = L if layer is None else layer
    if not 1 <= layer <= L:
        raise ValueError(f"layer must be in 1..{L}")
    sigma2 = alloc.spec.noise_var
    alpha = math.sqrt(cfg.gain_sq)
    amp = np.sqrt(alloc.powers)
    # separate stream so the check does not perturb the main simulation
    rng = np.random.default_rng([cfg.seed, 0x5EED, layer])
    cov = np.zeros((M, M), dtype=complex)
    left = cfg.num_symbols
    while left > 0:
        n = min(cfg.chunk_size, left)
        left -= n
        c = _cgauss(rng, (L, n))
        d = _draw_dither(rng, cfg.dither, (M, L, n))
        z = math.sqrt(sigma2) * _cgauss(rng, (M, n))
        v = alpha * np.einsum("ml,mln,ln->mn", amp[:, : layer - 1], d[:, : layer - 1],
                              c[: layer - 1]) + z
        v = np.conj(d[:, layer - 1]) * v
        cov += v @ v.conj().T
    cov /= cfg.num_symbols
    dg = np.sqrt(np.real(np.diag(cov)))
    corr = np.abs(cov / np.outer(dg, dg))
    np.fill_diagonal(corr, 0.0)
    return float(corr.max())
