"""Cooperative downlink rate evaluation.

All base stations of a cluster jointly serve each user by non-coherent
power combining. The optimizer consumes a deterministic surrogate in which
each per-BS channel gain is replaced by its expectation (m_t - 1) * p_c;
a Gamma-gain Monte Carlo path exists for validation only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Deployment, SampleSet

__all__ = [
    "CommParams",
    "expected_snr",
    "rate_point",
    "rate_point_mc",
    "area_rate",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class CommParams:
    """Downlink constants: pathloss exponent alpha, transmit antennas m_t,
    per-BS transmit power p_c (W), noise power sigma_c2 (W, includes any
    interference treated as noise) and the area-rate floor r_th (bit/s/Hz).
    """

    alpha: float = 4.0
    m_t: int = 5
    p_c: float = 0.01
    sigma_c2: float = 1e-12
    r_th: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 2):
            raise ValueError(f"alpha must be >= 2, got {self.alpha}")
        if self.m_t < 2:
            raise ValueError("m_t must be >= 2 (gain distribution needs shape >= 1)")
        if not (self.p_c > 0 and self.sigma_c2 > 0):
            raise ValueError("powers must be positive")
        if not (math.isfinite(self.r_th) and self.r_th >= 0):
            raise ValueError(f"r_th must be nonnegative, got {self.r_th}")

    @property
    def mean_gain(self) -> float:
        """Expected effective per-BS channel gain (m_t - 1) * p_c."""
        return (self.m_t - 1) * self.p_c


def _pathloss(u: np.ndarray, positions: np.ndarray, alpha: float) -> np.ndarray:
    d = np.linalg.norm(positions - np.asarray(u, dtype=float), axis=1)
    if np.any(d == 0.0):
        raise ValueError("user coincides with a base station")
    return d ** (-alpha)

def expected_snr(u: np.ndarray, dep: Deployment, params: CommParams) -> float:
    """SNR at user u with every random gain replaced by its expectation."""
    pl = _pathloss(u, dep.positions, params.alpha)
    return float(params.mean_gain * pl.sum() / params.sigma_c2)


def rate_point(u: np.ndarray, dep: Deployment, params: CommParams) -> float:
    """Surrogate rate log2(1 + expected_snr), bit/s/Hz."""
    return math.log1p(expected_snr(u, dep, params)) / _LN2


def rate_point_mc(
    u: np.ndarray,
    dep: Deployment,
    params: CommParams,
    n_draws: int = 10000,
    seed: int = 0,
) -> tuple[float, float]:
    """Monte Carlo average rate with i.i.d. Gamma(m_t - 1, p_c) per-BS gains.

    Returns (mean, 95% confidence half-width); deterministic for a fixed seed.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    pl = _pathloss(u, dep.positions, params.alpha)
    rng = np.random.default_rng(seed)
    gains = rng.gamma(shape=params.m_t - 1, scale=params.p_c, size=(n_draws, dep.n_bs))
    snr = gains @ pl / params.sigma_c2
    rates = np.log1p(snr) / _LN2
    mean = float(rates.mean())
    ci95 = 1.96 * float(rates.std(ddof=1)) / math.sqrt(n_draws) if n_draws > 1 else math.inf
    return mean, ci95


def area_rate(
    users: SampleSet,
    dep: Deployment,
    params: CommParams,
    mode: str = "surrogate",
    n_draws: int = 10000,
    seed: int = 0,
) -> float:
    """Weighted average rate over the user area.

    `surrogate` is the deterministic expected-gain rate used inside the
    optimizer; `mc` draws random gains per user point with per-point seed
    streams split deterministically from `seed`.
    """
    if len(users) == 0:
        raise ValueError("user sample set is empty")
    if mode == "surrogate":
        pls = _pathloss_batch(users.points, dep.positions, params.alpha)
        snr = params.mean_gain * pls.sum(axis=1) / params.sigma_c2
        rates = np.log1p(snr) / _LN2
        return float(np.dot(users.weights, rates))
    if mode == "mc":
        seeds = np.random.SeedSequence(seed).spawn(len(users))
        total = 0.0
        for w, point, s in zip(users.weights, users.points, seeds):
            if w == 0:
                continue
            mean, _ = rate_point_mc(point, dep, params, n_draws=n_draws, seed=s)
            total += w * mean
        return total
    raise ValueError(f"unknown rate mode {mode!r}")


def _pathloss_batch(points: np.ndarray, positions: np.ndarray, alpha: float) -> np.ndarray:
    d = np.linalg.norm(positions[None, :, :] - points[:, None, :], axis=2)
    if np.any(d == 0.0):
        raise ValueError("user coincides with a base station")
    return d ** (-alpha)
