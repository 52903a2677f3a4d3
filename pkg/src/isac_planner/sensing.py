"""Time-of-flight localization accuracy over a service area.

Evaluates the Fisher information accumulated over all N^2 ordered
transmitter/receiver link pairs of a cooperating deployment (monostatic
links count once with weight 4, each bistatic pair twice with weight 2),
the per-point position error bound (trace of the inverse information),
its average over a sampled region, and threshold coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Deployment, SampleSet

__all__ = [
    "SensingParams",
    "CrlbField",
    "NonLocalizableError",
    "unit_vector",
    "ranging_variance",
    "fisher_matrix",
    "crlb_point",
    "area_crlb",
    "coverage_probability",
    "crlb_field",
    "field_to_csv",
]

SPEED_OF_LIGHT = 299792458.0  # m/s

# Relative condition-number cutoff beyond which a point counts as
# non-localizable (information matrix treated as singular).
COND_CUTOFF = 1e12


class NonLocalizableError(ValueError):
    """Raised for geometry that cannot support a range measurement."""


@dataclass(frozen=True)
class SensingParams:
    """Sensing channel constants.

    beta is the BS-to-target pathloss exponent. kappa_s is a single
    configurable sensing-information constant absorbing bandwidth, receive
    antennas, expected transmit gain, target cross-section gain, noise power
    and the speed of light; the ranging variance of a link with transmit and
    receive distances (d_tx, d_rx) is d_tx^beta * d_rx^beta / kappa_s.
    """

    beta: float = 2.0
    kappa_s: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta >= 2):
            raise ValueError(f"beta must be >= 2, got {self.beta}")
        if not (math.isfinite(self.kappa_s) and self.kappa_s > 0):
            raise ValueError(f"kappa_s must be positive, got {self.kappa_s}")

    @classmethod
    def from_physical(
        cls,
        beta: float = 2.0,
        bandwidth_hz: float = 10e6,
        m_r: int = 5,
        m_t: int = 5,
        sigma_s2_watts: float = 1e-12,
        rcs_gain: float = 10.0,
        tx_gain: float | None = None,
        power_factor: float = 1.0,
        speed_of_light: float = SPEED_OF_LIGHT,
    ) -> "SensingParams":
        """Compute kappa_s from physical inputs.

        The expected transmit beamforming gain defaults to m_t - 1;
        `tx_gain` overrides it and `power_factor` is an optional extra
        multiplier (e.g. a sensing transmit power not already folded in).
        """
        if tx_gain is None:
            if m_t < 2:
                raise ValueError("m_t must be >= 2 so the expected gain is positive")
            tx_gain = float(m_t - 1)
        if min(bandwidth_hz, m_r, sigma_s2_watts, rcs_gain, tx_gain, power_factor) <= 0:
            raise ValueError("physical sensing inputs must be positive")
        kappa_s = (
            8.0 * math.pi**2 * tx_gain * m_r * bandwidth_hz**2 * rcs_gain * power_factor
        ) / (3.0 * speed_of_light**2 * sigma_s2_watts)
        return cls(beta=beta, kappa_s=kappa_s)


@dataclass(frozen=True)
class CrlbField:
    """Per-sample-point CRLB values (m^2); +inf marks non-localizable points."""

    samples: SampleSet
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (len(self.samples),):
            raise ValueError("values must match the sample set in length")
        if np.any(np.isnan(vals)) or np.any(vals <= 0):
            raise ValueError("field values must be positive or +inf")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def unit_vector(b: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Unit vector from target t toward base station b."""
    diff = np.asarray(b, dtype=float) - np.asarray(t, dtype=float)
    d = np.linalg.norm(diff)
    if d == 0.0:
        raise NonLocalizableError("target coincides with a base station")
    return diff / d


def ranging_variance(d_tx: float, d_rx: float, params: SensingParams) -> float:
    """Variance (m^2) of one bistatic range measurement."""
    if d_tx <= 0 or d_rx <= 0:
        raise ValueError("link distances must be positive")
    return (d_tx**params.beta) * (d_rx**params.beta) / params.kappa_s


def _link_moments(t: np.ndarray, positions: np.ndarray, params: SensingParams):
    """Per-BS pathloss weights w_i = kappa_s^(1/2) d_i^-beta and unit vectors."""
    diffs = positions - np.asarray(t, dtype=float)
    d = np.linalg.norm(diffs, axis=1)
    if np.any(d == 0.0):
        raise NonLocalizableError("target coincides with a base station")
    v = diffs / d[:, None]
    w = math.sqrt(params.kappa_s) * d ** (-params.beta)
    return d, v, w


def fisher_matrix(t: np.ndarray, dep: Deployment, params: SensingParams) -> np.ndarray:
    """3x3 position Fisher information at target t.

    Sums (v_i + v_j)(v_i + v_j)^T / ranging_variance(d_i, d_j) over all N^2
    ordered link pairs, evaluated in closed form:

        F = 2 * (sum_i w_i) * (sum_i w_i v_i v_i^T) + 2 * m m^T,
        m = sum_i w_i v_i,   w_i = sqrt(kappa_s) / d_i^beta.
    """
    _, v, w = _link_moments(t, dep.positions, params)
    second = np.einsum("i,ij,ik->jk", w, v, v)
    m = w @ v
    f = 2.0 * w.sum() * second + 2.0 * np.outer(m, m)
    return 0.5 * (f + f.T)


def _trace_inverse(f: np.ndarray) -> float:
    """trace(F^-1) via the symmetric eigendecomposition; +inf when singular."""
    eig = np.linalg.eigvalsh(f)
    top = eig[-1]
    if top <= 0 or eig[0] <= top / COND_CUTOFF:
        return math.inf
    return float(np.sum(1.0 / eig))


def crlb_point(t: np.ndarray, dep: Deployment, params: SensingParams) -> float:
    """Position error bound (m^2) at a target point; +inf if non-localizable."""
    return _trace_inverse(fisher_matrix(t, dep, params))


def _batched_crlb(points: np.ndarray, positions: np.ndarray, params: SensingParams) -> np.ndarray:
    """crlb_point over a (K, 3) stack of targets, vectorized."""
    diffs = positions[None, :, :] - points[:, None, :]  # (K, N, 3)
    d = np.linalg.norm(diffs, axis=2)
    if np.any(d == 0.0):
        raise NonLocalizableError("a sample point coincides with a base station")
    v = diffs / d[:, :, None]
    w = math.sqrt(params.kappa_s) * d ** (-params.beta)
    second = np.einsum("kn,kni,knj->kij", w, v, v)
    m = np.einsum("kn,kni->ki", w, v)
    f = 2.0 * w.sum(axis=1)[:, None, None] * second + 2.0 * m[:, :, None] * m[:, None, :]
    f = 0.5 * (f + np.transpose(f, (0, 2, 1)))
    eig = np.linalg.eigvalsh(f)
    top = eig[:, -1]
    singular = (top <= 0) | (eig[:, 0] <= top / COND_CUTOFF)
    values = np.full(points.shape[0], math.inf)
    ok = ~singular
    values[ok] = np.sum(1.0 / eig[ok], axis=1)
    return values


def area_crlb(samples: SampleSet, dep: Deployment, params: SensingParams) -> float:
    """Weighted average CRLB over the sampled area.

    +inf as soon as any positively weighted sample point is non-localizable.
    """
    if len(samples) == 0:
        raise ValueError("sample set is empty")
    values = _batched_crlb(samples.points, dep.positions, params)
    w = samples.weights
    active = w > 0
    if np.any(np.isinf(values[active])):
        return math.inf
    return float(np.dot(w[active], values[active]))


def coverage_probability(field: CrlbField, threshold: float) -> float:
    """Fraction of the area (by sample weight) with CRLB <= threshold."""
    if not (threshold > 0):
        raise ValueError("threshold must be positive")
    return float(field.samples.weights[field.values <= threshold].sum())


def crlb_field(samples: SampleSet, dep: Deployment, params: SensingParams) -> CrlbField:
    """Element-wise crlb_point over a sample grid (deterministic order)."""
    return CrlbField(samples, _batched_crlb(samples.points, dep.positions, params))


def field_to_csv(field: CrlbField, path) -> None:
    """Write a field as CSV with header x,y,z,crlb,log10_crlb (+inf as 'inf')."""
    with open(path, "w", newline="") as fh:
        fh.write("x,y,z,crlb,log10_crlb\n")
        for p, val in zip(field.samples.points, field.values):
            val = float(val)
            log_val = math.log10(val) if math.isfinite(val) else math.inf
            fh.write(
                f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},{val!r},{log_val!r}\n"
            )
