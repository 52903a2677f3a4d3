"""Per-base-station convex surrogate of the sampled area CRLB.

Moving one base station while the others stay fixed changes only the links
that involve it. Splitting the information matrix accordingly and applying
the Woodbury identity gives, per target,

    crlb(b) = tr(Minv) - tr(Minv U Z^-1 U^T Minv),
    Z = D^-1 + U^T Minv U,

where M collects the links among the other stations, U stacks the summed
unit-direction columns v_i + v_n and D the link pathloss weights. The
negated matrix-fractional term is jointly convex in (U, Z), so its
first-order expansion at the current position is a global upper bound;
a second eigenvalue-shift bound removes the remaining quadratic direction
term. The result per target is

    quad_coef * d^(2 beta) + lin_coef * d^beta + dir_coef . v(b) + const,

with d the station-target distance and v(b) the unit direction, an upper
bound that touches the true objective at the expansion point. The dropped
direction nonlinearity is linearized only inside the trust-region
subproblem, whose step-acceptance test guards the approximation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Deployment, SampleSet
from .sensing import COND_CUTOFF, SensingParams

__all__ = [
    "DegenerateGeometryError",
    "SurrogateCoefficients",
    "build_surrogate",
    "surrogate_value",
    "surrogate_gradient",
    "surrogate_hessian",
    "majorizer_value",
]


class DegenerateGeometryError(RuntimeError):
    """The fixed stations alone cannot localize some target, so the
    moving station's update has no valid expansion (skip it)."""


@dataclass(frozen=True)
class SurrogateCoefficients:
    """Expansion data for one station against all sampled targets.

    Leading axis K indexes targets. quad_coef, lin_coef, dir_coef and
    const_term define the upper bound; the remaining stacks expose the
    intermediate matrices for verification (fim_rest is the information of
    the links not involving the station, capacitance the Woodbury core,
    cap_grad / dir_grad the expansion slopes, dir_quad_weight the weight of
    the quadratic direction term, shifted_inv the negative-semidefinite
    eigenvalue-shifted inverse used to bound it).
    """

    bs_index: int
    expansion_point: np.ndarray
    targets: SampleSet
    beta: float
    kappa_s: float
    quad_coef: np.ndarray
    lin_coef: np.ndarray
    dir_coef: np.ndarray
    const_term: np.ndarray
    unit_dir_ref: np.ndarray
    dist_ref: np.ndarray
    fim_rest: np.ndarray
    pair_dirs: np.ndarray
    pair_weights: np.ndarray
    capacitance: np.ndarray
    cap_grad: np.ndarray
    dir_grad: np.ndarray
    dir_quad_weight: np.ndarray
    max_eig_inv: np.ndarray
    shifted_inv: np.ndarray


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def build_surrogate(
    bs_index: int,
    dep: Deployment,
    targets: SampleSet,
    params: SensingParams,
) -> SurrogateCoefficients:
    """Expand the per-target objective around the station's current position.

    Raises DegenerateGeometryError when the remaining stations' information
    matrix is singular at some target (rank < 3), since the split then has
    no inverse to expand around.
    """
    pos = dep.positions
    n = bs_index
    n_bs = dep.n_bs
    beta, kappa_s = params.beta, params.kappa_s
    t = targets.points

    diffs = pos[None, :, :] - t[:, None, :]  # (K, N, 3)
    d = np.linalg.norm(diffs, axis=2)
    if np.any(d == 0.0):
        raise DegenerateGeometryError("a target coincides with a base station")
    v = diffs / d[:, :, None]
    w = math.sqrt(kappa_s) * d ** (-beta)

    others = [i for i in range(n_bs) if i != n]
    w_o, v_o = w[:, others], v[:, others, :]
    second = np.einsum("kn,kni,knj->kij", w_o, v_o, v_o)
    mean_dir = np.einsum("kn,kni->ki", w_o, v_o)
    fim_rest = _sym(
        2.0 * w_o.sum(axis=1)[:, None, None] * second
        + 2.0 * mean_dir[:, :, None] * mean_dir[:, None, :]
    )

    eig, vecs = np.linalg.eigh(fim_rest)
    if np.any(eig[:, -1] <= 0) or np.any(eig[:, 0] <= eig[:, -1] / COND_CUTOFF):
        raise DegenerateGeometryError(
            f"fixed stations cannot localize every target without station {n}"
        )
    inv_rest = _sym(np.einsum("kij,kj,klj->kil", vecs, 1.0 / eig, vecs))
    inv_rest2 = _sym(np.einsum("kij,kj,klj->kil", vecs, eig**-2.0, vecs))

    v_n = v[:, n, :]  # (K, 3)
    d_n = d[:, n]
    pair_dirs = np.swapaxes(v, 1, 2) + v_n[:, :, None]  # (K, 3, N), column i = v_i + v_n
    pair_weights = 2.0 * w * w[:, n][:, None]
    pair_weights[:, n] = w[:, n] ** 2

    ut_minv = np.einsum("kai,kab->kib", pair_dirs, inv_rest)  # (K, N, 3) rows (M^-1 u_i)^T
    capacitance = _sym(
        np.einsum("kib,kbj->kij", ut_minv, pair_dirs)
        + np.eye(n_bs)[None, :, :] / pair_weights[:, :, None]
    )
    cap_inv = _sym(np.linalg.inv(capacitance))
    quad_core = _sym(np.einsum("kai,kab,kbj->kij", pair_dirs, inv_rest2, pair_dirs))
    cap_grad = _sym(np.einsum("kim,kmn,knj->kij", cap_inv, quad_core, cap_inv))
    dir_grad = 2.0 * np.einsum("kab,kbi,kij->kaj", inv_rest2, pair_dirs, cap_inv)

    picked = np.ones(n_bs)
    picked[n] += 1.0  # all-ones plus the moving station's own indicator
    a1 = np.einsum("i,kij,j->k", picked, cap_grad, picked)
    rest_dirs = np.swapaxes(v, 1, 2).copy()  # (K, 3, N), columns v_i
    rest_dirs[:, :, n] = 0.0
    q1 = 2.0 * np.einsum("kab,kbi,kij,j->ka", inv_rest, rest_dirs, cap_grad, picked)

    lam = 1.0 / eig[:, 0]  # top eigenvalue of the inverse
    shifted_inv = inv_rest - lam[:, None, None] * np.eye(3)[None, :, :]

    dir_coef = (
        2.0 * a1[:, None] * np.einsum("kab,kb->ka", shifted_inv, v_n)
        + q1
        - np.einsum("kai,i->ka", dir_grad, picked)
    )
    quad_coef = cap_grad[:, n, n] / kappa_s
    mask = np.ones(n_bs, dtype=bool)
    mask[n] = False
    diag_rest = np.einsum("kii->ki", cap_grad)[:, mask]
    lin_coef = np.einsum("km,km->k", diag_rest, d[:, mask] ** beta) / (2.0 * kappa_s)

    # Constant bookkeeping so the bound touches the true objective at the
    # expansion point. Algebraically the constants collapse to
    # crlb(expansion) minus the variable part there; evaluating that form
    # directly avoids the catastrophic cancellation the raw expansion
    # pieces suffer when the remaining stations are nearly degenerate
    # (their magnitudes grow with cond(fim_rest) while the sum stays tiny).
    second_all = np.einsum("kn,kni,knj->kij", w, v, v)
    mean_all = np.einsum("kn,kni->ki", w, v)
    f_full = _sym(
        2.0 * w.sum(axis=1)[:, None, None] * second_all
        + 2.0 * mean_all[:, :, None] * mean_all[:, None, :]
    )
    eig_full = np.linalg.eigvalsh(f_full)
    if np.any(eig_full[:, -1] <= 0) or np.any(
        eig_full[:, 0] <= eig_full[:, -1] / COND_CUTOFF
    ):
        raise DegenerateGeometryError("expansion deployment cannot localize a target")
    crlb_ref = np.sum(1.0 / eig_full, axis=1)
    var_ref = (
        quad_coef * d_n ** (2 * beta)
        + lin_coef * d_n**beta
        + np.einsum("ki,ki->k", dir_coef, v_n)
    )
    const_term = crlb_ref - var_ref

    return SurrogateCoefficients(
        bs_index=n,
        expansion_point=np.array(pos[n]),
        targets=targets,
        beta=beta,
        kappa_s=kappa_s,
        quad_coef=quad_coef,
        lin_coef=lin_coef,
        dir_coef=dir_coef,
        const_term=const_term,
        unit_dir_ref=v_n,
        dist_ref=d_n,
        fim_rest=fim_rest,
        pair_dirs=pair_dirs,
        pair_weights=pair_weights,
        capacitance=capacitance,
        cap_grad=cap_grad,
        dir_grad=dir_grad,
        dir_quad_weight=a1,
        max_eig_inv=lam,
        shifted_inv=shifted_inv,
    )


def _dists(coeffs: SurrogateCoefficients, b: np.ndarray) -> np.ndarray:
    return np.linalg.norm(coeffs.targets.points - np.asarray(b, dtype=float), axis=1)


def surrogate_value(
    coeffs: SurrogateCoefficients, b: np.ndarray, include_constants: bool = True
) -> float:
    """Weighted subproblem objective at candidate position b.

    The direction term is linearized around the expansion point, so this is
    the model the trust-region step minimizes; with constants included it
    equals the true sampled objective at the expansion point.
    """
    b = np.asarray(b, dtype=float)
    d = _dists(coeffs, b)
    beta = coeffs.beta
    step = b - coeffs.expansion_point
    proj = coeffs.dir_coef - coeffs.unit_dir_ref * np.einsum(
        "ki,ki->k", coeffs.unit_dir_ref, coeffs.dir_coef
    )[:, None]
    dir_term = np.einsum("ki,ki->k", coeffs.dir_coef, coeffs.unit_dir_ref)
    dir_term = dir_term + (proj @ step) / coeffs.dist_ref
    per_target = coeffs.quad_coef * d ** (2 * beta) + coeffs.lin_coef * d**beta + dir_term
    if include_constants:
        per_target = per_target + coeffs.const_term
    return float(np.dot(coeffs.targets.weights, per_target))


def surrogate_gradient(coeffs: SurrogateCoefficients, b: np.ndarray) -> np.ndarray:
    """Gradient of surrogate_value with respect to the candidate position."""
    b = np.asarray(b, dtype=float)
    diff = b - coeffs.targets.points  # (K, 3)
    d = np.linalg.norm(diff, axis=1)
    beta = coeffs.beta
    radial = (
        2 * beta * coeffs.quad_coef * d ** (2 * beta - 2)
        + beta * coeffs.lin_coef * d ** (beta - 2)
    )
    grad = np.einsum("k,ki->i", coeffs.targets.weights * radial, diff)
    proj = coeffs.dir_coef - coeffs.unit_dir_ref * np.einsum(
        "ki,ki->k", coeffs.unit_dir_ref, coeffs.dir_coef
    )[:, None]
    grad = grad + np.einsum("k,ki->i", coeffs.targets.weights / coeffs.dist_ref, proj)
    return grad


def surrogate_hessian(coeffs: SurrogateCoefficients, b: np.ndarray) -> np.ndarray:
    """Hessian of surrogate_value (the linearized direction term is flat)."""
    b = np.asarray(b, dtype=float)
    diff = b - coeffs.targets.points
    d = np.linalg.norm(diff, axis=1)
    beta = coeffs.beta
    w = coeffs.targets.weights
    iso = w * (
        2 * beta * coeffs.quad_coef * d ** (2 * beta - 2)
        + beta * coeffs.lin_coef * d ** (beta - 2)
    )
    radial = w * (
        2 * beta * (2 * beta - 2) * coeffs.quad_coef * d ** (2 * beta - 4)
        + beta * (beta - 2) * coeffs.lin_coef * d ** (beta - 4)
    )
    hess = float(iso.sum()) * np.eye(3)
    hess += np.einsum("k,ki,kj->ij", radial, diff, diff)
    return hess


def majorizer_value(
    coeffs: SurrogateCoefficients, b: np.ndarray, include_constants: bool = True
) -> float:
    """Upper-bound value with the exact (non-linearized) direction term.

    Globally majorizes the true sampled objective as a function of the
    station's position; used by the bound property tests.
    """
    b = np.asarray(b, dtype=float)
    diff = b - coeffs.targets.points
    d = np.linalg.norm(diff, axis=1)
    if np.any(d == 0.0):
        raise ValueError("candidate position coincides with a target")
    beta = coeffs.beta
    dir_term = np.einsum("ki,ki->k", coeffs.dir_coef, diff / d[:, None])
    per_target = coeffs.quad_coef * d ** (2 * beta) + coeffs.lin_coef * d**beta + dir_term
    if include_constants:
        per_target = per_target + coeffs.const_term
    return float(np.dot(coeffs.targets.weights, per_target))
