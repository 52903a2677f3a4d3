"""Cyclic per-station trust-region MM placement optimizer.

One station moves at a time while the rest stay fixed. Each visit expands
the sampled-area objective into its convex upper bound (surrogate module),
linearizes the cooperative-rate floor into a single convex inequality, and
minimizes the model inside a trust ball by projected gradient descent. The
ratio of actual to predicted reduction accepts or rejects the step and
adapts the ball radius, which guards the one non-majorizing linearization
in the model. Accepted steps therefore never increase the true objective,
and the rate floor, once satisfied, stays satisfied.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .comm import CommParams, area_rate
from .geometry import Deployment, SampleSet
from .sensing import SensingParams, area_crlb
from .surrogate import (
    DegenerateGeometryError,
    SurrogateCoefficients,
    build_surrogate,
    surrogate_gradient,
    surrogate_hessian,
    surrogate_value,
)

__all__ = [
    "TrustRegionState",
    "MmConfig",
    "PlacementProblem",
    "RateModel",
    "SubproblemResult",
    "MmResult",
    "build_rate_model",
    "solve_subproblem",
    "acceptance_ratio",
    "update_radius",
    "initialize_deployment",
    "mm_optimize",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True)
class TrustRegionState:
    """Trust ball radius plus the acceptance/adaptation constants."""

    epsilon: float
    eta_s: float = 0.25
    eta_v: float = 0.75
    gamma_grow: float = 2.0
    gamma_shrink: float = 0.5
    min_epsilon: float = 1e-3

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise ValueError("trust radius must be positive")
        if not (0 < self.eta_s < self.eta_v < 1):
            raise ValueError("need 0 < eta_s < eta_v < 1")
        if not (self.gamma_grow > 1 and 0 < self.gamma_shrink < 1):
            raise ValueError("need gamma_grow > 1 and gamma_shrink in (0, 1)")


def update_radius(state: TrustRegionState, rho: float) -> TrustRegionState:
    """Expand, keep, or shrink the radius from the reduction ratio."""
    if rho >= state.eta_v:
        eps = state.epsilon * state.gamma_grow
    elif rho >= state.eta_s:
        eps = state.epsilon
    else:
        eps = max(state.epsilon * state.gamma_shrink, state.min_epsilon)
    return dataclasses.replace(state, epsilon=eps)


@dataclass(frozen=True)
class MmConfig:
    max_outer_sweeps: int = 40
    convergence_tol: float = 1e-4
    subproblem_tol: float = 1e-8
    epsilon_init: float | None = None  # default: 5% of the problem diameter
    min_epsilon: float = 1e-3
    seed: int = 0
    eta_s: float = 0.25
    eta_v: float = 0.75
    gamma_grow: float = 2.0
    gamma_shrink: float = 0.5
    max_inner: int = 25
    max_subproblem_iter: int = 1000

    def __post_init__(self):
        if self.max_outer_sweeps < 1:
            raise ValueError("max_outer_sweeps must be >= 1")
        if min(self.convergence_tol, self.subproblem_tol, self.min_epsilon) <= 0:
            raise ValueError("tolerances must be positive")
        if self.epsilon_init is not None and self.epsilon_init <= 0:
            raise ValueError("epsilon_init must be positive")


@dataclass(frozen=True)
class PlacementProblem:
    """Sampled scenario the optimizer works on.

    `bounds` (3 x 2, per-axis low/high) limits initialization and baseline
    grid searches; the MM steps themselves are only ball-constrained.
    """

    targets: SampleSet
    sensing: SensingParams
    users: SampleSet | None = None
    comm: CommParams | None = None
    bounds: np.ndarray | None = None

    def __post_init__(self):
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            if b.shape != (3, 2) or np.any(b[:, 1] <= b[:, 0]):
                raise ValueError("bounds must be (3, 2) with high > low per axis")
            b.setflags(write=False)
            object.__setattr__(self, "bounds", b)
        if self.rate_floor > 0 and (self.users is None or self.comm is None):
            raise ValueError("a rate floor needs both users and comm params")

    @property
    def rate_floor(self) -> float:
        return self.comm.r_th if self.comm is not None else 0.0

    def objective(self, dep: Deployment) -> float:
        return area_crlb(self.targets, dep, self.sensing)

    def rate(self, dep: Deployment) -> float | None:
        if self.users is None or self.comm is None:
            return None
        return area_rate(self.users, dep, self.comm)

    @property
    def diameter(self) -> float:
        pts = [self.targets.points]
        if self.users is not None:
            pts.append(self.users.points)
        allp = np.vstack(pts)
        d = float(np.linalg.norm(allp.max(axis=0) - allp.min(axis=0)))
        return d if d > 0 else 1.0

    def default_bounds(self) -> np.ndarray:
        if self.bounds is not None:
            return self.bounds
        pts = [self.targets.points]
        if self.users is not None:
            pts.append(self.users.points)
        allp = np.vstack(pts)
        lo, hi = allp.min(axis=0), allp.max(axis=0)
        diam = self.diameter
        out = np.empty((3, 2))
        out[0] = (lo[0] - 0.25 * diam, hi[0] + 0.25 * diam)
        out[1] = (lo[1] - 0.25 * diam, hi[1] + 0.25 * diam)
        out[2] = (max(1.0, lo[2] - 0.25 * diam), hi[2] + 0.75 * diam)
        return out


@dataclass(frozen=True)
class RateModel:
    """Convexified area-rate floor around one station's expansion point.

    The tangent lower bound of the rate in z_j = |b - u_j|^alpha turns the
    floor into  sum_j coef_j * |b - u_j|^alpha <= budget,  a restriction of
    the true surrogate-rate constraint that is tight at the expansion point.
    """

    centers: np.ndarray  # (J, 3) user points
    coef: np.ndarray  # (J,) positive
    alpha: float
    budget: float
    rate_at_expansion: float
    floor: float

    @property
    def feasible_at_expansion(self) -> bool:
        return self.rate_at_expansion >= self.floor - 1e-12

    def value(self, b: np.ndarray) -> float:
        d = np.linalg.norm(self.centers - b, axis=1)
        return float(self.coef @ d**self.alpha)

    def gradient(self, b: np.ndarray) -> np.ndarray:
        diff = b - self.centers
        d = np.linalg.norm(diff, axis=1)
        return np.einsum("j,ji->i", self.coef * self.alpha * d ** (self.alpha - 2), diff)

    def hessian(self, b: np.ndarray) -> np.ndarray:
        diff = b - self.centers
        d = np.linalg.norm(diff, axis=1)
        a = self.alpha
        iso = self.coef * a * d ** (a - 2)
        radial = self.coef * a * (a - 2) * d ** (a - 4)
        return float(iso.sum()) * np.eye(3) + np.einsum("j,ji,jk->ik", radial, diff, diff)

    def linearized_rate(self, b: np.ndarray) -> float:
        phi_ref = self.budget - self.rate_at_expansion + self.floor
        return self.rate_at_expansion - (self.value(b) - phi_ref)


def build_rate_model(
    bs_index: int, dep: Deployment, users: SampleSet, comm: CommParams
) -> RateModel:
    """Linearize the cooperative rate floor around the station's position."""
    pos = dep.positions
    d_all = np.linalg.norm(pos[None, :, :] - users.points[:, None, :], axis=2)
    if np.any(d_all == 0.0):
        raise ValueError("a user sample point coincides with a base station")
    gain = comm.mean_gain
    pl = d_all ** (-comm.alpha)
    others = pl.sum(axis=1) - pl[:, bs_index]
    z_ref = d_all[:, bs_index] ** comm.alpha
    snr_total = gain * (others + 1.0 / z_ref) / comm.sigma_c2
    base = 1.0 + snr_total
    rate_ref = float(users.weights @ (np.log1p(snr_total) / _LN2))
    slope = gain / (comm.sigma_c2 * z_ref**2 * base * _LN2)
    coef = users.weights * slope
    budget = float(coef @ z_ref) + (rate_ref - comm.r_th)
    return RateModel(
        centers=users.points,
        coef=coef,
        alpha=comm.alpha,
        budget=budget,
        rate_at_expansion=rate_ref,
        floor=comm.r_th,
    )


@dataclass(frozen=True)
class SubproblemResult:
    position: np.ndarray
    status: str  # converged | max_iter | blocked
    iterations: int
    residual: float


def _project_ball(x: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    step = x - center
    norm = np.linalg.norm(step)
    if norm <= radius:
        return x
    return center + step * (radius / norm)


def _projected_gradient(value, grad, center, radius, tol, max_iter):
    """Minimize a smooth convex function over a ball; returns (x, iters, res).

    Backtracked projected gradient with Barzilai-Borwein step sizes; the
    stationarity residual is the norm of the unit-scaled projected-gradient
    mapping, relative to the gradient magnitude at the center.
    """
    x = np.array(center, dtype=float)
    gx = grad(x)
    scale_g = max(1.0, float(np.linalg.norm(gx)))
    probe = 1.0 / scale_g
    fx = value(x)
    t = radius / scale_g
    res = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        for _ in range(80):
            cand = _project_ball(x - t * gx, center, radius)
            step = cand - x
            sq = float(step @ step)
            if sq == 0.0:
                break
            f_cand = value(cand)
            if f_cand <= fx + float(gx @ step) + sq / (2.0 * t):
                break
            t *= 0.5
        else:
            break
        if sq == 0.0:
            res = 0.0
            break
        g_new = grad(cand)
        ys = float((g_new - gx) @ step)
        if ys > 0:
            t = min(max(sq / ys, 1e-12 * radius / scale_g), 1e6 * radius / scale_g)
        x, fx, gx = cand, f_cand, g_new
        res = float(np.linalg.norm(x - _project_ball(x - probe * gx, center, radius)))
        res /= probe * scale_g
        if res <= tol:
            return x, it, res
    return x, it, res


def _kkt_polish(coeffs, center, radius, x0, rate_model=None):
    """Pin the ball-(and rate-)constrained minimizer by active-set Newton.

    The subproblem has at most two smooth convex constraints in three
    variables, so every active set is tried from the first-order point and
    the best KKT-consistent feasible solution wins. Quadratic convergence
    makes the result a machine-precision function of the expansion data,
    which the trajectory-equivariance contract relies on.
    """
    def value(b):
        return surrogate_value(coeffs, b, include_constants=False)

    g_scale = max(1.0, float(np.linalg.norm(surrogate_gradient(coeffs, center))))
    budget = rate_model.budget if rate_model is not None else 0.0
    feas_tol = 1e-9 * max(1.0, abs(budget))
    combos = [(False, False), (True, False)]
    if rate_model is not None:
        combos += [(False, True), (True, True)]

    # The model is convex, so any KKT-consistent feasible point is a global
    # minimizer; take the first valid active set in a fixed order rather
    # than comparing near-tied values.
    for ball_on, rate_on in combos:
        out = _newton_active_set(
            coeffs, center, radius, x0, rate_model, ball_on, rate_on, g_scale
        )
        if out is None:
            continue
        x, lam_ball, lam_rate = out
        if ball_on and lam_ball < -1e-7 * g_scale:
            continue
        if rate_on and lam_rate < -1e-7:
            continue
        if float(np.linalg.norm(x - center)) > radius * (1 + 1e-9):
            continue
        if rate_model is not None and rate_model.value(x) > budget + feas_tol:
            continue
        if value(x) <= value(x0) + 1e-12 * max(1.0, abs(value(x0))):
            return x
    return x0


def _newton_active_set(coeffs, center, radius, x0, rate_model, ball_on, rate_on, g_scale):
    x = np.array(x0, dtype=float)
    lam_ball, lam_rate = 0.0, 0.0
    n_mult = int(ball_on) + int(rate_on)

    def residual(x, lam_ball, lam_rate):
        r = surrogate_gradient(coeffs, x)
        rows = []
        if ball_on:
            r = r + lam_ball * (x - center)
            rows.append(0.5 * (float((x - center) @ (x - center)) - radius**2))
        if rate_on:
            r = r + lam_rate * rate_model.gradient(x)
            rows.append(rate_model.value(x) - rate_model.budget)
        return np.concatenate([r, np.array(rows)]) if rows else r

    # least-squares multiplier start from the first-order point
    if n_mult:
        cols = []
        if ball_on:
            cols.append(x - center)
        if rate_on:
            cols.append(rate_model.gradient(x))
        a = np.stack(cols, axis=1)
        lam, *_ = np.linalg.lstsq(a, -surrogate_gradient(coeffs, x), rcond=None)
        if ball_on:
            lam_ball = float(lam[0])
        if rate_on:
            lam_rate = float(lam[-1])

    f_norm = float(np.linalg.norm(residual(x, lam_ball, lam_rate)))
    scale = g_scale + abs(radius) + 1.0
    for _ in range(60):
        if f_norm <= 1e-12 * scale:
            break
        hess = surrogate_hessian(coeffs, x)
        if ball_on:
            hess = hess + lam_ball * np.eye(3)
        if rate_on:
            hess = hess + lam_rate * rate_model.hessian(x)
        dim = 3 + n_mult
        jac = np.zeros((dim, dim))
        jac[:3, :3] = hess
        col = 3
        if ball_on:
            jac[:3, col] = x - center
            jac[col, :3] = x - center
            col += 1
        if rate_on:
            jac[:3, col] = rate_model.gradient(x)
            jac[col, :3] = rate_model.gradient(x)
        rhs = -residual(x, lam_ball, lam_rate)
        try:
            step = np.linalg.solve(jac + 1e-14 * scale * np.eye(dim), rhs)
        except np.linalg.LinAlgError:
            return None
        t = 1.0
        for _ in range(40):
            x_new = x + t * step[:3]
            lb = lam_ball + t * step[3] if ball_on else 0.0
            lr = lam_rate + t * step[3 + int(ball_on)] if rate_on else 0.0
            f_new = float(np.linalg.norm(residual(x_new, lb, lr)))
            if f_new < f_norm * (1.0 - 1e-4 * t) + 1e-16 * scale:
                break
            t *= 0.5
        else:
            return None
        x, lam_ball, lam_rate, f_norm = x_new, lb, lr, f_new
    if f_norm > 1e-9 * scale:
        return None
    return x, lam_ball, lam_rate


def solve_subproblem(
    coeffs: SurrogateCoefficients,
    epsilon: float,
    rate_model: RateModel | None = None,
    tol: float = 1e-8,
    max_iter: int = 1000,
) -> SubproblemResult:
    """Minimize the linearized surrogate inside the trust ball.

    A projected-gradient pass finds the basin and handles the rate floor by
    an exact penalty whose weight grows until feasibility; an active-set
    Newton polish then pins the exact constrained minimizer. A degenerate
    ball returns the expansion point; an expansion point that already
    violates the linearized rate floor returns it unchanged with status
    'blocked'.
    """
    center = coeffs.expansion_point
    if epsilon <= 0:
        return SubproblemResult(np.array(center), "converged", 0, 0.0)

    if rate_model is None:
        x, iters, res = _projected_gradient(
            lambda b: surrogate_value(coeffs, b, include_constants=False),
            lambda b: surrogate_gradient(coeffs, b),
            center,
            epsilon,
            tol,
            max_iter,
        )
        x = _kkt_polish(coeffs, center, epsilon, x)
        status = "converged" if res <= tol else "max_iter"
        return SubproblemResult(x, status, iters, res)

    budget = rate_model.budget
    feas_tol = 1e-9 * max(1.0, abs(budget))
    if rate_model.value(center) > budget + feas_tol:
        return SubproblemResult(np.array(center), "blocked", 0, math.inf)

    g_obj = float(np.linalg.norm(surrogate_gradient(coeffs, center)))
    g_con = float(np.linalg.norm(rate_model.gradient(center)))
    mu = 10.0 * max(1.0, g_obj / max(g_con, 1e-300))
    x, iters, res = np.array(center), 0, math.inf
    for _ in range(6):
        def value(b, mu=mu):
            pen = max(0.0, rate_model.value(b) - budget)
            return surrogate_value(coeffs, b, include_constants=False) + mu * pen

        def grad(b, mu=mu):
            g = surrogate_gradient(coeffs, b)
            if rate_model.value(b) > budget:
                g = g + mu * rate_model.gradient(b)
            return g

        x, iters, res = _projected_gradient(value, grad, center, epsilon, tol, max_iter)
        if rate_model.value(x) <= budget + feas_tol:
            x = _kkt_polish(coeffs, center, epsilon, x, rate_model)
            status = "converged" if res <= tol else "max_iter"
            return SubproblemResult(x, status, iters, res)
        mu *= 10.0
    return SubproblemResult(np.array(center), "blocked", iters, res)


def _objective_with(
    problem: PlacementProblem, dep: Deployment, bs_index: int, b: np.ndarray
) -> float:
    return area_crlb(problem.targets, dep.with_position(bs_index, b), problem.sensing)


def acceptance_ratio(
    dep: Deployment,
    bs_index: int,
    b_old: np.ndarray,
    b_new: np.ndarray,
    surrogate_old: float,
    surrogate_new: float,
    targets: SampleSet,
    params: SensingParams,
) -> float:
    """Actual over predicted objective reduction for a candidate step.

    A vanishing step or a nonpositive predicted reduction maps to the
    rejection path (0 and -inf respectively).
    """
    move = float(np.linalg.norm(np.asarray(b_new) - np.asarray(b_old)))
    if move <= 1e-14 * max(1.0, float(np.linalg.norm(b_old))):
        return 0.0
    predicted = surrogate_old - surrogate_new
    if not (predicted > 0):
        return -math.inf
    true_old = area_crlb(targets, dep.with_position(bs_index, b_old), params)
    true_new = area_crlb(targets, dep.with_position(bs_index, b_new), params)
    if math.isinf(true_new):
        return -math.inf
    return (true_old - true_new) / predicted


@dataclass
class MmResult:
    deployment: Deployment
    trace: list[float]
    log_rows: list[tuple]
    converged: bool
    status: str  # converged | max-sweeps | rate-infeasible
    objective: float
    rate: float | None
    sweeps: int
    # one (sweep, bs_index, deployment positions) snapshot per surrogate
    # expansion built, for state-local verification (e.g. tangency)
    expansions: list[tuple] = dataclasses.field(default_factory=list)

    def write_log_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("sweep,bs_index,rho,epsilon,objective,rate\n")
            for sweep, n, rho, eps, obj, rate in self.log_rows:
                fh.write(
                    f"{int(sweep)},{int(n)},{float(rho)!r},{float(eps)!r},"
                    f"{float(obj)!r},{float(rate)!r}\n"
                )


def _min_separation(dep: Deployment, bs_index: int, b: np.ndarray) -> float:
    others = np.delete(dep.positions, bs_index, axis=0)
    return float(np.min(np.linalg.norm(others - b, axis=1)))


def initialize_deployment(
    problem: PlacementProblem,
    n_bs: int,
    seed: int = 0,
    coarse_counts: tuple[int, int, int] = (6, 6, 5),
    max_retries: int = 20,
) -> Deployment:
    """Seeded random spread plus one per-station coarse grid pass.

    Retries fresh draws (with height jitter) until the information matrix is
    nonsingular at every target sample, then greedily repositions each
    station on a coarse grid while the others stay fixed.
    """
    if n_bs < 1:
        raise ValueError("n_bs must be >= 1")
    bounds = problem.default_bounds()
    rng = np.random.default_rng(seed)
    span = bounds[:, 1] - bounds[:, 0]
    sep = 1e-6 * max(problem.diameter, 1.0)

    dep = None
    for _ in range(max_retries):
        pos = bounds[:, 0] + rng.random((n_bs, 3)) * span
        pos[:, 2] = bounds[2, 0] + (0.15 + 0.7 * rng.random(n_bs)) * span[2]
        if n_bs > 1:
            dmat = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
            np.fill_diagonal(dmat, np.inf)
            if dmat.min() <= sep:
                continue
        candidate = Deployment(pos)
        if math.isfinite(problem.objective(candidate)):
            dep = candidate
            break
    if dep is None:
        raise RuntimeError(
            "could not find a nonsingular initialization within the retry budget"
        )

    axes = [
        np.linspace(bounds[a, 0], bounds[a, 1], coarse_counts[a]) for a in range(3)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.reshape(-1) for m in mesh], axis=1)
    for n in range(n_bs):
        best_b = dep.positions[n]
        best_val = problem.objective(dep)
        for cand in grid:
            if n_bs > 1 and _min_separation(dep, n, cand) <= sep:
                continue
            if np.min(np.linalg.norm(problem.targets.points - cand, axis=1)) == 0.0:
                continue
            val = _objective_with(problem, dep, n, cand)
            if val < best_val:
                best_val, best_b = val, np.array(cand)
        dep = dep.with_position(n, best_b)
    if not math.isfinite(problem.objective(dep)):
        raise RuntimeError("initialization left the deployment non-localizable")
    return dep


def _restore_feasibility(problem, dep, cfg, states, log_rows):
    """Pre-phase: raise the surrogate area rate to the floor before MM.

    The linearized rate is a tangent lower bound of the true surrogate rate,
    so maximizing it is itself an MM ascent; trust regions only bound steps.
    Restoration rows are logged with sweep = 0.
    """
    floor = problem.rate_floor
    rate = problem.rate(dep)
    pred_tol = 1e-12 * max(1.0, floor)
    for _ in range(max(cfg.max_outer_sweeps, 50)):
        if rate >= floor:
            return dep, rate, True
        progressed = False
        for n in range(dep.n_bs):
            if rate >= floor:
                break
            model = build_rate_model(n, dep, problem.users, problem.comm)
            center = dep.positions[n]
            state = states[n]
            for _ in range(cfg.max_inner):
                x, _, _ = _projected_gradient(
                    model.value, model.gradient, center,
                    state.epsilon, cfg.subproblem_tol, cfg.max_subproblem_iter,
                )
                predicted = model.value(center) - model.value(x)
                if predicted <= pred_tol or _min_separation(dep, n, x) <= 0.0:
                    break  # stationary for this station (or exact collision)
                new_dep = dep.with_position(n, x)
                new_rate = problem.rate(new_dep)
                rho = (new_rate - rate) / predicted
                state = update_radius(state, rho)
                log_rows.append((0, n, float(rho), state.epsilon,
                                 problem.objective(dep), float(new_rate)))
                if rho >= state.eta_s:
                    dep, rate = new_dep, new_rate
                    progressed = True
                    break
                if state.epsilon <= cfg.min_epsilon * (1 + 1e-12):
                    break
            states[n] = state
        if not progressed and rate < floor:
            return dep, rate, False
    return dep, rate, rate >= floor


def mm_optimize(
    problem: PlacementProblem, init: Deployment, cfg: MmConfig | None = None
) -> MmResult:
    """Run the cyclic trust-region MM until the objective settles.

    The trace holds the true sampled objective after every station visit
    (entry 0 is the initial objective) and is non-increasing. Termination:
    relative objective change over a full sweep below convergence_tol, or
    the sweep budget. A rate floor, once met (restoring it first if needed),
    is preserved by every accepted step.
    """
    cfg = cfg or MmConfig()
    obj = problem.objective(init)
    if not math.isfinite(obj):
        raise ValueError("initial deployment cannot localize every target sample")
    eps0 = cfg.epsilon_init if cfg.epsilon_init is not None else 0.05 * problem.diameter

    def fresh_state():
        return TrustRegionState(
            epsilon=eps0, eta_s=cfg.eta_s, eta_v=cfg.eta_v,
            gamma_grow=cfg.gamma_grow, gamma_shrink=cfg.gamma_shrink,
            min_epsilon=cfg.min_epsilon,
        )

    states = [fresh_state() for _ in range(init.n_bs)]
    log_rows: list[tuple] = []
    dep = init

    rate = problem.rate(dep)
    use_rate = problem.rate_floor > 0
    if use_rate and rate < problem.rate_floor:
        dep, rate, ok = _restore_feasibility(problem, dep, cfg, states, log_rows)
        obj = problem.objective(dep)
        if not ok:
            return MmResult(dep, [obj], log_rows, False, "rate-infeasible",
                            obj, rate, 0)
        states = [fresh_state() for _ in range(init.n_bs)]

    trace = [obj]
    expansions: list[tuple] = []
    sweeps_done = 0
    converged = False
    sep = 1e-9 * max(problem.diameter, 1.0)
    for sweep in range(1, cfg.max_outer_sweeps + 1):
        sweeps_done = sweep
        obj_start = obj
        for n in range(dep.n_bs):
            state = states[n]
            # One visit fully optimizes this station: trust-region steps,
            # rebuilding the expansion after every accepted move, until the
            # model flattens, the radius floors out, or the budget is spent.
            budget = cfg.max_inner
            stop_visit = False
            while budget > 0 and not stop_visit:
                b_old = dep.positions[n]
                try:
                    coeffs = build_surrogate(n, dep, problem.targets, problem.sensing)
                except DegenerateGeometryError:
                    log_rows.append((sweep, n, math.nan, state.epsilon, obj,
                                     rate if rate is not None else math.nan))
                    break
                expansions.append((sweep, n, np.array(dep.positions)))
                model = (
                    build_rate_model(n, dep, problem.users, problem.comm)
                    if use_rate else None
                )
                s_old = surrogate_value(coeffs, b_old, include_constants=False)
                progressed = False
                while budget > 0:
                    budget -= 1
                    result = solve_subproblem(
                        coeffs, state.epsilon, model,
                        tol=cfg.subproblem_tol, max_iter=cfg.max_subproblem_iter,
                    )
                    if result.status == "blocked":
                        log_rows.append((sweep, n, math.nan, state.epsilon, obj,
                                         rate if rate is not None else math.nan))
                        stop_visit = True
                        break
                    b_new = result.position
                    s_new = surrogate_value(coeffs, b_new, include_constants=False)
                    if s_old - s_new <= 1e-7 * max(abs(obj), 1e-300):
                        # flat over the whole ball: the station is at a
                        # stationary point, leave it and its radius alone
                        log_rows.append((sweep, n, 0.0, state.epsilon, obj,
                                         rate if rate is not None else math.nan))
                        stop_visit = True
                        break
                    if _min_separation(dep, n, b_new) <= sep:
                        rho = -math.inf  # collision with a fixed station
                    else:
                        rho = acceptance_ratio(
                            dep, n, b_old, b_new, s_old, s_new,
                            problem.targets, problem.sensing,
                        )
                    state = update_radius(state, rho)
                    accepted = rho >= state.eta_s
                    if accepted:
                        dep = dep.with_position(n, b_new)
                        obj = problem.objective(dep)
                        rate = problem.rate(dep) if rate is not None else None
                    log_rows.append((sweep, n, float(rho), state.epsilon, obj,
                                     rate if rate is not None else math.nan))
                    if accepted:
                        progressed = True
                        break  # re-expand at the new position
                    if state.epsilon <= cfg.min_epsilon * (1 + 1e-12):
                        stop_visit = True
                        break
                if not progressed:
                    break
            states[n] = state
            trace.append(obj)
        rel = abs(obj_start - obj) / max(abs(obj_start), 1e-300)
        if rel < cfg.convergence_tol:
            converged = True
            break

    status = "converged" if converged else "max-sweeps"
    return MmResult(dep, trace, log_rows, converged, status, obj, rate, sweeps_done,
                    expansions)
