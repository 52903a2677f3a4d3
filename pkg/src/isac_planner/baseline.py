"""Reference optimizers and experiment drivers.

Cyclic one-station-at-a-time global grid search (the measurement baseline
for the replication scaling curves), the area-replication scaling
experiment in its two framings (subdivide the original region, or tile an
enlarged one), and the uniform-height sweep over a line scenario.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .comm import CommParams
from .geometry import Deployment, Region, RegionKind, SampleSet, sample_region
from .optimizer import PlacementProblem
from .sensing import COND_CUTOFF, SensingParams, area_crlb

__all__ = [
    "GridSpec",
    "coordinate_global_search",
    "scaling_experiment",
    "height_sweep",
    "line_layout",
    "line_scenario_value",
    "write_rows_csv",
]

_LN2 = math.log(2.0)

OBJECTIVES = ("a_crlb", "area_rate", "a_crlb_with_rate_floor")


@dataclass(frozen=True)
class GridSpec:
    """Search volume and per-axis spacing for the candidate grids.

    Each refinement level shrinks the spacing by 4x in a window of one old
    step around the incumbent, clipped to the bounds.
    """

    bounds: np.ndarray  # (3, 2)
    resolution: np.ndarray  # (3,) meters
    refinement_levels: int = 3

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float)
        r = np.asarray(self.resolution, dtype=float).reshape(-1)
        if r.size == 1:
            r = np.repeat(r, 3)
        if b.shape != (3, 2) or np.any(b[:, 1] <= b[:, 0]):
            raise ValueError("bounds must be (3, 2) with high > low per axis")
        if r.shape != (3,) or np.any(r <= 0):
            raise ValueError("resolution must be positive per axis")
        if self.refinement_levels < 1:
            raise ValueError("refinement_levels must be >= 1")
        b.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "resolution", r)

    def global_grid(self) -> np.ndarray:
        axes = []
        for a in range(3):
            lo, hi = self.bounds[a]
            count = max(1, int(round((hi - lo) / self.resolution[a])) + 1)
            axes.append(np.linspace(lo, hi, count))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)

    def local_grid(self, center: np.ndarray, level: int) -> np.ndarray:
        spacing = self.resolution / (4.0**level)
        axes = []
        for a in range(3):
            pts = center[a] + np.linspace(-4, 4, 9) * spacing[a]
            pts = np.clip(pts, self.bounds[a, 0], self.bounds[a, 1])
            axes.append(np.unique(pts))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=1)


def _acrlb_candidates(
    cands: np.ndarray,
    others: np.ndarray,
    targets: SampleSet,
    params: SensingParams,
) -> np.ndarray:
    """Area CRLB for each candidate position of one station, others fixed.

    Candidates that coincide with a target sample are marked +inf.
    """
    t = targets.points
    wgt = targets.weights
    beta, ks = params.beta, params.kappa_s
    sq = math.sqrt(ks)

    if others.shape[0] > 0:
        diffs_o = others[None, :, :] - t[:, None, :]  # (K, N-1, 3)
        d_o = np.linalg.norm(diffs_o, axis=2)
        if np.any(d_o == 0.0):
            raise ValueError("a target sample coincides with a fixed station")
        v_o = diffs_o / d_o[:, :, None]
        w_o = sq * d_o ** (-beta)
        s0 = w_o.sum(axis=1)  # (K,)
        second = np.einsum("kn,kni,knj->kij", w_o, v_o, v_o)
        mean_dir = np.einsum("kn,kni->ki", w_o, v_o)
    else:
        s0 = np.zeros(t.shape[0])
        second = np.zeros((t.shape[0], 3, 3))
        mean_dir = np.zeros((t.shape[0], 3))

    diffs_c = cands[:, None, :] - t[None, :, :]  # (M, K, 3)
    d_c = np.linalg.norm(diffs_c, axis=2)
    bad = np.any(d_c == 0.0, axis=1)
    d_safe = np.where(d_c == 0.0, 1.0, d_c)
    v_c = diffs_c / d_safe[:, :, None]
    w_c = sq * d_safe ** (-beta)

    s0_f = s0[None, :] + w_c
    second_f = second[None] + w_c[:, :, None, None] * (
        v_c[:, :, :, None] * v_c[:, :, None, :]
    )
    mean_f = mean_dir[None] + w_c[:, :, None] * v_c
    f = 2.0 * s0_f[:, :, None, None] * second_f + 2.0 * (
        mean_f[:, :, :, None] * mean_f[:, :, None, :]
    )
    f = 0.5 * (f + np.swapaxes(f, -1, -2))
    eig = np.linalg.eigvalsh(f)
    top = eig[..., -1]
    singular = (top <= 0) | (eig[..., 0] <= top / COND_CUTOFF)
    vals = np.where(singular, np.inf, np.sum(1.0 / np.maximum(eig, 1e-300), axis=-1))

    active = wgt > 0
    any_inf = np.any(np.isinf(vals[:, active]), axis=1)
    out = np.einsum("mk,k->m", np.where(np.isinf(vals), 0.0, vals)[:, active], wgt[active])
    out[any_inf | bad] = np.inf
    return out


def _rate_candidates(
    cands: np.ndarray,
    others: np.ndarray,
    users: SampleSet,
    comm: CommParams,
) -> np.ndarray:
    """Surrogate area rate for each candidate position of one station.

    Candidates landing exactly on a user sample are marked -inf (invalid).
    """
    u = users.points
    if others.shape[0] > 0:
        d_o = np.linalg.norm(others[None, :, :] - u[:, None, :], axis=2)
        if np.any(d_o == 0.0):
            raise ValueError("a user sample coincides with a fixed station")
        base_pl = (d_o ** (-comm.alpha)).sum(axis=1)  # (J,)
    else:
        base_pl = np.zeros(u.shape[0])
    d_c = np.linalg.norm(cands[:, None, :] - u[None, :, :], axis=2)  # (M, J)
    bad = np.any(d_c == 0.0, axis=1)
    d_safe = np.where(d_c == 0.0, 1.0, d_c)
    snr = comm.mean_gain * (base_pl[None, :] + d_safe ** (-comm.alpha)) / comm.sigma_c2
    rates = np.log1p(snr) / _LN2
    out = rates @ users.weights
    out[bad] = -np.inf
    return out


def _evaluate_move(problem, dep, n, cands, objective):
    """(score, feasible) per candidate; lower score is better."""
    others = np.delete(dep.positions, n, axis=0)
    if others.shape[0] > 0:
        d_bs = np.min(
            np.linalg.norm(cands[:, None, :] - others[None, :, :], axis=2), axis=1
        )
        collide = d_bs <= 1e-9 * max(problem.diameter, 1.0)
    else:
        collide = np.zeros(cands.shape[0], dtype=bool)

    if objective == "area_rate":
        rate = _rate_candidates(cands, others, problem.users, problem.comm)
        score = -rate
        feasible = ~collide & np.isfinite(score)
        return score, feasible
    score = _acrlb_candidates(cands, others, problem.targets, problem.sensing)
    feasible = ~collide
    if objective == "a_crlb_with_rate_floor":
        rate = _rate_candidates(cands, others, problem.users, problem.comm)
        feasible &= rate >= problem.comm.r_th
    return score, feasible


def coordinate_global_search(
    problem: PlacementProblem,
    init: Deployment,
    grid: GridSpec,
    objective: str = "a_crlb",
    max_sweeps: int = 100,
) -> Deployment:
    """Cyclic per-station global grid search with coarse-to-fine refinement.

    Each station in turn moves to the best grid point (others fixed),
    refining the grid around the incumbent; the search stops after a full
    sweep without improvement. The objective never increases along the way.
    Ties break to the lowest candidate index.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"objective must be one of {OBJECTIVES}")
    if objective != "a_crlb" and (problem.users is None or problem.comm is None):
        raise ValueError(f"objective {objective!r} needs users and comm params")

    dep = init
    base_grid = grid.global_grid()
    for _ in range(max_sweeps):
        improved = False
        for n in range(dep.n_bs):
            cur = dep.positions[n]
            score_cur, feas_cur = _evaluate_move(problem, dep, n, cur[None, :], objective)
            if not feas_cur[0]:
                if objective == "a_crlb_with_rate_floor":
                    score_cur = np.array([np.inf])
                else:
                    raise ValueError("current position evaluates as infeasible")
            best_val = float(score_cur[0])
            best_b = cur
            cands = base_grid
            for level in range(grid.refinement_levels):
                score, feasible = _evaluate_move(problem, dep, n, cands, objective)
                score = np.where(feasible, score, np.inf)
                if level == 0 and objective == "a_crlb_with_rate_floor":
                    if not np.any(np.isfinite(score)) and not math.isfinite(best_val):
                        raise ValueError(
                            "rate floor is infeasible over the entire search grid"
                        )
                idx = int(np.argmin(score))
                if score[idx] < best_val:
                    best_val = float(score[idx])
                    best_b = np.array(cands[idx])
                cands = grid.local_grid(best_b, level + 1)
            if best_val < float(score_cur[0]) and np.any(best_b != cur):
                dep = dep.with_position(n, best_b)
                improved = True
        if not improved:
            break
    return dep


def scaling_experiment(
    base_region: Region,
    base_dep: Deployment,
    counts,
    params: SensingParams,
    factors: list[int],
    dim: int | None = None,
) -> list[dict]:
    """Replicate an optimized base layout and measure cooperation gains.

    For every factor F = Z^d two constructions are evaluated:

    - subdivide: the original region is split into F cells, each holding a
      1/Z-scaled copy of the base layout; the per-cell value (each cell
      served only by its own stations) scales the baseline by Z^(-2*beta)
      exactly, and full cooperation of all stations can only improve it.
    - enlarge: each active axis grows by Z and the base layout is tiled
      once per cell, so the per-cell value equals the baseline.

    Rows report both constructed (per-cell independent) and full-cooperation
    area values, the constructed/baseline ratio, and the exact scaling
    prediction F^(-2*beta/d).
    """
    d = dim if dim is not None else base_region.dim
    samples = sample_region(base_region, counts)
    baseline = area_crlb(samples, base_dep, params)
    anchor = base_region.anchor
    axes = base_region.active_axes
    rows = []
    for factor in factors:
        if factor < 1:
            raise ValueError("replication factors must be >= 1")
        z = round(factor ** (1.0 / d))
        if z**d != factor:
            raise ValueError(f"factor {factor} is not a perfect {d}-th power")

        framings = {}
        for framing, kappa in (("subdiv", 1.0 / z), ("enlarge", 1.0)):
            cell_ext = [e * kappa for e in base_region.extents]
            per_cell = []
            all_pos = []
            all_pts = []
            for idx in np.ndindex(*([z] * d)):
                offset = (1.0 - kappa) * anchor
                offset = np.array(offset)
                for a, i, ce in zip(axes, idx, cell_ext):
                    offset[a] += i * ce
                pos = kappa * base_dep.positions + offset
                pts = kappa * samples.points + offset
                cell_samples = SampleSet(pts, samples.weights)
                per_cell.append(area_crlb(cell_samples, Deployment(pos), params))
                all_pos.append(pos)
                all_pts.append(pts)
            union_dep = Deployment(np.vstack(all_pos))
            union_samples = SampleSet(
                np.vstack(all_pts), np.concatenate([samples.weights] * factor) / factor
            )
            framings[framing] = (
                float(np.mean(per_cell)),
                area_crlb(union_samples, union_dep, params),
            )

        rows.append(
            {
                "factor": factor,
                "n_bs_total": factor * base_dep.n_bs,
                "baseline_acrlb": baseline,
                "constructed_subdiv": framings["subdiv"][0],
                "fullcoop_subdiv": framings["subdiv"][1],
                "constructed_enlarged": framings["enlarge"][0],
                "fullcoop_enlarged": framings["enlarge"][1],
                "ratio_constructed_over_baseline": framings["subdiv"][0] / baseline,
                "scaling_prediction": float(factor) ** (-2.0 * params.beta / d),
            }
        )
    return rows


def line_layout(
    length: float, height: float, n_bs: int, lateral_frac: float = 0.25
) -> Deployment:
    """Station pattern over the segment [0, L]: midpoints in x, alternating
    lateral offsets +-lateral_frac*L, uniform height. The whole pattern
    scales exactly with (L, h) scaled together."""
    x = (np.arange(n_bs) + 0.5) * length / n_bs
    y = lateral_frac * length * np.where(np.arange(n_bs) % 2 == 0, 1.0, -1.0)
    z = np.full(n_bs, float(height))
    return Deployment(np.stack([x, y, z], axis=1))


def line_scenario_value(
    length: float,
    height: float,
    n_bs: int,
    params: SensingParams,
    n_samples: int = 64,
    lateral_frac: float = 0.25,
) -> float:
    """Area CRLB of the line pattern over the segment [0, L] on the x-axis."""
    region = Region(kind=RegionKind.SEGMENT1D, anchor=np.zeros(3), extents=(float(length),))
    samples = sample_region(region, n_samples)
    dep = line_layout(length, height, n_bs, lateral_frac)
    return area_crlb(samples, dep, params)


def height_sweep(
    lengths: list[float],
    heights: list[float],
    n_bs: int,
    params: SensingParams,
    n_samples: int = 64,
    lateral_frac: float = 0.25,
) -> list[dict]:
    """Best uniform station height per region length.

    Sweeps the given heights for every length and returns rows
    (length, best height, minimal area value). Ties break to the first
    height in the list.
    """
    if len(heights) == 0:
        raise ValueError("heights grid is empty")
    rows = []
    for length in lengths:
        vals = [
            line_scenario_value(length, h, n_bs, params, n_samples, lateral_frac)
            for h in heights
        ]
        idx = int(np.argmin(vals))
        rows.append(
            {
                "length_m": float(length),
                "best_height_m": float(heights[idx]),
                "min_acrlb": float(vals[idx]),
            }
        )
    return rows


def write_rows_csv(rows: list[dict], path) -> None:
    """Write experiment rows as CSV; the header is the first row's keys."""
    if not rows:
        raise ValueError("no rows to write")
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            cells = []
            for k in keys:
                v = row[k]
                cells.append(repr(float(v)) if isinstance(v, float) else str(v))
            fh.write(",".join(cells) + "\n")
