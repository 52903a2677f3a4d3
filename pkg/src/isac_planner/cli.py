"""Scenario-driven command line front end.

    isac-planner evaluate   --scenario s.json --deployment d.json [--out m.json]
    isac-planner optimize   --scenario s.json --method mm|grid --out DIR [--init d.json]
    isac-planner map        --scenario s.json --deployment d.json --out field.csv
    isac-planner scaling    --scenario s.json --out table.csv [--factors 1,4,16 | --experiment height]
    isac-planner invariance --scenario s.json [--trials 100] [--out report.json]
    isac-planner catalog    add|query --catalog c.json --scenario s.json [...]

Exit codes: 0 ok, 1 input error, 2 non-convergence (or a failed check /
unmet rate floor). Outputs are deterministic for a fixed scenario seed, and
nothing is written until the inputs have validated.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .baseline import (
    GridSpec,
    coordinate_global_search,
    height_sweep,
    scaling_experiment,
    write_rows_csv,
)
from .catalog import Catalog, CatalogEntry, RegionDescriptor
from .comm import area_rate
from .geometry import (
    Deployment,
    SimilarityTransform,
    apply_transform,
    sample_region,
)
from .optimizer import initialize_deployment, mm_optimize
from .scenario import ScenarioError, load_scenario
from .sensing import area_crlb, coverage_probability, crlb_field, field_to_csv

OK, INPUT_ERROR, NON_CONVERGENCE = 0, 1, 2


def _jsonable(obj):
    """JSON-safe copy: non-finite floats become 'inf'/'-inf'/'nan' strings."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isfinite(f):
            return f
        return "inf" if f > 0 else ("-inf" if f < 0 else "nan")
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _write_json(doc: dict, path: str | None) -> None:
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load_deployment(path: str) -> Deployment:
    try:
        with open(path) as fh:
            doc = json.load(fh)
        return Deployment.from_json_dict(doc)
    except FileNotFoundError:
        raise ScenarioError(f"deployment file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}"
        ) from None
    except ValueError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def cmd_evaluate(args) -> int:
    cfg = load_scenario(args.scenario)
    dep = _load_deployment(args.deployment)
    problem = cfg.problem()
    acrlb = area_crlb(problem.targets, dep, cfg.sensing)
    rate = area_rate(problem.users, dep, cfg.comm)
    rate_mc, ci = _area_rate_mc(problem, dep, cfg)
    field = crlb_field(problem.targets, dep, cfg.sensing)
    coverage = {
        repr(g): coverage_probability(field, g) for g in cfg.coverage_thresholds
    }
    _write_json(
        {
            "n_bs": dep.n_bs,
            "a_crlb_m2": acrlb,
            "area_rate_surrogate_bps_hz": rate,
            "area_rate_mc_bps_hz": {"mean": rate_mc, "ci95": ci},
            "coverage": coverage,
            "rate_floor_bps_hz": cfg.comm.r_th,
            "rate_floor_met_surrogate": bool(rate >= cfg.comm.r_th),
        },
        args.out,
    )
    return OK


def _area_rate_mc(problem, dep, cfg):
    from .comm import rate_point_mc

    seeds = np.random.SeedSequence(cfg.seed).spawn(len(problem.users))
    total, var = 0.0, 0.0
    for w, point, s in zip(problem.users.weights, problem.users.points, seeds):
        if w == 0:
            continue
        mean, ci = rate_point_mc(point, dep, cfg.comm, n_draws=cfg.mc_draws, seed=s)
        total += w * mean
        var += (w * ci) ** 2
    return total, math.sqrt(var)


def _default_grid(problem, resolution=None, levels=3) -> GridSpec:
    bounds = problem.default_bounds()
    if resolution is None:
        resolution = (bounds[:, 1] - bounds[:, 0]) / 12.0
    else:
        resolution = np.asarray([float(r) for r in resolution])
        if resolution.size == 1:
            resolution = np.repeat(resolution, 3)
    return GridSpec(bounds=bounds, resolution=resolution, refinement_levels=levels)


def cmd_optimize(args) -> int:
    cfg = load_scenario(args.scenario)
    problem = cfg.problem()
    init = (
        _load_deployment(args.init)
        if args.init and args.init != "auto"
        else initialize_deployment(problem, cfg.n_bs, seed=cfg.seed)
    )
    os.makedirs(args.out, exist_ok=True)
    dep_path = os.path.join(args.out, "deployment.json")
    summary_path = os.path.join(args.out, "metrics.json")

    if args.method == "grid":
        objective = "a_crlb_with_rate_floor" if cfg.comm.r_th > 0 else "a_crlb"
        grid = _default_grid(problem, args.grid_resolution)
        dep = coordinate_global_search(problem, init, grid, objective=objective)
        final_obj = area_crlb(problem.targets, dep, cfg.sensing)
        final_rate = area_rate(problem.users, dep, cfg.comm)
        status, code = "converged", OK
    else:
        result = mm_optimize(problem, init, cfg.optimizer)
        result.write_log_csv(os.path.join(args.out, "iterations.csv"))
        dep = result.deployment
        final_obj, final_rate = result.objective, result.rate
        status = result.status
        code = OK if result.converged else NON_CONVERGENCE
        if status == "rate-infeasible":
            print(
                f"rate floor {cfg.comm.r_th} bps/Hz unreachable; "
                f"best achievable surrogate area rate: {final_rate}",
                file=sys.stderr,
            )

    _write_json(dep.to_json_dict(), dep_path)
    _write_json(
        {
            "method": args.method,
            "status": status,
            "a_crlb_m2": final_obj,
            "area_rate_surrogate_bps_hz": final_rate,
            "rate_floor_bps_hz": cfg.comm.r_th,
        },
        summary_path,
    )
    return code


def cmd_map(args) -> int:
    cfg = load_scenario(args.scenario)
    dep = _load_deployment(args.deployment)
    counts = (
        tuple(int(c) for c in args.counts.split(","))
        if args.counts
        else cfg.sensing_counts
    )
    samples = sample_region(cfg.sensing_region, counts)
    field = crlb_field(samples, dep, cfg.sensing)
    field_to_csv(field, args.out)
    return OK


def cmd_scaling(args) -> int:
    cfg = load_scenario(args.scenario)
    problem = cfg.problem()
    if args.experiment == "height":
        lengths = [float(v) for v in args.lengths.split(",")]
        heights = [float(v) for v in args.heights.split(",")]
        rows = height_sweep(lengths, heights, cfg.n_bs, cfg.sensing,
                            n_samples=cfg.sensing_counts[0])
        write_rows_csv(rows, args.out)
        return OK
    factors = [int(v) for v in args.factors.split(",")]
    if args.deployment:
        base = _load_deployment(args.deployment)
    else:
        init = initialize_deployment(problem, cfg.n_bs, seed=cfg.seed)
        base = coordinate_global_search(problem, init, _default_grid(problem))
    rows = scaling_experiment(
        cfg.sensing_region, base, cfg.sensing_counts, cfg.sensing, factors
    )
    write_rows_csv(rows, args.out)
    return OK


def _random_orthogonal(rng) -> np.ndarray:
    mat = rng.standard_normal((3, 3))
    q, r = np.linalg.qr(mat)
    q = q * np.sign(np.diag(r))
    return q


def cmd_invariance(args) -> int:
    cfg = load_scenario(args.scenario)
    problem = cfg.problem()
    bounds = problem.default_bounds()
    rng = np.random.default_rng(cfg.seed)
    span = bounds[:, 1] - bounds[:, 0]
    diam = problem.diameter

    checks = {"displacement": 0.0, "rotation": 0.0, "reflection": 0.0, "scaling": 0.0}
    for _ in range(args.trials):
        pos = bounds[:, 0] + rng.random((cfg.n_bs, 3)) * span
        dep = Deployment(pos)
        base = area_crlb(problem.targets, dep, cfg.sensing)
        if not math.isfinite(base):
            continue
        q = _random_orthogonal(rng)
        if np.linalg.det(q) < 0:
            rotation = np.diag([1.0, 1.0, -1.0]) @ q
        else:
            rotation = q
        transforms = {
            "displacement": SimilarityTransform(
                displacement=(rng.random(3) - 0.5) * 4 * diam
            ),
            "rotation": SimilarityTransform(rotation=rotation),
            "reflection": SimilarityTransform.reflection_across_plane(_unit(rng)),
            "scaling": SimilarityTransform(scale=float(rng.uniform(0.5, 3.0))),
        }
        for name, transform in transforms.items():
            moved = area_crlb(
                apply_transform(transform, problem.targets),
                apply_transform(transform, dep),
                cfg.sensing,
            )
            expected = base * transform.scale ** (2 * cfg.sensing.beta)
            dev = abs(moved - expected) / abs(expected)
            checks[name] = max(checks[name], dev)

    report = {
        name: {"max_rel_deviation": dev, "pass": bool(dev < 1e-9)}
        for name, dev in checks.items()
    }
    _write_json({"trials": args.trials, "checks": report}, args.out)
    return OK if all(v["pass"] for v in report.values()) else NON_CONVERGENCE


def _unit(rng) -> np.ndarray:
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def cmd_catalog(args) -> int:
    cfg = load_scenario(args.scenario)
    catalog = Catalog(args.catalog)
    if args.catalog_action == "add":
        dep = _load_deployment(args.deployment)
        samples = sample_region(cfg.sensing_region, cfg.sensing_counts)
        objective = area_crlb(samples, dep, cfg.sensing)
        if not math.isfinite(objective):
            raise ScenarioError("deployment is non-localizable over the scenario region")
        entry = CatalogEntry(
            descriptor=RegionDescriptor.from_region(cfg.sensing_region),
            region=cfg.sensing_region,
            deployment=dep,
            objective=objective,
            beta=cfg.sensing.beta,
            optimizer_id=args.optimizer_id,
            sample_counts=cfg.sensing_counts,
        )
        entry_id = catalog.add(entry)
        _write_json({"id": entry_id, "objective_m2": objective}, args.out)
        return OK
    hit = catalog.query(cfg.sensing_region, cfg.n_bs, cfg.sensing.beta)
    if hit is None:
        _write_json({"hit": False}, args.out)
        return OK
    dep, transform, entry = hit
    _write_json(
        {
            "hit": True,
            "entry_id": entry.entry_id,
            "deployment": dep.to_json_dict(),
            "transform": {
                "scale": transform.scale,
                "rotation": transform.rotation,
                "reflection": transform.reflection,
                "displacement": transform.displacement,
            },
            "stored_objective_m2": entry.objective,
            "predicted_objective_m2": entry.objective
            * transform.scale ** (2 * cfg.sensing.beta),
        },
        args.out,
    )
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="isac-planner",
        description="Deployment planning: CRLB coverage, cooperative rate, placement optimization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="metrics of a deployment over a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--deployment", required=True)
    p.add_argument("--out", default=None, help="metrics JSON (default stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("optimize", help="optimize station positions")
    p.add_argument("--scenario", required=True)
    p.add_argument("--method", choices=("mm", "grid"), default="mm")
    p.add_argument("--init", default="auto", help="deployment JSON or 'auto'")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--grid-resolution", default=None, nargs="*",
                   help="per-axis grid spacing in meters (grid method)")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("map", help="CRLB field as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--deployment", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--counts", default=None, help="grid counts, e.g. 40,40")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("scaling", help="replication scaling or height sweep tables")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--experiment", choices=("replication", "height"), default="replication")
    p.add_argument("--factors", default="1,4,16")
    p.add_argument("--deployment", default=None, help="base deployment (default: grid search)")
    p.add_argument("--lengths", default="250,500")
    p.add_argument("--heights", default=",".join(str(10 * k) for k in range(1, 41)))
    p.set_defaults(func=cmd_scaling)

    p = sub.add_parser("invariance", help="randomized similarity-invariance checks")
    p.add_argument("--scenario", required=True)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_invariance)

    p = sub.add_parser("catalog", help="manage the solved-deployment catalog")
    csub = p.add_subparsers(dest="catalog_action", required=True)
    pa = csub.add_parser("add")
    pa.add_argument("--catalog", required=True)
    pa.add_argument("--scenario", required=True)
    pa.add_argument("--deployment", required=True)
    pa.add_argument("--optimizer-id", default="cli")
    pa.add_argument("--out", default=None)
    pa.set_defaults(func=cmd_catalog)
    pq = csub.add_parser("query")
    pq.add_argument("--catalog", required=True)
    pq.add_argument("--scenario", required=True)
    pq.add_argument("--out", default=None)
    pq.set_defaults(func=cmd_catalog)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
