"""Scenario files: the JSON schema driving every CLI command.

A scenario bundles the sensing region and its sample counts, the user
region and counts, station count, channel constants and optimizer knobs.
Field names carry units. Defaults follow the reference evaluation setup:
m_t = m_r = 5, p_c = 0.01 W, rcs gain 10, 5 GHz carrier, 10 MHz bandwidth,
noise 1e-12 W, alpha = 4, beta = 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .comm import CommParams
from .geometry import Region, sample_region
from .optimizer import MmConfig, PlacementProblem
from .sensing import SensingParams

__all__ = ["ScenarioConfig", "ScenarioError", "load_scenario"]


class ScenarioError(ValueError):
    """Scenario file violates the schema; message carries the field path."""


def _req(doc: dict, key: str, where: str):
    if key not in doc:
        raise ScenarioError(f"{where}: missing required field '{key}'")
    return doc[key]


def _number(doc: dict, key: str, where: str, default=None, positive=False):
    if key not in doc:
        if default is None:
            raise ScenarioError(f"{where}: missing required field '{key}'")
        return default
    try:
        val = float(doc[key])
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}.{key}: expected a number, got {doc[key]!r}") from None
    if positive and val <= 0:
        raise ScenarioError(f"{where}.{key}: must be positive, got {val}")
    return val


def _counts(doc, key: str, where: str, dim: int):
    raw = doc.get(key, 16)
    if isinstance(raw, int):
        return (raw,) * dim
    if isinstance(raw, list) and all(isinstance(c, int) for c in raw):
        if len(raw) != dim:
            raise ScenarioError(f"{where}.{key}: need {dim} counts, got {len(raw)}")
        return tuple(raw)
    raise ScenarioError(f"{where}.{key}: expected an int or list of ints")


def _region(doc: dict, where: str) -> Region:
    if not isinstance(doc, dict):
        raise ScenarioError(f"{where}: expected an object")
    try:
        return Region.from_json_dict(doc)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _sensing_params(doc: dict, where: str) -> SensingParams:
    beta = _number(doc, "beta", where, default=2.0)
    try:
        if "kappa_s" in doc:
            return SensingParams(beta=beta, kappa_s=_number(doc, "kappa_s", where, positive=True))
        phys = doc.get("physical", {})
        if not isinstance(phys, dict):
            raise ScenarioError(f"{where}.physical: expected an object")
        return SensingParams.from_physical(
            beta=beta,
            bandwidth_hz=_number(phys, "bandwidth_hz", f"{where}.physical", default=10e6),
            m_r=int(_number(phys, "m_r", f"{where}.physical", default=5)),
            m_t=int(_number(phys, "m_t", f"{where}.physical", default=5)),
            sigma_s2_watts=_number(phys, "sigma_s2_watts", f"{where}.physical", default=1e-12),
            rcs_gain=_number(phys, "rcs_gain", f"{where}.physical", default=10.0),
            power_factor=_number(phys, "power_factor", f"{where}.physical", default=1.0),
        )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def _comm_params(doc: dict, where: str) -> CommParams:
    try:
        return CommParams(
            alpha=_number(doc, "alpha", where, default=4.0),
            m_t=int(_number(doc, "m_t", where, default=5)),
            p_c=_number(doc, "p_c_watts", where, default=0.01),
            sigma_c2=_number(doc, "sigma_c2_watts", where, default=1e-12),
            r_th=_number(doc, "r_th_bps_hz", where, default=0.0),
        )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    n_bs: int
    sensing_region: Region
    sensing_counts: tuple
    user_region: Region
    user_counts: tuple
    sensing: SensingParams
    comm: CommParams
    optimizer: MmConfig
    seed: int = 0
    deployment_bounds: np.ndarray | None = None
    coverage_thresholds: tuple = (0.01, 0.1, 1.0)
    mc_draws: int = 2000

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ScenarioConfig":
        if not isinstance(doc, dict):
            raise ScenarioError("scenario: top level must be an object")
        n_bs = _req(doc, "n_bs", "scenario")
        if not isinstance(n_bs, int) or n_bs < 1:
            raise ScenarioError(f"scenario.n_bs: expected a positive int, got {n_bs!r}")
        sensing_region = _region(_req(doc, "sensing_region", "scenario"), "scenario.sensing_region")
        user_region = _region(doc.get("user_region", _req(doc, "sensing_region", "scenario")),
                              "scenario.user_region")
        sensing_counts = _counts(doc, "sensing_samples", "scenario", sensing_region.dim)
        user_counts = _counts(doc, "user_samples", "scenario", user_region.dim)
        sensing = _sensing_params(doc.get("sensing", {}), "scenario.sensing")
        comm = _comm_params(doc.get("comm", {}), "scenario.comm")
        opt_doc = doc.get("optimizer", {})
        if not isinstance(opt_doc, dict):
            raise ScenarioError("scenario.optimizer: expected an object")
        try:
            optimizer = MmConfig(
                max_outer_sweeps=int(opt_doc.get("max_outer_sweeps", 40)),
                convergence_tol=float(opt_doc.get("convergence_tol", 1e-4)),
                subproblem_tol=float(opt_doc.get("subproblem_tol", 1e-8)),
                epsilon_init=opt_doc.get("epsilon_init_m"),
                min_epsilon=float(opt_doc.get("min_epsilon_m", 1e-3)),
                seed=int(doc.get("seed", 0)),
            )
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"scenario.optimizer: {exc}") from None
        bounds = None
        if "deployment_bounds" in doc:
            bdoc = doc["deployment_bounds"]
            try:
                bounds = np.array([bdoc["x"], bdoc["y"], bdoc["z"]], dtype=float)
            except (KeyError, TypeError, ValueError):
                raise ScenarioError(
                    "scenario.deployment_bounds: expected {x: [lo, hi], y: ..., z: ...}"
                ) from None
        thresholds = doc.get("coverage_thresholds_m2", [0.01, 0.1, 1.0])
        if not isinstance(thresholds, list) or any(
            not isinstance(g, (int, float)) or g <= 0 for g in thresholds
        ):
            raise ScenarioError("scenario.coverage_thresholds_m2: expected positive numbers")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int):
            raise ScenarioError(f"scenario.seed: expected an int, got {seed!r}")
        return cls(
            n_bs=n_bs,
            sensing_region=sensing_region,
            sensing_counts=sensing_counts,
            user_region=user_region,
            user_counts=user_counts,
            sensing=sensing,
            comm=comm,
            optimizer=optimizer,
            seed=seed,
            deployment_bounds=bounds,
            coverage_thresholds=tuple(float(g) for g in thresholds),
            mc_draws=int(doc.get("mc_draws", 2000)),
        )

    def problem(self) -> PlacementProblem:
        """Sample both regions and assemble the optimizer-facing problem."""
        targets = sample_region(self.sensing_region, self.sensing_counts)
        users = sample_region(self.user_region, self.user_counts)
        return PlacementProblem(
            targets=targets,
            sensing=self.sensing,
            users=users,
            comm=self.comm,
            bounds=self.deployment_bounds,
        )


def load_scenario(path) -> ScenarioConfig:
    """Parse and validate a scenario file (syntax errors are line-precise)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
    return ScenarioConfig.from_json_dict(doc)
