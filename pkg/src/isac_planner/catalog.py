"""Reusable store of solved sensing deployments.

A solved (region, deployment) pair answers any congruent-up-to-similarity
query region: matching is by parametric family, normalized extent ratios,
station count and pathloss exponent, and the stored layout is mapped onto
the query region by the scale/rotation/reflection/displacement that maps
the stored region onto it. The returned layout's area value is exactly
scale^(2*beta) times the stored objective, which is why entries are keyed
by beta and serve sensing-only solutions (rates are not similarity
invariant while powers stay fixed).
"""

from __future__ import annotations

import dataclasses
import datetime
import itertools
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .geometry import (
    Deployment,
    Region,
    RegionKind,
    SimilarityTransform,
    apply_transform,
)

__all__ = ["RegionDescriptor", "CatalogEntry", "Catalog"]

_RATIO_TOL = 0.01  # extent-ratio match tolerance (1%)


@dataclass(frozen=True)
class RegionDescriptor:
    """Scale-free shape key: family, descending extent ratios (max = 1), dim."""

    family: str
    ratios: tuple
    dim: int

    @classmethod
    def from_region(cls, region: Region) -> "RegionDescriptor":
        if region.kind is RegionKind.EXPLICIT:
            raise ValueError("explicit regions are not cataloguable")
        ext = sorted(region.extents, reverse=True)
        top = ext[0]
        return cls(
            family=region.kind.value,
            ratios=tuple(e / top for e in ext),
            dim=region.dim,
        )

    def matches(self, other: "RegionDescriptor") -> bool:
        if self.family != other.family or self.dim != other.dim:
            return False
        return all(
            abs(a - b) <= _RATIO_TOL * max(a, b)
            for a, b in zip(self.ratios, other.ratios)
        )


@dataclass(frozen=True)
class CatalogEntry:
    descriptor: RegionDescriptor
    region: Region
    deployment: Deployment
    objective: float
    beta: float
    optimizer_id: str
    sample_counts: tuple
    created: str = ""
    entry_id: int = -1

    def __post_init__(self):
        if not math.isfinite(self.objective):
            raise ValueError("catalog entries need a finite objective")
        if not self.created:
            stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
            object.__setattr__(self, "created", stamp)

    def to_json_dict(self) -> dict:
        return {
            "id": self.entry_id,
            "family": self.descriptor.family,
            "ratios": list(self.descriptor.ratios),
            "dim": self.descriptor.dim,
            "region": self.region.to_json_dict(),
            "deployment": self.deployment.to_json_dict(),
            "objective": self.objective,
            "beta": self.beta,
            "optimizer_id": self.optimizer_id,
            "sample_counts": list(self.sample_counts),
            "created": self.created,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CatalogEntry":
        return cls(
            descriptor=RegionDescriptor(
                doc["family"], tuple(doc["ratios"]), int(doc["dim"])
            ),
            region=Region.from_json_dict(doc["region"]),
            deployment=Deployment.from_json_dict(doc["deployment"]),
            objective=float(doc["objective"]),
            beta=float(doc["beta"]),
            optimizer_id=str(doc.get("optimizer_id", "")),
            sample_counts=tuple(doc.get("sample_counts", ())),
            created=str(doc.get("created", "")),
            entry_id=int(doc.get("id", -1)),
        )


def _axis_permutations(stored: Region, query: Region):
    """Yield (permutation, scale) mapping stored active axes onto the query's.

    perm[i] = j means stored axis axes[j] lands on query axis axes[i]; the
    single scale must reproduce every query extent from the stored ones.
    """
    axes = stored.active_axes
    es, eq = stored.extents, query.extents
    for perm in itertools.permutations(range(len(axes))):
        kappa = eq[0] / es[perm[0]]
        if all(
            abs(es[perm[i]] * kappa - eq[i]) <= _RATIO_TOL * eq[i]
            for i in range(len(axes))
        ):
            yield perm, kappa


def _permutation_transform(stored: Region, query: Region, perm, kappa) -> SimilarityTransform:
    """Axis permutation realized as rotation (plus a reflection if improper)."""
    axes = stored.active_axes
    mat = np.eye(3)
    for i in range(len(axes)):
        src, dst = axes[perm[i]], axes[i]
        if src != dst:
            mat[src, src] = 0.0
            mat[dst, dst] = 0.0
    for i in range(len(axes)):
        src, dst = axes[perm[i]], axes[i]
        mat[dst, src] = 1.0
    if np.linalg.det(mat) > 0:
        rotation, reflection = mat, np.eye(3)
    else:
        reflection = np.diag([1.0, 1.0, -1.0])
        rotation = reflection @ mat
    linear = kappa * mat
    disp = query.anchor - linear @ stored.anchor
    return SimilarityTransform(
        scale=kappa, rotation=rotation, reflection=reflection, displacement=disp
    )


class Catalog:
    """JSON-file backed entry store; single writer, any number of readers."""

    def __init__(self, path):
        self.path = str(path)
        self.entries: list[CatalogEntry] = []
        if os.path.exists(self.path):
            self._load()

    def _load(self) -> None:
        with open(self.path) as fh:
            doc = json.load(fh)
        self.entries = [CatalogEntry.from_json_dict(e) for e in doc.get("entries", [])]

    def _save(self) -> None:
        doc = {"entries": [e.to_json_dict() for e in self.entries]}
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, self.path)

    def _same_key(self, a: CatalogEntry, b: CatalogEntry) -> bool:
        return (
            a.descriptor.matches(b.descriptor)
            and a.deployment.n_bs == b.deployment.n_bs
            and abs(a.beta - b.beta) <= 1e-12
        )

    def add(self, entry: CatalogEntry) -> int:
        """Insert or, when a matching key already exists, keep the better
        (lower-objective) of the two. Returns the persisted entry id."""
        for i, existing in enumerate(self.entries):
            if self._same_key(existing, entry):
                if entry.objective < existing.objective:
                    entry = dataclasses.replace(entry, entry_id=existing.entry_id)
                    self.entries[i] = entry
                    self._save()
                    return entry.entry_id
                return existing.entry_id
        next_id = 1 + max((e.entry_id for e in self.entries), default=0)
        entry = dataclasses.replace(entry, entry_id=next_id)
        self.entries.append(entry)
        self._save()
        return next_id

    def get(self, entry_id: int) -> CatalogEntry | None:
        for e in self.entries:
            if e.entry_id == entry_id:
                return e
        return None

    def query(
        self, region: Region, n_bs: int, beta: float
    ) -> tuple[Deployment, SimilarityTransform, CatalogEntry] | None:
        """Answer a region by transforming a stored solution onto it.

        A hit needs the same family and dim, extent ratios within 1%, the
        same station count and the same beta; the best (lowest predicted
        objective) hit wins. Returns None on a miss.
        """
        if region.kind is RegionKind.EXPLICIT:
            return None
        descriptor = RegionDescriptor.from_region(region)
        best = None
        for entry in self.entries:
            if entry.deployment.n_bs != n_bs or abs(entry.beta - beta) > 1e-12:
                continue
            if not entry.descriptor.matches(descriptor):
                continue
            for perm, kappa in _axis_permutations(entry.region, region):
                transform = _permutation_transform(entry.region, region, perm, kappa)
                predicted = entry.objective * kappa ** (2.0 * beta)
                if best is None or predicted < best[0]:
                    best = (predicted, entry, transform)
                break  # first geometric match per entry is enough
        if best is None:
            return None
        _, entry, transform = best
        return apply_transform(transform, entry.deployment), transform, entry
