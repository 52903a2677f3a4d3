"""Geometric value types: points, deployments, service regions, sampling,
and the similarity transforms (scale / rotation / reflection / displacement)
that the placement analysis is built on.

All types are immutable; every operation is a pure function.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "RegionKind",
    "Region",
    "Deployment",
    "SampleSet",
    "SimilarityTransform",
    "vec3",
    "sample_region",
    "apply_transform",
    "replicate_deployment",
]

_ORTHO_TOL = 1e-12


def vec3(x: float, y: float = 0.0, z: float = 0.0) -> np.ndarray:
    """Build a finite 3-vector (meters)."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got {v}")
    return v


def _as_point(p) -> np.ndarray:
    v = np.asarray(p, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got {v}")
    return v


@dataclass(frozen=True)
class Deployment:
    """Ordered list of base-station positions (N x 3, meters).

    Invariants: N >= 1, all positions finite and pairwise distinct.
    """

    positions: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("deployment needs at least one base station")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        diffs = pos[:, None, :] - pos[None, :, :]
        dist = np.linalg.norm(diffs, axis=-1)
        np.fill_diagonal(dist, np.inf)
        if np.min(dist) == 0.0:
            raise ValueError("base-station positions must be pairwise distinct")
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def n_bs(self) -> int:
        return self.positions.shape[0]

    def with_position(self, index: int, p: np.ndarray) -> "Deployment":
        """Copy with base station `index` moved to `p`."""
        pos = np.array(self.positions)
        pos[index] = _as_point(p)
        return Deployment(pos)

    def to_json_dict(self) -> dict:
        return {"positions": [list(map(float, row)) for row in self.positions]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Deployment":
        if "positions" not in doc:
            raise ValueError("deployment document missing 'positions'")
        return cls(np.asarray(doc["positions"], dtype=float))


class RegionKind(enum.Enum):
    SEGMENT1D = "segment1d"
    RECT2D = "rect2d"
    BOX3D = "box3d"
    EXPLICIT = "explicit"


_ACTIVE_AXES = {
    RegionKind.SEGMENT1D: (0,),
    RegionKind.RECT2D: (0, 1),
    RegionKind.BOX3D: (0, 1, 2),
}


@dataclass(frozen=True)
class Region:
    """A d-dimensional axis-aligned area of interest (d in {1,2,3}).

    Parametric kinds are anchored at their minimum corner; inactive axes sit
    at the anchor coordinate (e.g. a rect2d at altitude z has anchor[2] = z).
    The `explicit` kind carries a literal point list as an escape hatch for
    shapes the parametric families cannot express.
    """

    kind: RegionKind
    anchor: np.ndarray = field(default_factory=lambda: np.zeros(3))
    extents: tuple = ()
    points: np.ndarray | None = None
    explicit_dim: int = 3

    def __post_init__(self):
        object.__setattr__(self, "anchor", _as_point(self.anchor))
        self.anchor.setflags(write=False)
        if self.kind is RegionKind.EXPLICIT:
            if self.points is None or len(self.points) == 0:
                raise ValueError("explicit region needs a nonempty point list")
            pts = np.asarray(self.points, dtype=float)
            if pts.ndim != 2 or pts.shape[1] != 3:
                raise ValueError(f"explicit points must be (K, 3), got {pts.shape}")
            if self.explicit_dim not in (1, 2, 3):
                raise ValueError("dim must be 1, 2 or 3")
            pts.setflags(write=False)
            object.__setattr__(self, "points", pts)
        else:
            ext = tuple(float(e) for e in self.extents)
            d = len(_ACTIVE_AXES[self.kind])
            if len(ext) != d:
                raise ValueError(f"{self.kind.value} needs {d} extents, got {len(ext)}")
            if any(e <= 0 or not math.isfinite(e) for e in ext):
                raise ValueError(f"extents must be strictly positive, got {ext}")
            object.__setattr__(self, "extents", ext)

    @property
    def dim(self) -> int:
        if self.kind is RegionKind.EXPLICIT:
            return self.explicit_dim
        return len(_ACTIVE_AXES[self.kind])

    @property
    def active_axes(self) -> tuple:
        if self.kind is RegionKind.EXPLICIT:
            return tuple(range(self.explicit_dim))
        return _ACTIVE_AXES[self.kind]

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """(low, high) corners of the region's 3-D bounding box."""
        if self.kind is RegionKind.EXPLICIT:
            return self.points.min(axis=0), self.points.max(axis=0)
        lo = np.array(self.anchor)
        hi = np.array(self.anchor)
        for a, e in zip(self.active_axes, self.extents):
            hi[a] += e
        return lo, hi

    @property
    def center(self) -> np.ndarray:
        lo, hi = self.bounding_box()
        return 0.5 * (lo + hi)

    @property
    def diameter(self) -> float:
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    def contains(self, p: np.ndarray, tol: float = 1e-9) -> bool:
        lo, hi = self.bounding_box()
        pad = tol * max(1.0, self.diameter)
        return bool(np.all(p >= lo - pad) and np.all(p <= hi + pad))

    def to_json_dict(self) -> dict:
        doc: dict = {"kind": self.kind.value}
        if self.kind is RegionKind.EXPLICIT:
            doc["points"] = [list(map(float, row)) for row in self.points]
            doc["dim"] = self.explicit_dim
        else:
            doc["anchor"] = list(map(float, self.anchor))
            doc["extents"] = list(self.extents)
        return doc

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Region":
        try:
            kind = RegionKind(doc["kind"])
        except (KeyError, ValueError):
            raise ValueError(
                f"region 'kind' must be one of {[k.value for k in RegionKind]}"
            ) from None
        if kind is RegionKind.EXPLICIT:
            return cls(kind=kind, points=np.asarray(doc.get("points", []), dtype=float),
                       explicit_dim=int(doc.get("dim", 3)))
        anchor = np.asarray(doc.get("anchor", [0.0, 0.0, 0.0]), dtype=float)
        if "altitude" in doc:
            anchor = anchor.copy()
            anchor[2] = float(doc["altitude"])
        return cls(kind=kind, anchor=anchor, extents=tuple(doc.get("extents", ())))


@dataclass(frozen=True)
class SampleSet:
    """Discrete sample of a region: points (K x 3) with weights summing to 1."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (K, 3), got {pts.shape}")
        if w.shape != (pts.shape[0],):
            raise ValueError("weights must match points in length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1, got {total}")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class SimilarityTransform:
    """Composition p -> scale * reflection @ rotation @ p + displacement.

    `rotation` is a proper rotation (det +1); `reflection` is either the
    identity or an improper orthogonal matrix (det -1). Pairwise distances
    scale exactly by `scale` under the map.
    """

    scale: float = 1.0
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    reflection: np.ndarray = field(default_factory=lambda: np.eye(3))
    displacement: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError(f"scale must be positive, got {self.scale}")
        rot = np.asarray(self.rotation, dtype=float)
        ref = np.asarray(self.reflection, dtype=float)
        for name, m, want_det in (("rotation", rot, 1.0), ("reflection", ref, None)):
            if m.shape != (3, 3):
                raise ValueError(f"{name} must be 3x3")
            if not np.allclose(m @ m.T, np.eye(3), atol=_ORTHO_TOL, rtol=0):
                raise ValueError(f"{name} must be orthogonal")
            det = float(np.linalg.det(m))
            if want_det is not None and abs(det - want_det) > 1e-9:
                raise ValueError(f"{name} must have det {want_det}, got {det}")
        det_ref = float(np.linalg.det(ref))
        if abs(det_ref - 1.0) > 1e-9 and abs(det_ref + 1.0) > 1e-9:
            raise ValueError(f"reflection must have det +-1, got {det_ref}")
        if abs(det_ref - 1.0) <= 1e-9 and not np.allclose(ref, np.eye(3), atol=1e-9):
            raise ValueError("a det +1 'reflection' must be the identity")
        rot.setflags(write=False)
        ref.setflags(write=False)
        disp = _as_point(self.displacement)
        disp.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "reflection", ref)
        object.__setattr__(self, "displacement", disp)

    @property
    def linear(self) -> np.ndarray:
        """The combined linear part scale * reflection @ rotation."""
        return self.scale * (self.reflection @ self.rotation)

    def apply_points(self, pts: np.ndarray) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return pts @ self.linear.T + self.displacement

    def inverse(self) -> "SimilarityTransform":
        q = (self.reflection @ self.rotation).T
        disp = -(q @ self.displacement) / self.scale
        if np.linalg.det(q) > 0:
            return SimilarityTransform(1.0 / self.scale, q, np.eye(3), disp)
        flip = np.diag([1.0, 1.0, -1.0])
        return SimilarityTransform(1.0 / self.scale, flip @ q, flip, disp)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls()

    @classmethod
    def displacement_only(cls, delta) -> "SimilarityTransform":
        return cls(displacement=_as_point(delta))

    @classmethod
    def scaling(cls, kappa: float) -> "SimilarityTransform":
        return cls(scale=kappa)

    @classmethod
    def rotation_about_z(cls, angle_rad: float) -> "SimilarityTransform":
        c, s = math.cos(angle_rad), math.sin(angle_rad)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(rotation=rot)

    @classmethod
    def reflection_across_plane(cls, normal) -> "SimilarityTransform":
        """Mirror across the plane through the origin with the given normal."""
        n = _as_point(normal)
        nn = np.linalg.norm(n)
        if nn == 0:
            raise ValueError("plane normal must be nonzero")
        n = n / nn
        return cls(reflection=np.eye(3) - 2.0 * np.outer(n, n))


def apply_transform(transform: SimilarityTransform, obj):
    """Map a Deployment or SampleSet through a similarity transform.

    Order is preserved; SampleSet weights are unchanged.
    """
    if isinstance(obj, Deployment):
        return Deployment(transform.apply_points(obj.positions))
    if isinstance(obj, SampleSet):
        return SampleSet(transform.apply_points(obj.points), obj.weights)
    raise TypeError(f"cannot transform object of type {type(obj).__name__}")


def _axis_coords(lo: float, extent: float, count: int) -> np.ndarray:
    if count == 1:
        return np.array([lo + 0.5 * extent])
    return np.linspace(lo, lo + extent, count)


def sample_region(
    region: Region,
    counts: int | Sequence[int] = 1,
    mode: str = "uniform",
    pdf: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SampleSet:
    """Discretize a region into sample points with weights.

    counts gives the grid size per active axis (a single int is broadcast).
    `uniform` mode weights every point 1/K; `pdf` mode weights points by a
    nonnegative density evaluated at each point, renormalized to sum to 1.
    Grids include the region boundary (a count of 1 yields the axis midpoint).
    Explicit regions use their stored point list and ignore counts.
    """
    if mode not in ("uniform", "pdf"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    if mode == "pdf" and pdf is None:
        raise ValueError("pdf mode requires a density function")

    if region.kind is RegionKind.EXPLICIT:
        pts = np.array(region.points)
    else:
        axes = region.active_axes
        if isinstance(counts, int):
            counts = (counts,) * len(axes)
        counts = tuple(int(c) for c in counts)
        if len(counts) != len(axes):
            raise ValueError(f"need {len(axes)} counts, got {len(counts)}")
        if any(c < 1 for c in counts):
            raise ValueError("counts must be >= 1 per active axis")
        coords = [
            _axis_coords(region.anchor[a], e, c)
            for a, e, c in zip(axes, region.extents, counts)
        ]
        mesh = np.meshgrid(*coords, indexing="ij")
        k = mesh[0].size
        pts = np.tile(region.anchor, (k, 1))
        for a, m in zip(axes, mesh):
            pts[:, a] = m.reshape(-1)

    k = pts.shape[0]
    if mode == "uniform":
        weights = np.full(k, 1.0 / k)
    else:
        values = np.asarray(pdf(pts), dtype=float).reshape(-1)
        if values.shape != (k,):
            values = np.array([float(pdf(p)) for p in pts])
        if np.any(values < 0):
            raise ValueError("density must be nonnegative over the region")
        total = values.sum()
        if total <= 0:
            raise ValueError("degenerate density: zero total mass over the region")
        weights = values / total
    return SampleSet(pts, weights)


def replicate_deployment(
    base: Deployment, base_region: Region, n_rep: int, dim: int | None = None
) -> tuple[Deployment, Region]:
    """Tile `n_rep` copies of a base layout over an enlarged region.

    Requires n_rep = Z^dim for integer Z. Each active axis of the region is
    extended by Z and the base positions are copied once per cell with the
    cell offset added; heights (inactive axes) are preserved. The cell at the
    origin comes first, so the original deployment is a prefix of the result.
    """
    if base_region.kind is RegionKind.EXPLICIT:
        raise ValueError("replication needs a parametric region")
    d = dim if dim is not None else base_region.dim
    if d != base_region.dim:
        raise ValueError(f"dim {d} does not match region dim {base_region.dim}")
    if n_rep < 1:
        raise ValueError("replication factor must be >= 1")
    z = round(n_rep ** (1.0 / d))
    if z**d != n_rep:
        raise ValueError(f"replication factor {n_rep} is not a perfect {d}-th power")

    axes = base_region.active_axes
    offsets_per_axis = [np.arange(z) * e for e in base_region.extents]
    blocks = []
    for idx in np.ndindex(*([z] * d)):
        shift = np.zeros(3)
        for a, i, off in zip(axes, idx, offsets_per_axis):
            shift[a] = off[i]
        blocks.append(base.positions + shift)
    enlarged = Region(
        kind=base_region.kind,
        anchor=base_region.anchor,
        extents=tuple(e * z for e in base_region.extents),
    )
    return Deployment(np.vstack(blocks)), enlarged
