"""Network and airspace geometry: scene configuration, voxel grid, assignments.

Coordinates are a local ENU frame in meters (x east, y north, z up) with an
origin declared by whoever produced the scene file; geodetic conversion
happens at ingestion, never here.
"""

from __future__ import annotations

import importlib.resources
import json
import math
import os
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .antenna import AntennaPattern, Orientation, TablePattern, load_pattern_table
from .errors import (
    BoundsError,
    EmptyGridError,
    IncompleteAssignmentError,
    SceneSchemaError,
    SceneValidationError,
    UnknownCellError,
)

DEFAULT_CANDIDATE_STEP = (5.0, 3.0)  # az, tilt degrees

_ANGLE_TOL = 1e-6


# ---------------------------------------------------------------------------
# Airspace and voxel grid
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class CylinderSpec:
    """Cylindrical airspace: horizontal center, radius, altitude band, voxel edge."""

    center_m: tuple[float, float]
    radius_m: float
    z_min_m: float
    z_max_m: float
    voxel_m: float

    def __post_init__(self):
        object.__setattr__(self, "center_m", (float(self.center_m[0]), float(self.center_m[1])))
        if self.radius_m <= 0:
            raise SceneValidationError(f"airspace.radius_m must be > 0, got {self.radius_m}")
        if self.z_max_m <= self.z_min_m:
            raise SceneValidationError(
                f"airspace.z_max_m ({self.z_max_m}) must exceed z_min_m ({self.z_min_m})"
            )
        if self.voxel_m <= 0:
            raise SceneValidationError(f"airspace.voxel_m must be > 0, got {self.voxel_m}")

    def contains(self, points) -> np.ndarray:
        """Membership test for point(s); boundary (distance == radius) included."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        dx = p[:, 0] - self.center_m[0]
        dy = p[:, 1] - self.center_m[1]
        inside = (dx * dx + dy * dy <= self.radius_m * self.radius_m)
        inside &= (p[:, 2] >= self.z_min_m) & (p[:, 2] <= self.z_max_m)
        return inside if np.asarray(points).ndim == 2 else bool(inside[0])


@dataclass(frozen=True)
class VoxelGrid:
    """Dense-indexed voxel centers inside a cylinder, z-major/y/x iteration order."""

    spec: CylinderSpec
    centers: np.ndarray          # (count, 3) float64
    lattice_shape: tuple[int, int, int]   # (nz, ny, nx)
    lattice_rank: np.ndarray     # (nz, ny, nx) int32; -1 where excluded
    origin: tuple[float, float, float]    # bounding-box minimum corner

    @property
    def count(self) -> int:
        return self.centers.shape[0]

    def layer_z_values(self) -> np.ndarray:
        """Sorted distinct voxel-center altitudes."""
        return np.unique(self.centers[:, 2])

    def layer_indices(self, z_m: float) -> np.ndarray:
        """Dense indices of the voxel layer whose slab contains altitude z_m."""
        half = self.spec.voxel_m / 2.0
        zs = self.layer_z_values()
        hits = np.nonzero(np.abs(zs - z_m) <= half)[0]
        if hits.size == 0:
            from .errors import LayerError

            raise LayerError(
                f"altitude {z_m} m is outside the grid layers "
                f"[{zs[0] - half}, {zs[-1] + half}] m"
            )
        layer_z = zs[hits[0]]
        return np.nonzero(self.centers[:, 2] == layer_z)[0]


def build_voxel_grid(spec: CylinderSpec) -> VoxelGrid:
    """Discretize the cylinder into voxel centers on a regular lattice.

    Centers sit at (i + 0.5) * voxel_m offsets from the bounding-box minimum
    corner; a center is kept iff it lies inside the cylinder (boundary
    included). Ordering is deterministic: z-major, then y, then x.
    """
    v = spec.voxel_m
    cx, cy = spec.center_m
    x0, y0, z0 = cx - spec.radius_m, cy - spec.radius_m, spec.z_min_m
    nx = max(int(math.ceil(2.0 * spec.radius_m / v)), 1)
    ny = nx
    nz = max(int(math.ceil((spec.z_max_m - spec.z_min_m) / v)), 1)

    xs = x0 + (np.arange(nx) + 0.5) * v
    ys = y0 + (np.arange(ny) + 0.5) * v
    zs = z0 + (np.arange(nz) + 0.5) * v

    dx = xs - cx
    dy = ys - cy
    in_circle = (dy[:, None] ** 2 + dx[None, :] ** 2) <= spec.radius_m ** 2  # (ny, nx)
    in_band = zs <= spec.z_max_m                                             # (nz,)
    mask = in_band[:, None, None] & in_circle[None, :, :]

    count = int(mask.sum())
    if count == 0:
        raise EmptyGridError("voxelization produced zero voxels for this airspace spec")

    iz, iy, ix = np.nonzero(mask)  # C order: z-major, then y, then x
    centers = np.empty((count, 3), dtype=np.float64)
    centers[:, 0] = xs[ix]
    centers[:, 1] = ys[iy]
    centers[:, 2] = zs[iz]

    rank = np.full((nz, ny, nx), -1, dtype=np.int32)
    rank[iz, iy, ix] = np.arange(count, dtype=np.int32)
    return VoxelGrid(spec=spec, centers=centers, lattice_shape=(nz, ny, nx),
                     lattice_rank=rank, origin=(x0, y0, z0))


def voxel_center(grid: VoxelGrid, index: int) -> np.ndarray:
    """Center coordinates of the voxel at a dense index."""
    if not 0 <= index < grid.count:
        raise IndexError(f"voxel index {index} out of range [0, {grid.count})")
    return grid.centers[index].copy()


def nearest_voxel_index(grid: VoxelGrid, point) -> int:
    """Dense index of the lattice voxel containing (or nearest to) a point.

    Raises IndexError if the point falls in a lattice cell outside the cylinder.
    """
    p = np.asarray(point, dtype=float)
    nz, ny, nx = grid.lattice_shape
    v = grid.spec.voxel_m
    ix = int(np.clip(math.floor((p[0] - grid.origin[0]) / v), 0, nx - 1))
    iy = int(np.clip(math.floor((p[1] - grid.origin[1]) / v), 0, ny - 1))
    iz = int(np.clip(math.floor((p[2] - grid.origin[2]) / v), 0, nz - 1))
    rank = int(grid.lattice_rank[iz, iy, ix])
    if rank < 0:
        raise IndexError(f"point {tuple(p)} falls outside the voxelized cylinder")
    return rank


# ---------------------------------------------------------------------------
# Radio constants and coverage thresholds
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RadioConstants:
    frequency_hz: float
    bandwidth_hz: float
    noise_figure_db: float

    def __post_init__(self):
        if self.frequency_hz <= 0:
            raise SceneValidationError(f"radio.frequency_hz must be > 0, got {self.frequency_hz}")
        if self.bandwidth_hz <= 0:
            raise SceneValidationError(f"radio.bandwidth_hz must be > 0, got {self.bandwidth_hz}")
        if self.noise_figure_db < 0:
            raise SceneValidationError(
                f"radio.noise_figure_db must be >= 0, got {self.noise_figure_db}"
            )


@dataclass(frozen=True)
class CoverageThresholds:
    """Basic/strict service thresholds; a voxel is 'covered' only jointly."""

    rsrp_basic_dbm: float = -95.0
    rsrp_strict_dbm: float = -85.0
    sinr_basic_db: float = -3.0
    sinr_strict_db: float = 5.0

    def __post_init__(self):
        if self.rsrp_strict_dbm < self.rsrp_basic_dbm:
            raise SceneValidationError("thresholds: rsrp_strict_dbm must be >= rsrp_basic_dbm")
        if self.sinr_strict_db < self.sinr_basic_db:
            raise SceneValidationError("thresholds: sinr_strict_db must be >= sinr_basic_db")


# ---------------------------------------------------------------------------
# Sites, cells, sub-beams
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SteeringBounds:
    az_min_deg: float
    az_max_deg: float
    tilt_min_deg: float
    tilt_max_deg: float

    def __post_init__(self):
        if self.az_max_deg < self.az_min_deg:
            raise SceneValidationError("bounds: az_max_deg < az_min_deg")
        if self.tilt_max_deg < self.tilt_min_deg:
            raise SceneValidationError("bounds: tilt_max_deg < tilt_min_deg")

    def contains(self, orientation: Orientation, tol: float = _ANGLE_TOL) -> bool:
        if not (self.tilt_min_deg - tol <= orientation.tilt_deg <= self.tilt_max_deg + tol):
            return False
        return _azimuth_in_range(orientation.azimuth_deg,
                                 self.az_min_deg, self.az_max_deg, tol)


def _azimuth_in_range(az_deg: float, lo: float, hi: float, tol: float = _ANGLE_TOL) -> bool:
    # Bounds are plain numbers on the real line; membership is modulo 360.
    span = hi - lo
    if span >= 360.0 - tol:
        return True
    t = (az_deg - lo) % 360.0
    return t <= span + tol or t >= 360.0 - tol


@dataclass(frozen=True)
class SubBeam:
    """One independently steerable beam of a cell."""

    index: int
    pattern: AntennaPattern | TablePattern
    bounds: SteeringBounds
    baseline: Orientation
    candidate_step: tuple[float, float] = DEFAULT_CANDIDATE_STEP

    def __post_init__(self):
        step_az, step_tilt = self.candidate_step
        if step_az <= 0 or step_tilt <= 0:
            raise SceneValidationError(
                f"sub_beam {self.index}: candidate_step entries must be > 0"
            )
        if not self.bounds.contains(self.baseline):
            raise SceneValidationError(
                f"sub_beam {self.index}: baseline angle "
                f"({self.baseline.azimuth_deg}, {self.baseline.tilt_deg}) "
                "lies outside its steering bounds"
            )

    def lattice(self) -> list[Orientation]:
        """Candidate steering angles: az-major, then tilt, both ascending."""
        step_az, step_tilt = self.candidate_step
        n_az = int(math.floor((self.bounds.az_max_deg - self.bounds.az_min_deg) / step_az + _ANGLE_TOL)) + 1
        n_tilt = int(math.floor((self.bounds.tilt_max_deg - self.bounds.tilt_min_deg) / step_tilt + _ANGLE_TOL)) + 1
        out = []
        for i in range(n_az):
            az = self.bounds.az_min_deg + i * step_az
            for j in range(n_tilt):
                out.append(Orientation(az, self.bounds.tilt_min_deg + j * step_tilt))
        return out

    def admits(self, orientation: Orientation, tol: float = _ANGLE_TOL) -> bool:
        """True iff the angle is on the candidate lattice or equals the baseline."""
        if (abs(orientation.azimuth_deg - self.baseline.azimuth_deg) <= tol
                and abs(orientation.tilt_deg - self.baseline.tilt_deg) <= tol):
            return True
        if not self.bounds.contains(orientation, tol):
            return False
        step_az, step_tilt = self.candidate_step
        t_az = (orientation.azimuth_deg - self.bounds.az_min_deg) % 360.0
        k_az = t_az / step_az
        k_tilt = (orientation.tilt_deg - self.bounds.tilt_min_deg) / step_tilt
        return (abs(k_az - round(k_az)) * step_az <= tol
                and abs(k_tilt - round(k_tilt)) * step_tilt <= tol)


@dataclass(frozen=True)
class Cell:
    id: str
    tx_power_dbm: float
    sub_beams: tuple[SubBeam, ...]

    def __post_init__(self):
        object.__setattr__(self, "sub_beams", tuple(self.sub_beams))
        if not np.isfinite(self.tx_power_dbm):
            raise SceneValidationError(f"cell {self.id}: tx_power_dbm must be finite")
        if not self.sub_beams:
            raise SceneValidationError(f"cell {self.id}: sub_beams must be nonempty")
        indices = sorted(sb.index for sb in self.sub_beams)
        if indices != list(range(len(self.sub_beams))):
            raise SceneValidationError(
                f"cell {self.id}: sub-beam indices must be exactly 0..{len(self.sub_beams) - 1}"
            )

    @property
    def baseline_assignment(self) -> dict[int, Orientation]:
        return {sb.index: sb.baseline for sb in self.sub_beams}


@dataclass(frozen=True)
class Site:
    id: str
    position_m: tuple[float, float, float]
    cells: tuple[Cell, ...]

    def __post_init__(self):
        object.__setattr__(self, "position_m", tuple(float(c) for c in self.position_m))
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.position_m[2] < 0:
            raise SceneValidationError(f"site {self.id}: position z must be >= 0")
        if not self.cells:
            raise SceneValidationError(f"site {self.id}: cells must be nonempty")


@dataclass(frozen=True)
class SceneConfig:
    """The physical network description every other module consumes."""

    sites: tuple[Site, ...]
    airspace: CylinderSpec
    radio: RadioConstants
    thresholds: CoverageThresholds = field(default_factory=CoverageThresholds)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        if not self.sites:
            raise SceneValidationError("scene must declare at least one site")
        seen = set()
        for site in self.sites:
            for cell in site.cells:
                if cell.id in seen:
                    raise SceneValidationError(f"duplicate cell id '{cell.id}'")
                seen.add(cell.id)

    @property
    def cell_ids(self) -> tuple[str, ...]:
        """All cell ids, lexicographically sorted (the canonical cell order)."""
        return tuple(sorted(c.id for s in self.sites for c in s.cells))

    def cell(self, cell_id: str) -> tuple[Site, Cell]:
        for site in self.sites:
            for cell in site.cells:
                if cell.id == cell_id:
                    return site, cell
        raise UnknownCellError(f"unknown cell id '{cell_id}'")

    def sub_beam(self, cell_id: str, index: int) -> tuple[Site, Cell, SubBeam]:
        site, cell = self.cell(cell_id)
        for sb in cell.sub_beams:
            if sb.index == index:
                return site, cell, sb
        raise UnknownCellError(f"cell '{cell_id}' has no sub-beam index {index}")

    def beam_keys(self) -> list[tuple[str, int]]:
        """(cell_id, sub-beam index) pairs: cells lexicographic, beams ascending."""
        keys = []
        for cell_id in self.cell_ids:
            _, cell = self.cell(cell_id)
            keys.extend((cell_id, sb.index) for sb in sorted(cell.sub_beams, key=lambda b: b.index))
        return keys

    @property
    def n_sub_beams(self) -> int:
        return sum(len(c.sub_beams) for s in self.sites for c in s.cells)


# ---------------------------------------------------------------------------
# Beam assignments
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BeamAssignment:
    """One steering angle per sub-beam, keyed by (cell id, sub-beam index).

    Treated as immutable; derive modified copies with :meth:`replaced`.
    """

    angles: dict[tuple[str, int], Orientation]

    @classmethod
    def baseline(cls, scene: SceneConfig) -> "BeamAssignment":
        return cls({(c.id, sb.index): sb.baseline
                    for s in scene.sites for c in s.cells for sb in c.sub_beams})

    def angle(self, cell_id: str, index: int) -> Orientation:
        return self.angles[(cell_id, index)]

    def replaced(self, key: tuple[str, int], orientation: Orientation) -> "BeamAssignment":
        new = dict(self.angles)
        new[key] = orientation
        return BeamAssignment(new)

    def validate_for(self, scene: SceneConfig, require_lattice: bool = True) -> None:
        """Check completeness, bounds, and (optionally) lattice membership."""
        expected = set(scene.beam_keys())
        got = set(self.angles)
        missing = expected - got
        if missing:
            raise IncompleteAssignmentError(
                f"assignment missing {len(missing)} sub-beam(s), e.g. {sorted(missing)[0]}"
            )
        unknown = got - expected
        if unknown:
            raise UnknownCellError(
                f"assignment refers to unknown sub-beam(s), e.g. {sorted(unknown)[0]}"
            )
        for (cell_id, index), orientation in self.angles.items():
            _, _, sb = scene.sub_beam(cell_id, index)
            if not sb.bounds.contains(orientation):
                raise BoundsError(
                    f"angle ({orientation.azimuth_deg}, {orientation.tilt_deg}) for "
                    f"{cell_id}[{index}] is outside bounds "
                    f"az [{sb.bounds.az_min_deg}, {sb.bounds.az_max_deg}], "
                    f"tilt [{sb.bounds.tilt_min_deg}, {sb.bounds.tilt_max_deg}]"
                )
            if require_lattice and not sb.admits(orientation):
                raise BoundsError(
                    f"angle ({orientation.azimuth_deg}, {orientation.tilt_deg}) for "
                    f"{cell_id}[{index}] is neither on the candidate lattice nor the baseline"
                )

    def to_json_dict(self) -> dict:
        out: dict[str, dict[str, list[float]]] = {}
        for (cell_id, index), o in sorted(self.angles.items()):
            out.setdefault(cell_id, {})[str(index)] = [o.azimuth_deg, o.tilt_deg]
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "BeamAssignment":
        angles = {}
        for cell_id, beams in data.items():
            for index, pair in beams.items():
                angles[(cell_id, int(index))] = Orientation(float(pair[0]), float(pair[1]))
        return cls(angles)


def save_assignment(assignment: BeamAssignment, path) -> None:
    with open(path, "w") as fh:
        json.dump(assignment.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_assignment(path) -> BeamAssignment:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise SceneSchemaError(f"cannot read assignment file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneSchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    try:
        return BeamAssignment.from_json_dict(data)
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise SceneSchemaError(f"{path}: malformed assignment document: {exc}") from exc


# ---------------------------------------------------------------------------
# Scene file I/O
# ---------------------------------------------------------------------------
def _schema() -> dict:
    text = importlib.resources.files("airtwin").joinpath("schemas/scene.schema.json").read_text()
    return json.loads(text)


def _pattern_from_dict(data: dict | None, base_dir: str):
    if data is None:
        return AntennaPattern()
    kind = data.get("type", "parametric")
    if kind == "parametric":
        kwargs = {k: float(v) for k, v in data.items() if k != "type"}
        return AntennaPattern(**kwargs)
    if kind == "table":
        path = data["path"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_pattern_table(path)
    raise SceneSchemaError(f"unknown pattern type '{kind}'")


def scene_from_dict(data: dict, base_dir: str = ".") -> SceneConfig:
    """Build a validated SceneConfig from a parsed scene document."""
    try:
        jsonschema.validate(data, _schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise SceneSchemaError(f"scene schema violation at '{path}': {exc.message}") from exc

    air = data["airspace"]
    airspace = CylinderSpec(center_m=tuple(air["center_m"]), radius_m=air["radius_m"],
                            z_min_m=air["z_min_m"], z_max_m=air["z_max_m"],
                            voxel_m=air["voxel_m"])
    radio = RadioConstants(**data["radio"])
    thresholds = CoverageThresholds(**data.get("thresholds", {}))

    sites = []
    for site_doc in data["sites"]:
        cells = []
        for cell_doc in site_doc["cells"]:
            cell_pattern = cell_doc.get("pattern")
            beams = []
            for beam_doc in cell_doc["sub_beams"]:
                bounds_doc = beam_doc["bounds"]
                step = beam_doc.get("candidate_step", list(DEFAULT_CANDIDATE_STEP))
                beams.append(SubBeam(
                    index=int(beam_doc["index"]),
                    pattern=_pattern_from_dict(beam_doc.get("pattern", cell_pattern), base_dir),
                    bounds=SteeringBounds(
                        az_min_deg=bounds_doc["az_min_deg"],
                        az_max_deg=bounds_doc["az_max_deg"],
                        tilt_min_deg=bounds_doc["tilt_min_deg"],
                        tilt_max_deg=bounds_doc["tilt_max_deg"],
                    ),
                    baseline=Orientation(beam_doc["baseline"][0], beam_doc["baseline"][1]),
                    candidate_step=(float(step[0]), float(step[1])),
                ))
            cells.append(Cell(id=cell_doc["id"], tx_power_dbm=cell_doc["tx_power_dbm"],
                              sub_beams=tuple(beams)))
        sites.append(Site(id=site_doc["id"], position_m=tuple(site_doc["position_m"]),
                          cells=tuple(cells)))
    return SceneConfig(sites=tuple(sites), airspace=airspace, radio=radio,
                       thresholds=thresholds)


def load_scene(path) -> SceneConfig:
    """Load and validate a scene JSON file."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise SceneSchemaError(f"cannot read scene file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneSchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return scene_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


def _pattern_to_dict(pattern) -> dict:
    if isinstance(pattern, AntennaPattern):
        return {"type": "parametric", "g_max_dbi": pattern.g_max_dbi,
                "hpbw_az_deg": pattern.hpbw_az_deg, "hpbw_el_deg": pattern.hpbw_el_deg,
                "sla_db": pattern.sla_db, "fbr_db": pattern.fbr_db}
    raise SceneValidationError("table patterns can only be serialized by file reference")


def scene_to_dict(scene: SceneConfig) -> dict:
    return {
        "airspace": {
            "center_m": list(scene.airspace.center_m),
            "radius_m": scene.airspace.radius_m,
            "z_min_m": scene.airspace.z_min_m,
            "z_max_m": scene.airspace.z_max_m,
            "voxel_m": scene.airspace.voxel_m,
        },
        "radio": {
            "frequency_hz": scene.radio.frequency_hz,
            "bandwidth_hz": scene.radio.bandwidth_hz,
            "noise_figure_db": scene.radio.noise_figure_db,
        },
        "thresholds": {
            "rsrp_basic_dbm": scene.thresholds.rsrp_basic_dbm,
            "rsrp_strict_dbm": scene.thresholds.rsrp_strict_dbm,
            "sinr_basic_db": scene.thresholds.sinr_basic_db,
            "sinr_strict_db": scene.thresholds.sinr_strict_db,
        },
        "sites": [
            {
                "id": site.id,
                "position_m": list(site.position_m),
                "cells": [
                    {
                        "id": cell.id,
                        "tx_power_dbm": cell.tx_power_dbm,
                        "sub_beams": [
                            {
                                "index": sb.index,
                                "pattern": _pattern_to_dict(sb.pattern),
                                "bounds": {
                                    "az_min_deg": sb.bounds.az_min_deg,
                                    "az_max_deg": sb.bounds.az_max_deg,
                                    "tilt_min_deg": sb.bounds.tilt_min_deg,
                                    "tilt_max_deg": sb.bounds.tilt_max_deg,
                                },
                                "baseline": [sb.baseline.azimuth_deg, sb.baseline.tilt_deg],
                                "candidate_step": list(sb.candidate_step),
                            }
                            for sb in cell.sub_beams
                        ],
                    }
                    for cell in site.cells
                ],
            }
            for site in scene.sites
        ],
    }


def save_scene(scene: SceneConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2, sort_keys=True)
        fh.write("\n")
