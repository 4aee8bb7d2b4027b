"""Synthetic measurement generation: a desk-scale stand-in for UAV scans.

Trajectories (helix or lawnmower passes) are sampled inside the airspace;
values are twin predictions plus seeded Gaussian noise, so generated datasets
have a known ground truth for calibration/validation experiments.
"""

from __future__ import annotations

import sys

import numpy as np

from .antenna import AntennaPattern, Orientation
from .measurements import MeasurementSet
from .scene import (
    Cell,
    CoverageThresholds,
    CylinderSpec,
    RadioConstants,
    SceneConfig,
    Site,
    SteeringBounds,
    SubBeam,
)
from .spectrum import predict_at


def helix_trajectory(airspace: CylinderSpec, n_points: int = 400, turns: float = 3.0,
                     radius_frac: float = 0.8, z_frac=(0.1, 0.9)) -> np.ndarray:
    """Ascending spiral around the cylinder axis; (n_points, 3) positions."""
    t = np.linspace(0.0, 1.0, n_points)
    angle = 2.0 * np.pi * turns * t
    r = radius_frac * airspace.radius_m
    z0 = airspace.z_min_m + z_frac[0] * (airspace.z_max_m - airspace.z_min_m)
    z1 = airspace.z_min_m + z_frac[1] * (airspace.z_max_m - airspace.z_min_m)
    out = np.empty((n_points, 3))
    out[:, 0] = airspace.center_m[0] + r * np.sin(angle)
    out[:, 1] = airspace.center_m[1] + r * np.cos(angle)
    out[:, 2] = z0 + (z1 - z0) * t
    return out


def lawnmower_trajectory(airspace: CylinderSpec, altitudes_m, line_spacing_m: float = 100.0,
                         step_m: float = 50.0) -> np.ndarray:
    """Serpentine x-sweeps at each altitude, restricted to the cylinder."""
    cx, cy = airspace.center_m
    r = airspace.radius_m
    ys = np.arange(cy - r + line_spacing_m / 2.0, cy + r, line_spacing_m)
    points = []
    for z in altitudes_m:
        for row, y in enumerate(ys):
            half = np.sqrt(max(r * r - (y - cy) ** 2, 0.0))
            if half < step_m:
                continue
            xs = np.arange(cx - half + step_m / 2.0, cx + half, step_m)
            if row % 2 == 1:
                xs = xs[::-1]
            for x in xs:
                points.append((x, y, z))
    return np.asarray(points, dtype=float).reshape(-1, 3)


def clip_to_airspace(points: np.ndarray, airspace: CylinderSpec) -> tuple[np.ndarray, int]:
    """Clamp positions onto the cylinder; returns (points, n_clipped)."""
    p = np.array(points, dtype=float)
    dx = p[:, 0] - airspace.center_m[0]
    dy = p[:, 1] - airspace.center_m[1]
    dist = np.sqrt(dx * dx + dy * dy)
    outside = (dist > airspace.radius_m) | (p[:, 2] < airspace.z_min_m) | (p[:, 2] > airspace.z_max_m)
    n_clipped = int(np.count_nonzero(outside))
    radial = dist > airspace.radius_m
    if np.any(radial):
        scale = airspace.radius_m / dist[radial]
        p[radial, 0] = airspace.center_m[0] + dx[radial] * scale
        p[radial, 1] = airspace.center_m[1] + dy[radial] * scale
    p[:, 2] = np.clip(p[:, 2], airspace.z_min_m, airspace.z_max_m)
    return p, n_clipped


def synthesize_measurements(scene: SceneConfig, assignment, trajectory: np.ndarray,
                            sigma_db: float, seed: int, offset_db: float = 0.0,
                            cells: str = "all", source: str = "synthetic",
                            warn=None) -> MeasurementSet:
    """Twin predictions along a trajectory plus seeded Gaussian noise.

    ``cells`` is "all" (one sample per cell per point) or "serving" (the
    best cell only). Out-of-airspace trajectory points are clipped with a
    warning through ``warn`` (defaults to stderr).
    """
    if sigma_db < 0:
        raise ValueError("sigma_db must be >= 0")
    trajectory, n_clipped = clip_to_airspace(trajectory, scene.airspace)
    if n_clipped and warn is not False:
        message = f"warning: clipped {n_clipped} trajectory point(s) to the airspace"
        (warn or (lambda m: print(m, file=sys.stderr)))(message)

    cell_ids = scene.cell_ids
    points = []
    for pos in trajectory:
        for cid in cell_ids:
            points.append((pos, cid))
    predictions = predict_at(scene, assignment, offset_db, points)

    if cells == "serving":
        per_point = predictions.reshape(len(trajectory), len(cell_ids))
        best = np.argmax(per_point, axis=1)
        keep_positions = trajectory
        keep_cells = [cell_ids[b] for b in best]
        keep_values = per_point[np.arange(len(trajectory)), best]
    elif cells == "all":
        keep_positions = np.repeat(trajectory, len(cell_ids), axis=0)
        keep_cells = [cid for _ in range(len(trajectory)) for cid in cell_ids]
        keep_values = predictions
    else:
        raise ValueError(f"cells must be 'all' or 'serving', got {cells!r}")

    rng = np.random.default_rng(seed)
    noisy = keep_values + rng.normal(0.0, sigma_db, size=len(keep_values)) if sigma_db > 0 \
        else np.asarray(keep_values, dtype=float)
    return MeasurementSet(
        seq=np.arange(len(noisy), dtype=np.int64),
        positions=np.asarray(keep_positions, dtype=float),
        cell_ids=np.asarray(keep_cells, dtype=object),
        rsrp_dbm=np.asarray(noisy, dtype=float),
        source=source,
    )


def demo_scene(radius_m: float = 500.0, height_m: float = 300.0, voxel_m: float = 25.0,
               n_sites: int = 3, cells_per_site: int = 2, beams_per_cell: int = 7,
               tx_power_dbm: float = 15.0) -> SceneConfig:
    """Six-cell, 42-sub-beam synthetic deployment around a cylindrical airspace.

    Sites sit on a ring near the cylinder edge with cells facing inward; each
    cell's sub-beams fan out in azimuth with 0 tilt as the baseline, leaving
    high-altitude coverage to the optimizer.
    """
    pattern = AntennaPattern(g_max_dbi=17.0, hpbw_az_deg=24.0, hpbw_el_deg=10.0,
                             sla_db=30.0, fbr_db=30.0)
    sites = []
    for s in range(n_sites):
        ring_deg = 360.0 * s / n_sites
        ring = np.radians(ring_deg)
        pos = (0.9 * radius_m * np.sin(ring), 0.9 * radius_m * np.cos(ring), 25.0)
        inward = (ring_deg + 180.0) % 360.0
        cells = []
        for c in range(cells_per_site):
            cell_az = inward + (c - (cells_per_site - 1) / 2.0) * 70.0
            beams = []
            for b in range(beams_per_cell):
                beam_az = cell_az + (b - (beams_per_cell - 1) / 2.0) * 10.0
                beams.append(SubBeam(
                    index=b,
                    pattern=pattern,
                    bounds=SteeringBounds(az_min_deg=beam_az - 15.0, az_max_deg=beam_az + 15.0,
                                          tilt_min_deg=0.0, tilt_max_deg=21.0),
                    baseline=Orientation(beam_az, 0.0),
                    candidate_step=(5.0, 3.0),
                ))
            cells.append(Cell(id=f"s{s + 1}c{c + 1}", tx_power_dbm=tx_power_dbm,
                              sub_beams=tuple(beams)))
        sites.append(Site(id=f"s{s + 1}", position_m=pos, cells=tuple(cells)))
    return SceneConfig(
        sites=tuple(sites),
        airspace=CylinderSpec(center_m=(0.0, 0.0), radius_m=radius_m,
                              z_min_m=0.0, z_max_m=height_m, voxel_m=voxel_m),
        radio=RadioConstants(frequency_hz=3.5e9, bandwidth_hz=1e8, noise_figure_db=7.0),
        thresholds=CoverageThresholds(),
    )
