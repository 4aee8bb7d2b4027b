"""Spectrum twin: per-voxel RSRP fields from geometry, antenna gain, and FSPL.

A sub-beam's received power at a point is

    RSRP = tx_power_dbm + G(pattern, steering, direction) - FSPL(d, f) + offset_db

with FSPL = 20 log10(4 pi d f / c). The cell-level value at a voxel is the
maximum over the cell's sub-beams (beam-swept reference-signal coverage). A
single global calibration offset, fitted against measurements, absorbs
deployment-dependent factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .antenna import AntennaPattern, Orientation, gain
from .errors import EmptySetError, SingularityError
from .scene import BeamAssignment, Cell, SceneConfig, Site, SubBeam, VoxelGrid

SPEED_OF_LIGHT_M_S = kernels.SPEED_OF_LIGHT_M_S


def fspl_db(distance_m, frequency_hz):
    """Free-space path loss 20 log10(4 pi d f / c) in dB; scalar or array."""
    d = np.asarray(distance_m, dtype=float)
    f = np.asarray(frequency_hz, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance_m must be > 0")
    if np.any(f <= 0):
        raise ValueError("frequency_hz must be > 0")
    out = 20.0 * np.log10(4.0 * math.pi * d * f / SPEED_OF_LIGHT_M_S)
    if np.ndim(distance_m) == 0 and np.ndim(frequency_hz) == 0:
        return float(out)
    return out


def beam_rsrp(site: Site, cell: Cell, sub_beam: SubBeam, angle: Orientation,
              point, radio, offset_db: float = 0.0) -> float:
    """Scalar single-point RSRP for one sub-beam (reference path for tests)."""
    p = np.asarray(point, dtype=float)
    delta = p - np.asarray(site.position_m)
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise SingularityError(
            f"evaluation point coincides with site '{site.id}' at {tuple(site.position_m)}"
        )
    g = gain(sub_beam.pattern, angle, delta / dist)
    return cell.tx_power_dbm + g - fspl_db(dist, radio.frequency_hz) + offset_db


@dataclass(frozen=True)
class RadioField:
    """Per-voxel RSRP, per cell and (optionally) per sub-beam, in dBm."""

    grid: VoxelGrid
    cell_ids: tuple[str, ...]                # lexicographic
    cell_rsrp_dbm: np.ndarray                # (n_cells, count)
    beam_keys: tuple[tuple[str, int], ...]   # grouped by cell in cell_ids order
    beam_rsrp_dbm: np.ndarray | None         # (n_beams, count) or None
    assignment: BeamAssignment
    offset_db: float

    def cell_index(self, cell_id: str) -> int:
        return self.cell_ids.index(cell_id)

    def cell_beam_slices(self) -> list[tuple[int, int]]:
        """Row range [start, stop) of each cell's sub-beams in beam_rsrp_dbm."""
        slices = []
        start = 0
        for cell_id in self.cell_ids:
            stop = start
            while stop < len(self.beam_keys) and self.beam_keys[stop][0] == cell_id:
                stop += 1
            slices.append((start, stop))
            start = stop
        return slices


def _eval_beam_field(centers, site, cell, sub_beam, angle, frequency_hz,
                     offset_db, out=None, threads=1):
    """Per-voxel RSRP of one sub-beam; kernel for parametric patterns."""
    if isinstance(sub_beam.pattern, AntennaPattern):
        return kernels.eval_beam_rsrp_parametric(
            centers, site.position_m, angle.azimuth_deg, angle.tilt_deg,
            sub_beam.pattern, cell.tx_power_dbm, frequency_hz, offset_db,
            out=out, threads=threads)
    # Table patterns take the generic vectorized path.
    delta = centers - np.asarray(site.position_m)
    dist = np.linalg.norm(delta, axis=1)
    direction = delta / dist[:, None]
    g = gain(sub_beam.pattern, angle, direction)
    values = cell.tx_power_dbm + g - fspl_db(dist, frequency_hz) + offset_db
    if out is None:
        return values
    out[:] = values
    return out


def _check_no_coincidence(scene: SceneConfig, centers: np.ndarray) -> None:
    for site in scene.sites:
        pos = np.asarray(site.position_m)
        if np.any(np.all(centers == pos, axis=1)):
            raise SingularityError(
                f"a voxel center coincides with site '{site.id}' at {tuple(pos)}"
            )


def cell_max_from_beams(beam_rsrp_dbm: np.ndarray,
                        slices: list[tuple[int, int]]) -> np.ndarray:
    """Cell-level field: per-voxel max over each cell's sub-beam rows."""
    n = beam_rsrp_dbm.shape[1]
    out = np.empty((len(slices), n), dtype=np.float64)
    for c, (a, b) in enumerate(slices):
        out[c] = np.maximum.reduce(beam_rsrp_dbm[a:b], axis=0)
    return out


def build_field(scene: SceneConfig, grid: VoxelGrid, assignment: BeamAssignment,
                offset_db: float = 0.0, *, threads: int = 1,
                with_beams: bool = True) -> RadioField:
    """Evaluate every (voxel, sub-beam) RSRP and reduce to cell level.

    Deterministic regardless of ``threads``: per-voxel values are computed in
    fixed chunks and the per-cell max uses a fixed sub-beam order.
    """
    assignment.validate_for(scene, require_lattice=False)
    centers = grid.centers
    _check_no_coincidence(scene, centers)

    beam_keys = tuple(scene.beam_keys())
    beam = np.empty((len(beam_keys), grid.count), dtype=np.float64)
    rows = []
    for row, (cell_id, index) in enumerate(beam_keys):
        site, cell, sb = scene.sub_beam(cell_id, index)
        rows.append((row, site, cell, sb, assignment.angle(cell_id, index)))

    if threads is None or threads <= 1:
        for row, site, cell, sb, angle in rows:
            _eval_beam_field(centers, site, cell, sb, angle,
                             scene.radio.frequency_hz, offset_db, out=beam[row])
    else:
        # one pool over all (sub-beam, voxel-chunk) tasks; chunk boundaries are
        # fixed, so the result is independent of the thread count
        from concurrent.futures import ThreadPoolExecutor

        bounds = [(lo, min(lo + kernels._CHUNK, grid.count))
                  for lo in range(0, grid.count, kernels._CHUNK)]

        def work(task):
            row, site, cell, sb, angle, lo, hi = task
            _eval_beam_field(centers[lo:hi], site, cell, sb, angle,
                             scene.radio.frequency_hz, offset_db,
                             out=beam[row, lo:hi])

        tasks = [(row, site, cell, sb, angle, lo, hi)
                 for row, site, cell, sb, angle in rows for lo, hi in bounds]
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(work, tasks))

    cell_ids = scene.cell_ids
    slices = []
    start = 0
    for cell_id in cell_ids:
        _, cell = scene.cell(cell_id)
        slices.append((start, start + len(cell.sub_beams)))
        start += len(cell.sub_beams)
    cell_rsrp = cell_max_from_beams(beam, slices)

    return RadioField(grid=grid, cell_ids=cell_ids, cell_rsrp_dbm=cell_rsrp,
                      beam_keys=beam_keys, beam_rsrp_dbm=beam if with_beams else None,
                      assignment=assignment, offset_db=float(offset_db))


def predict_at(scene: SceneConfig, assignment: BeamAssignment, offset_db: float,
               points) -> np.ndarray:
    """Cell-level RSRP at arbitrary (position, cell id) points, in input order."""
    assignment.validate_for(scene, require_lattice=False)
    pts = list(points)
    out = np.empty(len(pts), dtype=np.float64)
    if not pts:
        return out
    positions = np.asarray([np.asarray(p[0], dtype=float) for p in pts])
    cell_ids = [p[1] for p in pts]
    for cell_id in sorted(set(cell_ids)):
        site, cell = scene.cell(cell_id)
        idx = np.asarray([i for i, c in enumerate(cell_ids) if c == cell_id])
        sub = np.ascontiguousarray(positions[idx])
        pos = np.asarray(site.position_m)
        if np.any(np.all(sub == pos, axis=1)):
            raise SingularityError(f"a prediction point coincides with site '{site.id}'")
        acc = None
        for sb in sorted(cell.sub_beams, key=lambda b: b.index):
            vals = _eval_beam_field(sub, site, cell, sb,
                                    assignment.angle(cell_id, sb.index),
                                    scene.radio.frequency_hz, offset_db)
            acc = vals if acc is None else np.maximum(acc, vals)
        out[idx] = acc
    return out


@dataclass(frozen=True)
class CalibrationOffset:
    """Single global additive correction fitted to measurements."""

    offset_db: float
    residual_rmse_db: float
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise EmptySetError("calibration needs at least one matched pair")
        if self.residual_rmse_db < 0:
            raise ValueError("residual_rmse_db must be >= 0")


def calibrate_offset(predicted, measured) -> CalibrationOffset:
    """Least-squares single offset: mean(measured - predicted), plus fit RMSE.

    ``measured`` may be a MeasurementSet or a plain array aligned with
    ``predicted`` (pairs already matched by position and cell id).
    """
    measured_values = getattr(measured, "rsrp_dbm", measured)
    p = np.asarray(predicted, dtype=float)
    m = np.asarray(measured_values, dtype=float)
    if p.shape != m.shape:
        raise ValueError(f"predicted {p.shape} and measured {m.shape} are not aligned")
    if p.size == 0:
        raise EmptySetError("no matched (prediction, measurement) pairs")
    residuals = m - p
    offset = float(np.mean(residuals))
    rmse = float(np.sqrt(np.mean((residuals - offset) ** 2)))
    return CalibrationOffset(offset_db=offset, residual_rmse_db=rmse, n_samples=p.size)


@dataclass(frozen=True)
class TwinModel:
    """A calibrated twin: scene + assignment + global offset."""

    scene: SceneConfig
    assignment: BeamAssignment
    offset_db: float = 0.0

    def predict(self, positions, cell_ids) -> np.ndarray:
        pts = list(zip(np.asarray(positions, dtype=float), cell_ids))
        return predict_at(self.scene, self.assignment, self.offset_db, pts)

    def predict_set(self, measurements) -> np.ndarray:
        return self.predict(measurements.positions, measurements.cell_ids)


@dataclass(frozen=True)
class DriftReport:
    """Model-vs-measurement discrepancy check against a threshold."""

    rmse_db: float
    drifted: bool
    threshold_db: float
    refit: CalibrationOffset
    n_samples: int


def drift_check(model: TwinModel, measurements, threshold_db: float) -> DriftReport:
    """RMSE of the current model on fresh measurements; flag if above threshold.

    Always returns the refit offset (an absolute replacement for the model's
    current offset) so the caller can choose to adopt it.
    """
    if len(measurements.rsrp_dbm) == 0:
        raise EmptySetError("drift check needs a nonempty measurement set")
    predicted = model.predict_set(measurements)
    errors = np.asarray(measurements.rsrp_dbm) - predicted
    rmse = float(np.sqrt(np.mean(errors ** 2)))
    uncalibrated = predicted - model.offset_db
    refit = calibrate_offset(uncalibrated, measurements.rsrp_dbm)
    return DriftReport(rmse_db=rmse, drifted=bool(rmse > threshold_db),
                       threshold_db=float(threshold_db), refit=refit,
                       n_samples=int(len(measurements.rsrp_dbm)))


def export_field_csv(field: RadioField, fh) -> None:
    """Write `x_m,y_m,z_m,cell_id,rsrp_dbm`, voxel-major then cell lexicographic."""
    fh.write("x_m,y_m,z_m,cell_id,rsrp_dbm\n")
    centers = field.grid.centers
    for v in range(field.grid.count):
        x, y, z = centers[v]
        for c, cell_id in enumerate(field.cell_ids):
            fh.write(f"{x:.3f},{y:.3f},{z:.3f},{cell_id},{field.cell_rsrp_dbm[c, v]:.4f}\n")
