"""Georeferenced RSRP samples: the calibration/validation ground truth.

Native CSV schema: header ``seq,x_m,y_m,z_m,cell_id,rsrp_dbm``. Foreign drive
-test exports are converted at ingestion through a JSON mapping file that
renames columns and, optionally, converts lat/lon/alt to the local ENU frame:

    {
      "columns": {"seq": "idx", "x_m": "lon", "y_m": "lat", "z_m": "alt",
                  "cell_id": "pci", "rsrp_dbm": "rsrp"},
      "position": {"frame": "lla", "origin_lla": [22.6, 113.9, 0.0]}
    }

``columns.seq`` may be omitted; rows are then numbered in file order.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import SceneSchemaError, SceneValidationError
from .scene import CylinderSpec

EARTH_RADIUS_M = 6_371_000.0

NATIVE_COLUMNS = ("seq", "x_m", "y_m", "z_m", "cell_id", "rsrp_dbm")


@dataclass(frozen=True)
class MeasurementSet:
    """Ordered UAV samples: (seq, position, cell id, rsrp)."""

    seq: np.ndarray           # (n,) int64, strictly increasing
    positions: np.ndarray     # (n, 3) float64
    cell_ids: np.ndarray      # (n,) object (str)
    rsrp_dbm: np.ndarray      # (n,) float64
    source: str = ""
    region: CylinderSpec | None = None

    def __post_init__(self):
        seq = np.asarray(self.seq, dtype=np.int64)
        pos = np.asarray(self.positions, dtype=np.float64)
        ids = np.asarray(self.cell_ids, dtype=object)
        rsrp = np.asarray(self.rsrp_dbm, dtype=np.float64)
        n = seq.shape[0]
        if pos.shape != (n, 3) or ids.shape != (n,) or rsrp.shape != (n,):
            raise SceneValidationError("measurement arrays have inconsistent lengths")
        if n > 1 and np.any(np.diff(seq) <= 0):
            raise SceneValidationError("seq must be strictly increasing along the trajectory")
        if not np.all(np.isfinite(rsrp)):
            raise SceneValidationError("rsrp_dbm values must all be finite")
        if self.region is not None and n > 0 and not np.all(self.region.contains(pos)):
            raise SceneValidationError("some sample positions fall outside the declared region")
        object.__setattr__(self, "seq", seq)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "cell_ids", ids)
        object.__setattr__(self, "rsrp_dbm", rsrp)

    def __len__(self) -> int:
        return int(self.seq.shape[0])

    def subset(self, indices) -> "MeasurementSet":
        idx = np.asarray(indices, dtype=np.int64)
        return MeasurementSet(seq=self.seq[idx], positions=self.positions[idx],
                              cell_ids=self.cell_ids[idx], rsrp_dbm=self.rsrp_dbm[idx],
                              source=self.source, region=self.region)


def lla_to_enu(lat_deg, lon_deg, alt_m, origin_lla) -> tuple[float, float, float]:
    """Equirectangular lat/lon/alt to local ENU meters (fine at km scale)."""
    lat0, lon0, alt0 = origin_lla
    k = math.pi / 180.0 * EARTH_RADIUS_M
    x = (lon_deg - lon0) * k * math.cos(math.radians(lat0))
    y = (lat_deg - lat0) * k
    return x, y, alt_m - alt0


def load_mapping(path) -> dict:
    try:
        with open(path) as fh:
            mapping = json.load(fh)
    except OSError as exc:
        raise SceneSchemaError(f"cannot read mapping file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SceneSchemaError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if "columns" not in mapping or not isinstance(mapping["columns"], dict):
        raise SceneSchemaError(f"{path}: mapping must contain a 'columns' object")
    missing = [c for c in ("x_m", "y_m", "z_m", "cell_id", "rsrp_dbm")
               if c not in mapping["columns"]]
    if missing:
        raise SceneSchemaError(f"{path}: mapping.columns missing {missing}")
    return mapping


def load_measurements(path, mapping=None, region: CylinderSpec | None = None,
                      source: str | None = None) -> MeasurementSet:
    """Load a measurement CSV, optionally through a column/frame mapping."""
    if isinstance(mapping, (str, bytes)) or hasattr(mapping, "__fspath__"):
        mapping = load_mapping(mapping)
    columns = dict(zip(NATIVE_COLUMNS, NATIVE_COLUMNS)) if mapping is None \
        else mapping["columns"]
    frame = "enu" if mapping is None else mapping.get("position", {}).get("frame", "enu")
    origin = None if mapping is None else mapping.get("position", {}).get("origin_lla")
    if frame == "lla" and origin is None:
        raise SceneSchemaError("mapping position.frame 'lla' requires position.origin_lla")

    seq, positions, cell_ids, rsrp = [], [], [], []
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            fields = reader.fieldnames or []
            needed = [columns[c] for c in ("x_m", "y_m", "z_m", "cell_id", "rsrp_dbm")]
            missing = [c for c in needed if c not in fields]
            if missing:
                raise SceneSchemaError(f"{path}: missing column(s) {missing}")
            has_seq = "seq" in columns and columns["seq"] in fields
            for i, row in enumerate(reader):
                try:
                    x = float(row[columns["x_m"]])
                    y = float(row[columns["y_m"]])
                    z = float(row[columns["z_m"]])
                    value = float(row[columns["rsrp_dbm"]])
                    s = int(float(row[columns["seq"]])) if has_seq else i
                except (TypeError, ValueError) as exc:
                    raise SceneSchemaError(
                        f"{path}: bad numeric value on data row {i + 1}: {exc}"
                    ) from exc
                if frame == "lla":
                    x, y, z = lla_to_enu(y, x, z, origin)  # x column holds lon, y lat
                seq.append(s)
                positions.append((x, y, z))
                cell_ids.append(row[columns["cell_id"]])
                rsrp.append(value)
    except OSError as exc:
        raise SceneSchemaError(f"cannot read measurement file {path}: {exc}") from exc

    return MeasurementSet(
        seq=np.asarray(seq, dtype=np.int64),
        positions=np.asarray(positions, dtype=np.float64).reshape(-1, 3),
        cell_ids=np.asarray(cell_ids, dtype=object),
        rsrp_dbm=np.asarray(rsrp, dtype=np.float64),
        source=source if source is not None else str(path),
        region=region,
    )


def save_measurements(measurements: MeasurementSet, fh) -> None:
    """Write the native CSV schema with stable formatting.

    Positions carry 6 decimals (micrometers) so values re-predicted at the
    stored coordinates agree with the stored RSRP to its own 4-decimal
    precision.
    """
    fh.write("seq,x_m,y_m,z_m,cell_id,rsrp_dbm\n")
    for i in range(len(measurements)):
        x, y, z = measurements.positions[i]
        fh.write(f"{measurements.seq[i]},{x:.6f},{y:.6f},{z:.6f},"
                 f"{measurements.cell_ids[i]},{measurements.rsrp_dbm[i]:.4f}\n")
