"""CSV import/export of observed fields.

Layout: header ``t,<y_1>,...,<y_m>`` with spatial coordinates printed with
6 decimals, one row per observation time, values written with 17
significant digits so that export -> import -> export is byte-identical.
An optional ``<csv>.meta.json`` sidecar keeps the simulation provenance and
the exact spatial points; without it, points are read back rounded to 6 decimals.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from spdevol.model import OperatorParams, VolatilitySpec
from spdevol.simulate import FieldSample, SamplingGrid, SimulationConfig

logger = logging.getLogger(__name__)

VALUE_FORMAT = "%.17g"
TIME_TOLERANCE = 1e-12
LABEL_TOLERANCE = 5e-7


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def _y_labels(grid):
    labels = [f"{v:.6f}" for v in grid.y]
    if len(set(labels)) != len(labels):
        raise ValueError("Spatial points closer than 1e-6 cannot be written to CSV")
    return labels


def write_field_csv(field, path, provenance=True):
    """Write a FieldSample to CSV (path may be a file path or a text buffer)"""
    frame = pd.DataFrame(field.values, columns=_y_labels(field.grid))
    frame.insert(0, "t", field.grid.times)
    frame.to_csv(path, index=False, float_format=VALUE_FORMAT, lineterminator="\n")

    if provenance and isinstance(path, (str, Path)) and field.params is not None:
        meta = {"params": field.params.to_dict(), "y": list(field.grid.y)}
        if field.vol is not None:
            try:
                meta["vol"] = field.vol.to_dict()
            except ValueError:
                logger.debug("Volatility spec not serializable, omitted from provenance")
        if field.config is not None:
            meta["config"] = field.config.to_dict()
        with open(sidecar_path(path), "w") as f:
            json.dump(meta, f, indent=2)
        logger.debug(f"Provenance written to {sidecar_path(path)}")

    if isinstance(path, (str, Path)):
        logger.info(f"Field written to {path} ({field.n + 1} x {field.m})")


def _exact_points(labels, points):
    """Sidecar coordinates when they agree with the rounded header labels"""
    if points is None or len(points) != len(labels):
        return labels
    points = tuple(float(v) for v in points)
    if any(abs(p - v) > LABEL_TOLERANCE for p, v in zip(points, labels)):
        logger.warning("Sidecar spatial points do not match the CSV header, using the header")
        return labels
    return points


def read_field_csv(path):
    """Read a field CSV written by write_field_csv"""
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.ParserError as e:
        raise ValueError(f"Malformed field CSV: {e}") from None
    except pd.errors.EmptyDataError:
        raise ValueError(f"Field CSV is empty: {path}") from None

    columns = list(frame.columns)
    if len(columns) < 2 or columns[0] != "t":
        raise ValueError("Field CSV must have header 't,y_1,...,y_m'")
    try:
        y = tuple(float(c) for c in columns[1:])
        data = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise ValueError(f"Non-numeric entry in field CSV: {e}") from None

    n = data.shape[0] - 1
    if n < 1:
        raise ValueError("Field CSV needs at least two observation times")
    if np.max(np.abs(data[:, 0] - np.arange(n + 1) / n)) > TIME_TOLERANCE:
        raise ValueError("Observation times must be t_i = i/n on [0, 1]")

    params = vol = config = None
    meta_file = sidecar_path(path) if isinstance(path, (str, Path)) else None
    if meta_file is not None and meta_file.exists():
        with open(meta_file, "r") as f:
            meta = json.load(f)
        params = OperatorParams.from_dict(meta["params"]) if "params" in meta else None
        vol = VolatilitySpec.from_dict(meta["vol"]) if "vol" in meta else None
        config = SimulationConfig.from_dict(meta["config"]) if "config" in meta else None
        y = _exact_points(y, meta.get("y"))
        logger.debug(f"Provenance loaded from {meta_file}")

    return FieldSample(values=data[:, 1:], grid=SamplingGrid(n=n, y=y),
                       params=params, vol=vol, config=config)
