"""
Reading user panels and networks from CSV, and exporting simulated panels.
"""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from .dgp import SimulatedPanel
from .estimators import PanelData, build_panel
from .graph import Network, build_network_from_edges, build_network_from_points
from .numerics import InvalidInputError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

COVARIATE_PATTERN = re.compile(r"^z\d*$")
PANEL_REQUIRED = ["id", "d", "y1", "y2"]
POINTS_REQUIRED = ["id", "x", "y"]
EDGES_REQUIRED = ["src", "dst"]
FLOAT_FORMAT = "%.17g"


class PanelSchemaError(RuntimeError):
    """Raised when an input CSV does not match the expected layout."""


class MissingNetworkError(PanelSchemaError):
    """Raised when neither a points file nor an edge list is supplied."""


def _read_csv(path: PathLike, required: List[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise PanelSchemaError(f"File not found: {path}")
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise PanelSchemaError(f"Unable to read {path.name}: {e}")

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise PanelSchemaError(f"{path.name} is missing column(s): {', '.join(missing)}")
    if frame.empty:
        raise PanelSchemaError(f"{path.name} has no rows")
    return frame


def _sorted_by_id(frame: pd.DataFrame, name: str) -> pd.DataFrame:
    ids = frame["id"].to_numpy()
    if not np.issubdtype(ids.dtype, np.integer):
        raise PanelSchemaError(f"{name}: ids must be integers")
    if not np.array_equal(np.sort(ids), np.arange(len(frame))):
        raise PanelSchemaError(f"{name}: ids must be exactly 0..{len(frame) - 1}")
    return frame.sort_values("id").reset_index(drop=True)


def covariate_columns(frame: pd.DataFrame) -> List[str]:
    """``z``, ``z1``, ``z2``, ... in file order."""
    return [c for c in frame.columns if COVARIATE_PATTERN.match(c)]


def read_panel_csv(path: PathLike) -> pd.DataFrame:
    """Load ``id,z...,d,y1,y2``; extra columns are kept but unused."""
    frame = _read_csv(path, PANEL_REQUIRED)
    if not covariate_columns(frame):
        raise PanelSchemaError(f"{Path(path).name} needs at least one covariate column (z, z1, ...)")
    frame = _sorted_by_id(frame, Path(path).name)

    numeric = covariate_columns(frame) + ["d", "y1", "y2"]
    if frame[numeric].isna().any().any():
        raise PanelSchemaError(f"{Path(path).name} has missing values")
    if not frame["d"].isin([0, 1]).all():
        raise PanelSchemaError("column 'd' must be 0/1")
    return frame


def read_points_csv(path: PathLike) -> np.ndarray:
    frame = _sorted_by_id(_read_csv(path, POINTS_REQUIRED), Path(path).name)
    return frame[["x", "y"]].to_numpy(dtype=float)


def read_edges_csv(path: PathLike) -> np.ndarray:
    frame = _read_csv(path, EDGES_REQUIRED)
    if frame[EDGES_REQUIRED].isna().any().any():
        raise PanelSchemaError(f"{Path(path).name} has missing endpoints")
    return frame[EDGES_REQUIRED].to_numpy(dtype=int)


def load_network(
    n: int,
    points_path: Optional[PathLike] = None,
    edges_path: Optional[PathLike] = None,
    radius: float = 1.0,
    metric: str = "chebyshev",
) -> Network:
    """Points win over edges when both are given."""
    if points_path is not None:
        points = read_points_csv(points_path)
        if points.shape[0] != n:
            raise PanelSchemaError(f"points file has {points.shape[0]} units, panel has {n}")
        return build_network_from_points(points, radius=radius, metric=metric)
    if edges_path is not None:
        try:
            return build_network_from_edges(n, read_edges_csv(edges_path))
        except InvalidInputError as e:
            raise PanelSchemaError(f"{Path(edges_path).name}: {e}") from e
    raise MissingNetworkError("a points file or an edge list is required to build the network")


def panel_from_files(
    panel_path: PathLike,
    points_path: Optional[PathLike] = None,
    edges_path: Optional[PathLike] = None,
    L: int = 10,
    K: int = 1,
    radius: float = 1.0,
    metric: str = "chebyshev",
) -> PanelData:
    frame = read_panel_csv(panel_path)
    network = load_network(len(frame), points_path, edges_path, radius=radius, metric=metric)
    logger.info("Loaded panel with %d units and %d covariate(s)", len(frame), len(covariate_columns(frame)))
    return build_panel(
        z=frame[covariate_columns(frame)].to_numpy(dtype=float),
        D=frame["d"].to_numpy(dtype=int),
        Y1=frame["y1"].to_numpy(dtype=float),
        Y2=frame["y2"].to_numpy(dtype=float),
        network=network,
        L=L,
        K=K,
    )


def export_simulated_panel(sim: SimulatedPanel, directory: PathLike) -> List[Path]:
    """
    Write ``panel.csv`` (id,x,y,z,d,y1,y2,s) and ``points.csv`` (id,x,y).

    Values carry 17 significant digits so a reload reproduces the floats
    exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    panel = sim.panel
    ids = np.arange(panel.n)

    z = panel.z
    z_names = ["z"] if z.shape[1] == 1 else [f"z{k + 1}" for k in range(z.shape[1])]
    frame = pd.DataFrame({"id": ids, "x": sim.points[:, 0], "y": sim.points[:, 1]})
    for k, name in enumerate(z_names):
        frame[name] = z[:, k]
    frame["d"] = panel.D
    frame["y1"] = panel.Y1
    frame["y2"] = panel.Y2
    frame["s"] = sim.S

    panel_file = directory / "panel.csv"
    points_file = directory / "points.csv"
    frame.to_csv(panel_file, index=False, float_format=FLOAT_FORMAT)
    frame[["id", "x", "y"]].to_csv(points_file, index=False, float_format=FLOAT_FORMAT)
    logger.info("Exported simulated panel to %s", directory)
    return [panel_file, points_file]
