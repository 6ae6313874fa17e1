"""
Unit tests for CSV panel/network input and simulated-panel export.
"""
import numpy as np
import pandas as pd
import pytest

from netdid.app.dgp import generate_panel
from netdid.app.models import SimConfig
from netdid.app.panel_io import (
    MissingNetworkError,
    PanelSchemaError,
    covariate_columns,
    export_simulated_panel,
    load_network,
    panel_from_files,
    read_edges_csv,
    read_panel_csv,
)


def write_csv(path, rows, columns):
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


@pytest.fixture
def panel_file(tmp_path):
    rows = [(2, 0.1, 1, 0.0, 1.0), (0, -0.3, 0, 1.0, 1.5), (1, 0.7, 1, 2.0, 2.0)]
    return write_csv(tmp_path / "panel.csv", rows, ["id", "z", "d", "y1", "y2"])


def test_panel_sorted_by_id(panel_file):
    """Rows come back in id order."""
    frame = read_panel_csv(panel_file)
    assert list(frame["id"]) == [0, 1, 2]
    assert list(frame["z"]) == [-0.3, 0.7, 0.1]


def test_covariate_columns_detected():
    """z, z1, z2 are covariates; other columns are not."""
    frame = pd.DataFrame(columns=["id", "z1", "x", "z2", "zeta", "d"])
    assert covariate_columns(frame) == ["z1", "z2"]


def test_missing_treatment_column(tmp_path):
    """A panel without d is a schema error naming the column."""
    path = write_csv(tmp_path / "p.csv", [(0, 0.0, 1.0, 2.0)], ["id", "z", "y1", "y2"])
    with pytest.raises(PanelSchemaError, match="d"):
        read_panel_csv(path)


def test_non_binary_treatment(tmp_path):
    """d must be 0/1."""
    path = write_csv(tmp_path / "p.csv", [(0, 0.0, 2, 1.0, 2.0)], ["id", "z", "d", "y1", "y2"])
    with pytest.raises(PanelSchemaError):
        read_panel_csv(path)


def test_ids_must_be_contiguous(tmp_path):
    """Gaps in ids are rejected."""
    path = write_csv(tmp_path / "p.csv", [(0, 0.0, 1, 1.0, 2.0), (2, 0.0, 0, 1.0, 2.0)], ["id", "z", "d", "y1", "y2"])
    with pytest.raises(PanelSchemaError):
        read_panel_csv(path)


def test_missing_values_rejected(tmp_path):
    """Blank outcomes are a schema error."""
    path = tmp_path / "p.csv"
    path.write_text("id,z,d,y1,y2\n0,0.1,1,,2.0\n1,0.2,0,1.0,2.0\n")
    with pytest.raises(PanelSchemaError):
        read_panel_csv(path)


def test_missing_file(tmp_path):
    """A path that does not exist is reported as a schema problem."""
    with pytest.raises(PanelSchemaError):
        read_panel_csv(tmp_path / "absent.csv")


def test_network_required(panel_file):
    """Neither points nor edges: missing network."""
    with pytest.raises(MissingNetworkError):
        panel_from_files(panel_file)


def test_edges_network(tmp_path, panel_file):
    """An edge list defines hop distances directly."""
    edges = write_csv(tmp_path / "edges.csv", [(0, 1), (1, 2)], ["src", "dst"])
    assert read_edges_csv(edges).shape == (2, 2)
    data = panel_from_files(panel_file, edges_path=edges, L=2, K=1)
    assert data.network.dist[0, 2] == 2
    assert list(data.D) == [0, 1, 1]


def test_edge_outside_panel_is_schema_error(tmp_path):
    """An edge naming a unit the panel does not have is an input-file problem."""
    edges = write_csv(tmp_path / "edges.csv", [(0, 7)], ["src", "dst"])
    with pytest.raises(PanelSchemaError, match="edges.csv"):
        load_network(3, edges_path=edges)


def test_seventeen_digit_floats_reload_exactly(tmp_path):
    """Values written with 17 significant digits come back bit for bit."""
    values = np.random.default_rng(12).standard_normal(2000)
    frame = pd.DataFrame({"id": np.arange(2000), "z": values, "d": np.arange(2000) % 2, "y1": values, "y2": -values})
    path = tmp_path / "panel.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    reloaded = read_panel_csv(path)
    assert np.array_equal(reloaded["z"].to_numpy(), values)
    assert np.array_equal(reloaded["y2"].to_numpy(), -values)


def test_points_win_over_edges(tmp_path):
    """With both files given the points define the network."""
    points = write_csv(tmp_path / "points.csv", [(0, 0.0, 0.0), (1, 5.0, 5.0)], ["id", "x", "y"])
    edges = write_csv(tmp_path / "edges.csv", [(0, 1)], ["src", "dst"])
    net = load_network(2, points_path=points, edges_path=edges, radius=1.0)
    assert not net.is_adjacent(0, 1)


def test_points_size_mismatch(tmp_path):
    """The points file must cover every panel unit."""
    points = write_csv(tmp_path / "points.csv", [(0, 0.0, 0.0)], ["id", "x", "y"])
    with pytest.raises(PanelSchemaError):
        load_network(2, points_path=points)


def test_export_reload_is_exact(tmp_path):
    """Exported panels reload to the same floats, network and neighborhoods."""
    sim = generate_panel(SimConfig(n=60, area_side=6, seed=21, sample_neighbors=False))
    panel_path, points_path = export_simulated_panel(sim, tmp_path / "panel")
    header = panel_path.read_text().splitlines()[0]
    assert header == "id,x,y,z,d,y1,y2,s"

    cfg = sim.config
    data = panel_from_files(panel_path, points_path=points_path, L=cfg.L, K=cfg.K, radius=cfg.adjacency_radius, metric=cfg.metric)
    for name in ("z", "D", "Y1", "Y2"):
        assert np.array_equal(getattr(data, name), getattr(sim.panel, name))
    assert np.array_equal(data.network.dist, sim.panel.network.dist)
    assert np.array_equal(data.index.neighbors, sim.panel.index.neighbors)
