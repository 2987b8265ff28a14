"""
Tests for the reproduction sweeps on small grids.
"""
import numpy as np
import pytest

from fluxemd.exceptions import ConfigurationError
from fluxemd.tables import STATUS_FAILED, STATUS_OK, relative_error, render_table, run_table, write_table


def test_unknown_table_is_rejected():
    with pytest.raises(ConfigurationError):
        run_table("t9")


def test_dirac_table_layout():
    frame = run_table("t1", grid_sizes=(10,), max_iters=20000)
    assert list(frame.columns) == ["example", "N", "time", "iterations", "relative_error", "status"]
    assert frame["example"].tolist() == ["dirac_pair", "dirac_split2", "dirac_split4"]
    assert frame["N"].tolist() == [100, 100, 100]
    assert (frame["status"] == STATUS_OK).all()
    assert (frame["relative_error"] < 0.5).all()


def test_failed_cells_are_kept():
    frame = run_table("t3", grid_sizes=(10, 20), max_iters=3)
    assert frame["N"].tolist() == [100, 400]
    assert (frame["status"] == STATUS_FAILED).all()
    assert frame["time_l1"].isna().all()
    assert "FAILED" in render_table(frame)


def test_epsilon_table_uses_given_sweep():
    frame = run_table("t5", grid_sizes=(10,), epsilons=(0.1, 0.01), max_iters=5)
    assert frame["epsilon"].tolist() == [0.1, 0.01]
    assert np.isnan(frame["relative_error"]).all()


def test_write_table(tmp_path):
    frame = run_table("t4", grid_sizes=(10,), max_iters=2)
    path = write_table(frame, tmp_path / "tables" / "t4.txt")
    assert path.read_text() == render_table(frame) + "\n"


def test_relative_error():
    assert relative_error(0.8024, 0.8) == pytest.approx(0.003)
