import numpy as np
import pytest

from helpers import AIRCRAFT_A, AIRCRAFT_B, SCENARIO_WIND, scenario_grid, write_config
from windconflict.ensemble_io import WindGrid, generate_synthetic_ensemble, save_ensemble


@pytest.fixture
def small_grid():
    return WindGrid.regular(24.5, 29.5, 6, -19.5, -13.5, 7)


@pytest.fixture
def scenario_files(tmp_path):
    """A 300-member synthetic ensemble and a two-aircraft config next to it."""
    ens = generate_synthetic_ensemble(3, scenario_grid(), 300, SCENARIO_WIND)
    save_ensemble(ens, tmp_path / "ens.csv")
    cfg = write_config(tmp_path / "scenario.ini", ["ens.csv"], {"A": AIRCRAFT_A, "B": AIRCRAFT_B},
                       conflict={"probe_times": "1100, 1200", "condition_time": 1100,
                                 "condition_bound_nm": 15})
    return tmp_path, cfg


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
