import csv
import json
import math

import numpy as np

from jpy_dale.domain.dataio.formats import read_f32
from jpy_dale.domain.segmodel.checkpoint import load_checkpoint
from jpy_dale.domain.trainer.logbook import COLUMNS, RunLog, format_value


def test_format_value():
    assert format_value(True) == "1"
    assert format_value(7) == "7"
    assert format_value(float("nan")) == "nan"
    assert format_value(0.1) == "0.1"
    assert format_value("fuzzy") == "fuzzy"


def test_rows_fill_missing_columns_with_nan(tmp_path):
    log = RunLog(tmp_path)
    log.append({"t": 1, "phase": "nonfuzzy", "loss": 0.5})
    log.close()

    with (tmp_path / "metrics.csv").open() as f:
        rows = list(csv.DictReader(f))

    assert tuple(rows[0]) == COLUMNS
    assert rows[0]["phase"] == "nonfuzzy"
    assert math.isnan(float(rows[0]["Dice"]))


def test_append_mode_keeps_single_header(tmp_path):
    first = RunLog(tmp_path)
    first.append({"t": 1})
    first.close()

    second = RunLog(tmp_path, append=True)
    second.append({"t": 2})
    second.close()

    lines = (tmp_path / "metrics.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("t,phase,loss")


def test_artifacts_land_in_subdirectories(tmp_path):
    log = RunLog(tmp_path)

    omega_path = log.write_omega(3, 1, np.full((4, 4), 0.5))
    calib_path = log.write_calib(3, {"t": 3, "L_W": 0.25})
    ckpt_path = log.write_checkpoint(3, {"a": np.ones(2)}, {"t": 3})
    log.close()

    assert omega_path == tmp_path / "omega" / "t0003_img0001.dlf1"
    np.testing.assert_array_equal(read_f32(omega_path), np.full((4, 4), 0.5))
    assert json.loads(calib_path.read_text()) == {"t": 3, "L_W": 0.25}
    assert ckpt_path.name == "t0003.ckpt"
    assert load_checkpoint(ckpt_path)[1] == {"t": 3}
