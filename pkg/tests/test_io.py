from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pytest

from artifact.io import read_csv, read_json, write_csv, write_json


def test_csv_round_trip_17_digits(tmp_path):
    x = np.array([1 / 3, math.pi * 1e-12, -2.5e300])
    p = write_csv(tmp_path / "a" / "x.csv", {"x": x, "n": [1, 2, 3], "flag": [True, False, None]})
    cols = read_csv(p)
    np.testing.assert_array_equal(cols["x"], x)
    assert cols["n"].tolist() == [1, 2, 3]
    assert cols["flag"][:2].tolist() == [1, 0] and math.isnan(cols["flag"][2])


def test_csv_strings_and_length_check(tmp_path):
    cols = read_csv(write_csv(tmp_path / "s.csv", {"name": ["a", "b"], "v": [1.5, 2.5]}))
    assert cols["name"].tolist() == ["a", "b"]
    with pytest.raises(ValueError):
        write_csv(tmp_path / "bad.csv", {"a": [1, 2], "b": [1]})


@dataclass
class _Rec:
    a: float
    b: np.ndarray


def test_json_handles_numpy_nan_and_dataclasses(tmp_path):
    obj = {"z": np.float64(1.5), "arr": np.arange(3), "nan": float("nan"), "inf": np.inf,
           "rec": _Rec(2.0, np.ones(2)), "c": 1 + 2j}
    d = read_json(write_json(tmp_path / "o.json", obj))
    assert d == {"z": 1.5, "arr": [0, 1, 2], "nan": None, "inf": None,
                 "rec": {"a": 2.0, "b": [1.0, 1.0]}, "c": [1.0, 2.0]}
    assert (tmp_path / "o.json").read_text().index('"arr"') < (tmp_path / "o.json").read_text().index('"z"')


def test_json_rejects_unknown(tmp_path):
    with pytest.raises(TypeError):
        write_json(tmp_path / "x.json", {"f": object()})
