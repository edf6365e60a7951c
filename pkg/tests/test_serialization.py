"""
Tests for the JSON and CSV codecs and the exception documents.
"""

import math
from enum import Enum

import numpy as np
import pytest

from potential_bounds.core.exceptions import ConfigurationError, DomainError
from potential_bounds.core.serialization import (
    decode_float,
    decode_float_array,
    dumps,
    loads,
    read_json,
    to_jsonable,
    write_csv,
    write_json,
)


class Color(str, Enum):
    RED = "red"


@pytest.mark.unit
class TestJson:

    def test_float_tokens(self):
        assert to_jsonable([math.inf, -math.inf, math.nan, 1.5]) == ["inf", "-inf", None, 1.5]
        assert decode_float("inf") == math.inf
        assert decode_float("-inf") == -math.inf
        assert math.isnan(decode_float(None))
        with pytest.raises(ConfigurationError):
            decode_float("many")

    def test_numpy_and_enum_values(self):
        document = to_jsonable({"a": np.array([[1.0, np.inf]]), "b": np.int64(3), "c": Color.RED, "d": np.bool_(True)})
        assert document == {"a": [[1.0, "inf"]], "b": 3, "c": "red", "d": True}

    def test_decode_nested_array(self):
        array = decode_float_array([[1.0, "inf"], [None, 2.0]])
        assert array.shape == (2, 2)
        assert np.isinf(array[0, 1])
        assert np.isnan(array[1, 0])

    def test_file_round_trip(self, tmp_path):
        target = write_json(tmp_path / "nested" / "doc.json", {"value": math.inf})
        assert read_json(target) == {"value": "inf"}
        assert b"\n" in dumps({"x": 1})

    def test_bad_input(self, tmp_path):
        with pytest.raises(ConfigurationError):
            loads(b"{")
        with pytest.raises(ConfigurationError):
            read_json(tmp_path / "missing.json")


@pytest.mark.unit
class TestCsv:

    def test_writes_tokens_and_blanks(self, tmp_path):
        rows = [{"point": 0, "value": math.inf, "flag": None}, {"point": 1, "value": 0.5, "flag": Color.RED}]
        target = write_csv(tmp_path / "rows.csv", rows, ["point", "value", "flag"])
        lines = target.read_text(encoding="utf-8").splitlines()
        assert lines == ["point,value,flag", "0,inf,", "1,0.5,red"]

    def test_vector_cells(self, tmp_path):
        target = write_csv(tmp_path / "rows.csv", [{"x": np.array([0.5, 1.0])}], ["x"])
        assert target.read_text(encoding="utf-8").splitlines()[1] == "0.5 1.0"


@pytest.mark.unit
def test_exception_document():
    error = DomainError("bad b", error_code="B_RANGE", details={"b": 0.5})
    assert error.to_dict() == {"error": "B_RANGE", "message": "bad b", "details": {"b": 0.5}}
    assert DomainError("plain").to_dict()["error"] == "DomainError"
