"""
JSON and CSV codecs shared by every report and document format.

JSON cannot carry IEEE infinities, so +inf travels as the string "inf"
(and -inf as "-inf"); NaN travels as null. Decoding reverses the mapping.
"""

import csv
import dataclasses
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Sequence, Union

import numpy as np
import orjson

from .exceptions import ConfigurationError

PathLike = Union[str, Path]

INF_TOKEN = "inf"
NEG_INF_TOKEN = "-inf"


def encode_float(value: float) -> Any:
    """Map one float onto its JSON representation."""
    if math.isnan(value):
        return None
    if math.isinf(value):
        return INF_TOKEN if value > 0 else NEG_INF_TOKEN
    return value


def decode_float(value: Any) -> float:
    """Inverse of :func:`encode_float`."""
    if value is None:
        return math.nan
    if isinstance(value, str):
        token = value.strip().lower()
        if token in (INF_TOKEN, "+inf", "infinity"):
            return math.inf
        if token in (NEG_INF_TOKEN, "-infinity"):
            return -math.inf
        raise ConfigurationError(f"Unrecognized numeric token: {value!r}")
    return float(value)


def decode_float_array(values: Sequence[Any]) -> np.ndarray:
    """Decode a (possibly nested) list of JSON numbers into a float array."""
    if len(values) and isinstance(values[0], (list, tuple)):
        return np.array([[decode_float(v) for v in row] for row in values], dtype=float)
    return np.array([decode_float(v) for v in values], dtype=float)


def to_jsonable(obj: Any) -> Any:
    """Recursively convert numpy, dataclass and enum values to JSON-ready data."""
    if isinstance(obj, Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return to_jsonable(obj.to_dict())
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return encode_float(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Mapping):
        return {str(key): to_jsonable(value) for key, value in obj.items()}
    if isinstance(obj, (list, tuple, set, frozenset)):
        return [to_jsonable(item) for item in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj: Any) -> bytes:
    """Serialize to indented UTF-8 JSON bytes."""
    return orjson.dumps(to_jsonable(obj), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)


def loads(data: Union[bytes, str]) -> Any:
    try:
        return orjson.loads(data)
    except orjson.JSONDecodeError as e:
        raise ConfigurationError(f"Invalid JSON document: {e}") from e


def write_json(path: PathLike, obj: Any) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(dumps(obj))
    return target


def read_json(path: PathLike) -> Any:
    source = Path(path)
    if not source.exists():
        raise ConfigurationError(f"File not found: {source}")
    return loads(source.read_bytes())


def write_csv(path: PathLike, rows: Iterable[Dict[str, Any]], columns: List[str]) -> Path:
    """Write per-point rows as UTF-8 CSV; infinities are written as inf/-inf."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _csv_cell(row.get(key)) for key in columns})
    return target


def _csv_cell(value: Any) -> Any:
    value = to_jsonable(value)
    if value is None:
        return ""
    if isinstance(value, list):
        return " ".join(str(v) for v in value)
    return value
