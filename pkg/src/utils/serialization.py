"""Conversion of numpy-bearing structures into JSON-ready values."""
from typing import Any, Dict, List

import numpy as np


def to_jsonable(value: Any) -> Any:
    """
    Recursively convert numpy arrays and scalars inside dicts, lists and tuples.

    Args:
        value: Arbitrary nested structure

    Returns:
        Structure made of dicts, lists, floats, ints, bools, strings and None
    """
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return jsonable_dict(value)
    if isinstance(value, (list, tuple)):
        return jsonable_list(list(value))
    return value


def jsonable_dict(data: Dict[str, Any]) -> Dict[str, Any]:
    return {str(key): to_jsonable(item) for key, item in data.items()}


def jsonable_list(data: List[Any]) -> List[Any]:
    return [to_jsonable(item) for item in data]


def as_matrix(value: Any, columns: int) -> np.ndarray:
    """Rebuild a 2-D array from nested lists, keeping the column count of empty matrices."""
    array = np.asarray(value, dtype=float)
    if array.size == 0:
        return np.zeros((0, columns))
    return array.reshape(-1, columns)
