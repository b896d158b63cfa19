"""core/jsonio.py"""

import hashlib
import os

import numpy as np
import ujson

from core.exceptions import ScenarioError


def to_jsonable(value):
    """Convert numpy containers and scalars into plain Python values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {key: to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    return value


def read_json(path):
    if not os.path.exists(path):
        raise ScenarioError(f"File not found: {path}")
    with open(path, "r") as f:
        try:
            return ujson.load(f)
        except ValueError as e:
            raise ScenarioError(f"Invalid JSON in {path}: {e}") from e


def write_json(data, path):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        f.write(dumps(data))
        f.write("\n")


def dumps(data):
    return ujson.dumps(
        to_jsonable(data), indent=2, escape_forward_slashes=False
    )


def digest(data):
    """SHA-256 of the canonical JSON form, for matching weights and bounds across runs."""
    text = ujson.dumps(to_jsonable(data), sort_keys=True, escape_forward_slashes=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
