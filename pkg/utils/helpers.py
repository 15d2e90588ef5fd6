import json
import os
import tempfile

import numpy as np
import pandas as pd


def safe_get(dictionary: dict, key: str, default=None):
    """
    Safely fetches a key from a dictionary.
    """
    try:
        return dictionary.get(key, default)
    except Exception:
        return default


def to_builtin(value):
    """
    Recursively converts numpy scalars/arrays and tuples into plain
    JSON-ready Python values.
    """
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def atomic_write_text(path: str, text: str):
    """
    Writes next to the destination, then renames over it.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(to_builtin(obj), indent=2, sort_keys=True) + "\n"


def atomic_write_json(path: str, obj):
    atomic_write_text(path, dump_json(obj))


def atomic_write_csv(path: str, frame: pd.DataFrame):
    atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g"))
