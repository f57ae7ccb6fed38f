"""CSV / JSON serialization with reproducible float formatting.

Reports are written with 17 significant digits and sorted keys so that a
given config and seed produce byte-identical files.
"""

import json
import os

import numpy as np

from .radial import RadialField, RadialGrid

FLOAT_FMT = "%.17g"


def _jsonable(obj):
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(x) for x in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    return obj


def dump_json(payload, path):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def field_to_csv(field, path, header="r,value"):
    """Two-column CSV (r, value) with a one-line header."""
    data = np.column_stack([field.grid.nodes, field.values])
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",",
               header=header, comments="")


def field_from_csv(path, grid=None):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    r, vals = data[:, 0], data[:, 1]
    if grid is None:
        n = r.size
        grid = RadialGrid(n=n, r_max=float(r[-1]))
    if not np.allclose(grid.nodes, r, rtol=0, atol=1e-12 * grid.r_max):
        raise ValueError(f"{path} nodes do not match the grid")
    return RadialField(grid, vals)


def table_to_csv(columns, names, path):
    """Columns of equal length -> CSV with named header."""
    data = np.column_stack(columns)
    np.savetxt(path, data, fmt=FLOAT_FMT, delimiter=",",
               header=",".join(names), comments="")


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
