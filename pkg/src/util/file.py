from pathlib import Path
import hashlib
import json
import platform
import numpy as np
import pandas as pd
from util.io import IOManager

io_manager = IOManager("[Util]")

# ---------- PATH CONFIG ----------
BASE_DIR = Path("C:/CFOIE_output") if platform.system() == "Windows" else Path("CFOIE_output")
CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"
TABLE_FLOAT_FORMAT = "%.5e"


def _jsonable(obj):
    """json.dump fallback for numpy scalars/arrays, complex numbers and paths."""
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) if not isinstance(v, (int, float)) else v for v in obj.tolist()]
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def canonical_json(data):
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_jsonable)


def config_hash(data):
    """First 12 hex characters of the SHA-256 of the sorted-key JSON of a config."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:12]


def run_directory(out=None, default=BASE_DIR):
    """
    Create (if needed) and return the output directory of a run.
    Inputs:
    - out: explicit directory (e.g. from --out) or None
    - default: directory used when out is None
    Outputs:
    - Path of the existing directory
    """
    path = Path(out) if out is not None else Path(default)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_table(table: pd.DataFrame, path):
    """Tab-separated table, floats in scientific notation with 6 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, sep="\t", index=False, float_format=TABLE_FLOAT_FORMAT, na_rep="NaN")
    io_manager.write_debug(f"Wrote {len(table)} rows to {path}")
    return path


def write_json(data, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable))
    tmp.replace(path)
    io_manager.write_debug(f"Wrote {path}")
    return path
