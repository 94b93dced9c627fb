from __future__ import annotations
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable

import numpy as np
import pandas as pd

from .config import CSV_FLOAT_FORMAT

logger = logging.getLogger("switched_ioss")


def ensure_dir(path: os.PathLike | str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def to_csv(df: pd.DataFrame, path: os.PathLike | str) -> Path:
    # '.' decimal, 17 significant digits, LF endings: byte-identical on repeat runs
    path = Path(path)
    df.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote %s (%d rows, %d cols)", path, df.shape[0], df.shape[1])
    return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def save_json(obj: Dict[str, Any], path: os.PathLike | str) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")
    logger.info("Wrote JSON %s", path)
    return path


def load_json(path: os.PathLike | str) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())


def write_text_log(lines: Iterable[str], path: os.PathLike | str) -> Path:
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    logger.info("Wrote log %s", path)
    return path
