"""Report persistence: atomic JSON and CSV writers and matching readers."""
from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from ._version import __version__
from .errors import IoFailure

FORMATS = ("json", "csv")
META_KEYS = ("config_hash", "seed", "tol", "tool_version")


def to_jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def envelope(experiment: str, config, result: dict, table: dict = None) -> dict:
    """Standard report layout with the reproducibility fields."""
    rep = {
        "experiment": experiment,
        "config_hash": config.hash(),
        "seed": config.seed,
        "tol": config.tol,
        "tool_version": __version__,
        "deterministic": config.deterministic,
        "config": config.to_dict(),
        "result": to_jsonable(result),
    }
    if table is not None:
        rep["table"] = to_jsonable(table)
    return rep


def dumps_json(report: dict) -> str:
    return json.dumps(to_jsonable(report), sort_keys=True, indent=2) + "\n"


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps_csv(columns: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(columns))
    for row in rows:
        if len(row) != len(columns):
            raise ValueError("row length does not match the header")
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    except OSError as exc:
        raise IoFailure(str(path), exc.strerror or str(exc)) from None
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise IoFailure(str(path), exc.strerror or str(exc)) from None


def write_report(report: dict, path, format: str = "json") -> Path:
    """Write ``report`` to ``path`` atomically (temp file, then rename).

    ``csv`` writes ``report["table"]`` (``columns`` and ``rows``) and puts the
    remaining fields next to it in ``<path>.meta.json`` so the table keeps a
    plain header row.
    """
    if format not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    path = Path(path)
    if format == "json":
        _atomic_write(path, dumps_json(report))
        return path
    table = report.get("table")
    if table is None:
        raise ValueError("this report has no table to write as CSV")
    _atomic_write(path, dumps_csv(table["columns"], table["rows"]))
    meta = {k: v for k, v in report.items() if k != "table"}
    _atomic_write(path.with_name(path.name + ".meta.json"), dumps_json(meta))
    return path


def _parse_cell(s: str):
    if s in ("true", "false"):
        return s == "true"
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_report(path, format: str = None) -> Dict[str, Any]:
    """Inverse of :func:`write_report`; CSV gives ``{"columns", "rows"}``."""
    path = Path(path)
    format = format or ("csv" if path.suffix == ".csv" else "json")
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoFailure(str(path), exc.strerror or str(exc)) from None
    if format == "json":
        return json.loads(text)
    rows: List[list] = list(csv.reader(_io.StringIO(text)))
    return {"columns": rows[0], "rows": [[_parse_cell(c) for c in r] for r in rows[1:]]}
