"""CSV and JSON artifacts.  Numbers carry 17 significant digits and lines end in '\\n'."""
import csv
import json
from pathlib import Path
from typing import Any, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel

from src.divisor import DivisorReport
from src.germ import Branches
from src.spectral import StepFunction, default_lambda_grid

PathLike = Union[str, Path]


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _write_rows(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow(header)
        writer.writerows(rows)
    return path


def write_sdf_csv(path: PathLike, F: StepFunction, grid: Optional[Sequence[float]] = None) -> Path:
    grid = default_lambda_grid() if grid is None else np.asarray(grid, dtype=float)
    values = F(grid)
    return _write_rows(path, ["lambda", "F"], ([fmt(l), fmt(v)] for l, v in zip(grid, values)))


def write_divisor_csv(path: PathLike, report: DivisorReport, all_cells: bool = False) -> Path:
    """One row per flagged cell (or per cell): index, coordinates, min singular value, flag."""
    space = report.space
    cells = np.arange(space.size) if all_cells else report.flagged_cells
    header = ["cell"] + [f"x{k + 1}" for k in range(space.dim)] + ["min_singular", "flag"]
    rows = ([str(int(j))] + [fmt(c) for c in space.points[j]]
            + [fmt(report.min_singular[j]), str(int(report.mask[j]))] for j in cells)
    return _write_rows(path, header, rows)


def write_mask_grid(path: PathLike, report: DivisorReport) -> Path:
    """The flag mask laid out on the grid; rows run along the last axis."""
    shape = report.space.shape
    grid = report.mask.reshape(-1, shape[-1]).astype(int)
    return _write_rows(path, [], ([str(v) for v in row] for row in grid))


def write_branches_csv(path: PathLike, branches: Branches) -> Path:
    header = ["t"] + [f"lambda_{b + 1}" for b in range(branches.count)]
    rows = ([fmt(t)] + [fmt(v) for v in vals] for t, vals in zip(branches.t, branches.values))
    return _write_rows(path, header, rows)


def write_table_csv(path: PathLike, records: List[BaseModel]) -> Path:
    if not records:
        return _write_rows(path, [], [])
    header = list(type(records[0]).model_fields)
    rows = []
    for r in records:
        row = []
        for key in header:
            v = getattr(r, key)
            row.append(fmt(v) if isinstance(v, float) else str(v))
        rows.append(row)
    return _write_rows(path, header, rows)


def to_jsonable(payload: Any) -> Any:
    if isinstance(payload, BaseModel):
        return payload.model_dump()
    return payload


def write_json(path: PathLike, payload: Any) -> Path:
    """Deterministic JSON; infinities and NaNs are written as Infinity / NaN."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(to_jsonable(payload), indent=2, allow_nan=True, default=str)
    path.write_text(text + "\n", encoding="utf-8", newline="\n")
    return path
