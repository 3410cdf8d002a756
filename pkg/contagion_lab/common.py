from __future__ import annotations

import json
import os
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Optional, TypeVar

import pandas as pd

from contagion_lab.errors import ParseError, SchemaError

T = TypeVar("T")
R = TypeVar("R")

JOBS_ENV = "CONTAGION_LAB_JOBS"
MASK64 = (1 << 64) - 1


def resolve_jobs(jobs: Optional[int] = None) -> int:
    if jobs is not None and jobs > 0:
        return jobs
    env = os.environ.get(JOBS_ENV, "").strip()
    if env.isdigit() and int(env) > 0:
        return int(env)
    return os.cpu_count() or 1


def parallel_map(
    func: Callable[[T], R], items: Iterable[T], jobs: Optional[int] = None
) -> list[R]:
    """
    Apply `func` to every item and return the results in submission order,
    whatever order the workers finish in.
    """
    items = list(items)
    workers = min(resolve_jobs(jobs), len(items))
    if workers <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(func, item) for item in items]
    return [future.result() for future in futures]


def mix_seed(master_seed: int, index: int) -> int:
    """
    SplitMix64 finaliser over (master_seed, index). Gives each ensemble
    member an independent 64-bit seed that depends only on its position.
    """
    x = (master_seed * 0x9E3779B97F4A7C15 + index + 1) & MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & MASK64
    x ^= x >> 31
    return x


def safe_mkdir(path: str | os.PathLike[str]) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path: str | os.PathLike[str], data: dict[str, Any]) -> None:
    text = json.dumps(data, indent=2, ensure_ascii=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def read_json(path: str | os.PathLike[str]) -> dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except UnicodeDecodeError:
        msg = f"{path.name}: not UTF-8 text"
        raise ParseError(msg) from None
    except json.JSONDecodeError as e:
        msg = f"{path.name}: invalid JSON ({e.msg} at line {e.lineno})"
        raise ParseError(msg) from None
    if not isinstance(data, dict):
        msg = f"{path.name}: expected a JSON object"
        raise SchemaError(msg)
    return data


def read_table(path: str | os.PathLike[str], columns: Iterable[str]) -> pd.DataFrame:
    "A CSV with exactly `columns` as header, every cell kept as text."
    path = Path(path)
    columns = list(columns)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except UnicodeDecodeError:
        msg = f"{path.name}: not UTF-8 text"
        raise ParseError(msg) from None
    except pd.errors.EmptyDataError:
        msg = f"{path.name}: empty file, expected header {','.join(columns)}"
        raise SchemaError(msg) from None
    except pd.errors.ParserError as e:
        msg = f"{path.name}: malformed CSV ({e})"
        raise SchemaError(msg) from None
    if list(frame.columns) != columns:
        msg = f"{path.name}: expected header {','.join(columns)}, got {','.join(map(str, frame.columns))}"
        raise SchemaError(msg)
    # short rows come back as NaN
    return frame.fillna("")


def parse_cell(convert: Callable[[str], R], text: str, column: str, row: int) -> R:
    "`row` is the 1-based data row."
    try:
        return convert(text.strip())
    except (ValueError, ArithmeticError):
        msg = f"row {row}: cannot parse {column}={text!r}"
        raise ParseError(msg) from None


def format_float(value: float) -> str:
    "Shortest text that parses back to the same float."
    return repr(float(value))
