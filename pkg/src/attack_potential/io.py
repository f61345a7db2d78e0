"""Atomic, deterministic writers for CSV and JSON outputs."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def header_lines(meta: Mapping[str, Any]) -> str:
    return "".join(f"# {key}: {value}\n" for key, value in meta.items())


def csv_text(header: Sequence[str], rows: Iterable[Sequence[Any]], meta: Mapping[str, Any] | None = None) -> str:
    buf = io.StringIO()
    if meta:
        buf.write(header_lines(meta))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def write_csv(
    path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]], meta: Mapping[str, Any] | None = None
) -> Path:
    return atomic_write_text(path, csv_text(header, rows, meta))


def write_json(path: str | Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    """Read a CSV written by :func:`write_csv`, skipping ``#`` header comments."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))
