"""CSV ingestion and run-artifact emission.

Input data is long-format CSV with header ``t,y,x1,...,xp``: one row per
observation, rows sorted by the positive integer time index t, so a
time-varying number of observations per step is representable.  Output
files all start with a ``# run <hash>`` comment tying them to the
manifest, which records the resolved configuration, the seed, package
versions, and a sha256 per output file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import sys
from pathlib import Path
from typing import Union

import numpy as np

from .errors import DomainError
from .map_em import RegressionData

__all__ = ["ParseError", "load_data", "write_table", "write_manifest", "verify_dir"]

_MANIFEST_NAME = "manifest.json"


class ParseError(DomainError):
    """Malformed input file; message carries the offending line number."""


def load_data(path: Union[str, Path]) -> RegressionData:
    """Read long-format CSV into per-time (y_t, X_t) blocks."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        p = len(header) - 2
        if p < 1 or header[:2] != ["t", "y"] or header[2:] != [
            f"x{j + 1}" for j in range(p)
        ]:
            raise ParseError(
                f"{path}: line 1: header must be 't,y,x1,...,xp', got {','.join(header)}"
            )
        rows: list[tuple[int, float, list[float]]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 2:
                raise ParseError(
                    f"{path}: line {lineno}: expected {p + 2} cells, got {len(row)}"
                )
            try:
                t = int(row[0])
                y = float(row[1])
                xs = [float(c) for c in row[2:]]
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: non-numeric cell ({exc})") from None
            if t < 1:
                raise ParseError(f"{path}: line {lineno}: t must be >= 1, got {t}")
            if rows and t < rows[-1][0]:
                raise ParseError(
                    f"{path}: line {lineno}: rows must be sorted by t"
                )
            rows.append((t, y, xs))
    if not rows:
        raise ParseError(f"{path}: no data rows")
    ys, Xs = [], []
    t_values = sorted({r[0] for r in rows})
    if t_values != list(range(1, len(t_values) + 1)):
        raise ParseError(f"{path}: time indices must cover 1..T without gaps")
    for t in t_values:
        block = [r for r in rows if r[0] == t]
        ys.append(np.array([r[1] for r in block]))
        Xs.append(np.array([r[2] for r in block]))
    return RegressionData(ys, Xs)


def _hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_table(
    path: Path, run_id: str, header: list[str], rows: list[list[str]]
) -> None:
    """Write a CSV with the run-hash comment line first."""
    lines = [f"# run {run_id}", ",".join(header)]
    lines.extend(",".join(cells) for cells in rows)
    path.write_text("\n".join(lines) + "\n")


def write_manifest(out_dir: Path, run_id: str, config: dict, outputs: list[Path]) -> Path:
    """Record the resolved config, versions, and per-file hashes."""
    import scipy

    from . import __version__

    manifest = {
        "run_id": run_id,
        "config": config,
        "versions": {
            "python": sys.version.split()[0],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "dynsparse": __version__,
        },
        "outputs": {
            p.name: _hash_bytes(p.read_bytes()) for p in sorted(outputs)
        },
    }
    path = out_dir / _MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def verify_dir(out_dir: Union[str, Path]) -> list[str]:
    """Check every manifest-listed file; return a list of problems."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / _MANIFEST_NAME
    if not manifest_path.exists():
        return [f"missing {_MANIFEST_NAME} in {out_dir}"]
    manifest = json.loads(manifest_path.read_text())
    problems = []
    run_id = manifest.get("run_id", "")
    for name, digest in manifest.get("outputs", {}).items():
        path = out_dir / name
        if not path.exists():
            problems.append(f"{name}: listed in manifest but missing")
            continue
        data = path.read_bytes()
        if _hash_bytes(data) != digest:
            problems.append(f"{name}: content hash does not match manifest")
        first = data.split(b"\n", 1)[0].decode(errors="replace")
        if first != f"# run {run_id}":
            problems.append(f"{name}: run header does not match manifest run_id")
    return problems
