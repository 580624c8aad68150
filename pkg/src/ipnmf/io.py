"""CSV matrix files, class-pool files and JSON documents.

Matrix files are plain comma-separated floats written with the shortest
representation that round-trips, optionally preceded by ``#`` comment lines
such as ``# rows=pixel-major, row=(p-1)*M+m``.
"""

import hashlib
import json
import os
import re

import numpy as np

from .synth import ClassPool

STACKED_ORDER = "rows=pixel-major, row=(p-1)*M+m"


def format_matrix(A, header=()) -> str:
    A = np.atleast_2d(np.asarray(A))
    lines = [f"# {h}" for h in header]
    if A.dtype.kind in "iub":
        lines += [",".join(str(int(v)) for v in row) for row in A]
    else:
        lines += [",".join(repr(float(v)) for v in row) for row in A]
    return "\n".join(lines) + "\n"


def write_matrix(path, A, header=()):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_matrix(A, header))


def read_matrix(path) -> np.ndarray:
    """Read a CSV matrix, ignoring ``#`` lines. Always returns a 2-D array."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: not a numeric row") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing lengths")
    return np.array(rows, dtype=float)


def read_header(path) -> dict:
    """``key=value`` pairs found in the leading comment lines."""
    found = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for key, value in re.findall(r"(\w+)=([^\s,]+)", line):
                found.setdefault(key, value)
    return found


def write_pool(path, pool: ClassPool):
    write_matrix(path, pool.spectra, [f"class={pool.class_label} bands={pool.n_bands}"])


def read_pool(path) -> ClassPool:
    meta = read_header(path)
    spectra = read_matrix(path)
    if "bands" in meta and int(meta["bands"]) != spectra.shape[1]:
        raise ValueError(f"{path}: header says {meta['bands']} bands, found {spectra.shape[1]}")
    label = meta.get("class", os.path.splitext(os.path.basename(path))[0])
    return ClassPool(spectra=spectra, class_label=label)


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dump_json(obj))


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
