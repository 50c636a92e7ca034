"""Field export/import and run manifests.

Node order in every exported file is row-major with axis 1 fastest: the
value at grid index ``(j1, ..., j2n)`` sits at position
``j1 + m1*(j2 + m2*(j3 + ...))``.  Floats are written with ``repr`` so that
import reproduces the exported values bit for bit.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .geometry import GridDomain, ScalarField

NODE_ORDER = "row-major, axis 1 fastest"
FORMAT_TAG = "hgraph-field"


class ExportError(OSError):
    pass


def _ordered(values: np.ndarray) -> np.ndarray:
    return np.asarray(values).ravel(order="F")


def _from_ordered(flat, shape) -> np.ndarray:
    return np.asarray(flat, float).reshape(shape, order="F")


def _format_of(path: Path, fmt: str | None) -> str:
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"unsupported field format {fmt!r} (use csv or json)")
    return fmt


def field_to_json(f: ScalarField, name: str = "value") -> str:
    doc = {
        "format": FORMAT_TAG,
        "version": 1,
        "name": name,
        "node_order": NODE_ORDER,
        "domain": f.domain.spec(),
        "values": [float(x) for x in _ordered(f.values)],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def field_from_json(text: str) -> ScalarField:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_TAG:
        raise ValueError("not a field file (missing format tag)")
    domain = GridDomain.from_spec(doc["domain"])
    values = doc["values"]
    if len(values) != domain.size:
        raise ValueError(f"field file has {len(values)} values for {domain.size} nodes")
    return ScalarField(domain, _from_ordered(values, domain.shape))


def export_field(f: ScalarField, path, fmt: str | None = None, name: str = "value") -> Path:
    """Write ``f`` as CSV (coordinates + value per node) or structured JSON."""
    path = Path(path)
    fmt = _format_of(path, fmt)
    try:
        if fmt == "json":
            path.write_text(field_to_json(f, name), encoding="utf-8")
        else:
            d = f.domain
            cols = [_ordered(c) for c in d.coords] + [_ordered(f.values)]
            with path.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)  # default dialect: comma, minimal quoting, CRLF
                w.writerow([f"x{k}" for k in range(1, d.dim + 1)] + [name])
                for row in zip(*cols):
                    w.writerow([repr(float(x)) for x in row])
    except OSError as exc:
        raise ExportError(f"cannot write field to {path}: {exc}") from exc
    return path


def import_field(path, fmt: str | None = None) -> ScalarField:
    """Inverse of :func:`export_field`; the grid is rebuilt from the coordinates for CSV."""
    path = Path(path)
    fmt = _format_of(path, fmt)
    if fmt == "json":
        return field_from_json(path.read_text(encoding="utf-8"))
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    dim = len(header) - 1
    if dim < 2 or dim % 2:
        raise ValueError(f"CSV header {header} does not describe a 2n-dimensional grid")
    data = np.array(body, dtype=float)
    coords = data[:, :dim]
    lo, hi = coords.min(axis=0), coords.max(axis=0)
    m = [len(np.unique(coords[:, k])) for k in range(dim)]
    domain = GridDomain(dim // 2, lo, hi, m)
    if data.shape[0] != domain.size:
        raise ValueError(f"CSV has {data.shape[0]} rows for a grid of {domain.size} nodes")
    return ScalarField(domain, _from_ordered(data[:, dim], domain.shape))


# --------------------------------------------------------------------------
# manifests


def to_jsonable(x):
    if isinstance(x, dict):
        return {str(k): to_jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [to_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [to_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    return x


@dataclass
class RunManifest:
    command: str
    config: dict
    code_version: str
    grid: dict | None = None
    conventions: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    basin: dict | None = None
    outputs: list = field(default_factory=list)

    def verdict_section(self) -> str:
        """Canonical serialization of the verdicts (no timings)."""
        return json.dumps(to_jsonable(self.verdicts), sort_keys=True, separators=(",", ":"))

    def to_json(self) -> str:
        return json.dumps(to_jsonable(asdict(self)), sort_keys=True, separators=(",", ":"))


def append_manifest(run_dir, manifest: RunManifest) -> Path:
    """Append one line to ``<run_dir>/manifest.jsonl``; earlier lines are never rewritten."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    path = run_dir / "manifest.jsonl"
    with path.open("a", encoding="utf-8") as fh:
        fh.write(manifest.to_json() + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    return path


def read_manifest(run_dir) -> list[dict]:
    path = Path(run_dir) / "manifest.jsonl"
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]
