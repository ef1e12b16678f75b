"""Deterministic CSV / JSON writers for the CLI outputs.

Floats are written with ``repr`` and JSON with sorted keys, so identical
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .functionals import CSV_HEADER

HOPFLAX_HEADER = ["scenario", "kind", "mesh", "resolution", "truncation", "a", "b",
                  "t", "q_t", "F", "bound", "ratio", "monotone_flag"]
TRANSPORT_HEADER = ["instance", "mesh", "resolution", "truncation", "cost", "seed",
                    "i", "j", "weight"]


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def deficit_rows(reports):
    return [r.row() for r in reports]


def _num(v):
    return "" if v is None else repr(float(v))


def hopflax_rows(label, mesh, report):
    meta = [label, report.kind, mesh.name, str(mesh.params.get("resolution", "")),
            _num(mesh.truncation), _num(report.a), _num(report.b)]
    return [meta + row for row in report.rows()]


def transport_rows(label, plan):
    inst = plan.instance
    M = inst.mesh
    meta = [label, M.name, str(M.params.get("resolution", "")), _num(M.truncation), inst.cost,
            str(inst.meta.get("seed", ""))]
    return [meta + [int(i), int(j), repr(float(w))]
            for i, j, w in zip(plan.rows, plan.cols, plan.weights)]


__all__ = ["CSV_HEADER", "HOPFLAX_HEADER", "TRANSPORT_HEADER", "write_json", "write_rows",
           "deficit_rows", "hopflax_rows", "transport_rows"]
