"""Structured output: CSV with bit-exact floats, JSON sidecars.

CSV dialect is fixed: comma separators, header row, 17-significant-digit
floats, LF line endings.  17 digits round-trip IEEE doubles exactly, which
is what makes the byte-identical determinism contract testable.
"""

from __future__ import annotations

import csv
import json
import os

from . import __version__
from .torus import RNG_NAME


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def write_csv(path, header, rows) -> None:
    """rows are sequences; floats get the 17-digit treatment."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def reports_to_rows(reports):
    """Long-format rows (name, value, stderr, n_samples, metadata-json)."""
    rows = []
    for rep in reports:
        meta = json.dumps(rep.metadata, sort_keys=True, default=str)
        rows.append((rep.name, rep.value, rep.stderr, rep.n_samples, meta))
    return rows


def write_reports_csv(path, reports) -> None:
    write_csv(path, ("name", "value", "stderr", "n_samples", "metadata"), reports_to_rows(reports))


def write_json_summary(path, payload: dict, config: dict | None = None) -> None:
    """Sidecar JSON: results plus the fully resolved config and versions.

    Deliberately no timestamps: identical runs must produce identical bytes.
    """
    doc = {
        "artifact_version": __version__,
        "rng": RNG_NAME,
        "config": config,
    }
    doc.update(payload)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def resolve_output_dir(configured: str) -> str:
    """Environment override for the output directory only, nothing else."""
    out = os.environ.get("RIESZLAB_OUTPUT_DIR", configured)
    os.makedirs(out, exist_ok=True)
    return out
