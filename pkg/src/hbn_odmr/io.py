"""CSV ingestion and emission.

Files are UTF-8 with a mandatory header row.  Columns are looked up by
header name, so optional columns may appear in any order.  Numbers are
written with 9 significant digits, which makes repeated runs byte-identical
and lets every emitted file be read back losslessly at that precision.
"""

from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NumericParse, SchemaMismatch

# kind -> (required columns, optional columns, text columns)
SCHEMAS = {
    "spectrum": (("freq_GHz", "contrast"), (), ()),
    "freq-field": (("B_gauss", "freq_GHz"), ("branch", "sigma_GHz"), ("branch",)),
    "trace": (("t_ns", "pl_arb"), (), ()),
    "scan": (("B_gauss", "branch", "freq_GHz"), (), ("branch",)),
    "mixing": (("B_gauss", "theta_deg", "level", "alpha2", "beta2", "gamma2"), (), ("level",)),
    "contrast": (("B_gauss", "theta_deg", "contrast_norm"), (), ()),
    "pl": (("B_gauss", "theta_deg", "pl_arb"), (), ()),
    "params": (("name", "value", "stderr"), (), ("name",)),
    "peaks": (("center_GHz", "amplitude", "fwhm_MHz"), (), ()),
    "ratios": (("B_gauss", "ratio_es", "ratio_gs"), (), ()),
}


@dataclass(frozen=True)
class Dataset:
    kind: str
    header: tuple
    rows: tuple
    source: str = "<memory>"

    def __len__(self):
        return len(self.rows)

    def column(self, name: str):
        if name not in self.header:
            raise KeyError(name)
        k = self.header.index(name)
        values = [r[k] for r in self.rows]
        if name in SCHEMAS[self.kind][2]:
            return values
        return np.array(values, dtype=float)


def format_value(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return f"{x:.9g}" if x != 0 else "0"
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return str(x)


def emit_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    text = emit_csv(header, rows)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")


def parse_csv(text: str, kind: str, source: str = "<string>") -> Dataset:
    if kind not in SCHEMAS:
        raise SchemaMismatch(f"unknown dataset kind {kind!r}; expected one of {sorted(SCHEMAS)}")
    required, optional, text_cols = SCHEMAS[kind]
    header = None
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cells = [c.strip() for c in next(csv.reader([line]))]
        if header is None:
            header = tuple(cells)
            missing = [c for c in required if c not in header]
            extra = [c for c in header if c not in required + optional]
            if missing or extra or len(set(header)) != len(header):
                raise SchemaMismatch(
                    f"{source}:{lineno}: header {list(header)} does not match {kind} "
                    f"(required {list(required)}, optional {list(optional)})"
                )
            continue
        if len(cells) != len(header):
            raise SchemaMismatch(f"{source}:{lineno}: {len(cells)} columns, header has {len(header)}")
        row = []
        for col, (name, cell) in enumerate(zip(header, cells), start=1):
            if name in text_cols:
                row.append(cell or None)
                continue
            if cell == "" and name in optional:
                row.append(math.nan)
                continue
            try:
                row.append(float(cell))
            except ValueError:
                raise NumericParse(f"{source}:{lineno}:{col}: {name} = {cell!r} is not a number") from None
        rows.append(tuple(row))
    if header is None:
        raise SchemaMismatch(f"{source}: no header row")
    return Dataset(kind, header, tuple(rows), source)


def ingest_csv(path, kind: str) -> Dataset:
    path = Path(path)
    return parse_csv(path.read_text(encoding="utf-8"), kind, str(path))


def write_report(path, items) -> None:
    """Structured ``key = value`` text report (``None`` writes to stderr)."""
    text = "".join(f"{k} = {format_value(v)}\n" for k, v in items)
    if path is None:
        sys.stderr.write(text)
    elif str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8", newline="")
