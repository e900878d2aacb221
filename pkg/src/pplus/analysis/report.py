"""CSV reports: one ``# schema`` comment line, a column header, then rows."""
from __future__ import annotations

import csv
import io

from ..fsutil import atomic_write


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def csv_text(schema: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {schema}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, schema: str, columns, rows):
    atomic_write(path, csv_text(schema, columns, rows).encode())


def read_csv(path) -> tuple:
    """-> (schema, list of dict rows)."""
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# schema: "):
            raise ValueError(f"{path}: missing schema line")
        return first[len("# schema: "):].strip(), list(csv.DictReader(fh))


def ratio_rows(report) -> list:
    return [(k, report.resolutions[k], v) for k, v in report.ratios.items()]


def sweep_rows(report) -> list:
    return [(r.index, r.subset, r.attribute, r.sim_p1, r.sim_p2, r.favors) for r in report.rows]


RATIO_COLUMNS = ("layer", "resolution", "ratio")
SWEEP_COLUMNS = ("index", "subset", "attribute", "sim_p1", "sim_p2", "favors")
