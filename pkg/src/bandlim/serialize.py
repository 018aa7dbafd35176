"""JSON/CSV emission helpers shared by all report-producing modules.

Report numbers are rounded to 15 significant digits before JSON encoding so
that repeated runs (and runs with different thread counts) produce
byte-identical files.  Operator files are the exception: their CSV bodies use
shortest round-trip ``repr`` because they must reload bit-exactly.
"""

import json
import math

import numpy as np


def round15(x):
    """Round a float to 15 significant digits (report formatting contract)."""
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return x
    if x == 0.0:
        return 0.0
    return float(f"{x:.15g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return round15(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [round15(obj.real), round15(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def report_dumps(obj) -> str:
    """Serialize a report structure deterministically (sorted keys, 15 sig digits)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def write_report(path, obj):
    with open(path, "w") as fh:
        fh.write(report_dumps(obj))


def write_csv(path, header, rows):
    """Write a small CSV series; numbers formatted like report floats."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(f"{round15(v):.15g}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
