"""Report records and writers: JSON-lines per check, CSV for ladders.

Every record carries a check id, a plain-language claim, the measured
constants, the tolerance it was judged at, the verdict, the wall time,
and the seed. Identical (config, seed) runs reproduce every field except
the wall time byte for byte; canonical_jsonl drops the timing fields so
that invariant can be asserted directly.
"""

import csv
import io
import json
import math

import numpy as np

TIMING_FIELDS = ("runtime",)


def make_record(check, claim, measured, tolerance, passed, seed,
                runtime=0.0, **extra) -> dict:
    rec = {
        "check": str(check),
        "claim": str(claim),
        "measured": measured,
        "tolerance": tolerance,
        "passed": bool(passed),
        "seed": int(seed),
        "runtime": float(runtime),
    }
    rec.update(extra)
    return rec


def json_safe(value):
    """Plain-data copy that json can serialize deterministically.

    Numpy scalars and arrays become Python numbers and lists; the three
    non-finite floats become strings, since JSON has no spelling for them
    and allow_nan output is not portable.
    """
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, complex):
        return [json_safe(value.real), json_safe(value.imag)]
    return value


def record_line(record, include_timing=True) -> str:
    rec = json_safe(record)
    if not include_timing:
        rec = {k: v for k, v in rec.items() if k not in TIMING_FIELDS}
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def canonical_jsonl(records) -> bytes:
    """Timing-free JSON-lines payload: the reproducibility surface."""
    lines = [record_line(r, include_timing=False) for r in records]
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def write_jsonl(records, path) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(record_line(rec) + "\n")
    return str(path)


def write_csv(rows, path, fieldnames=None) -> str:
    """Ladder summary: one flat dict per row, shared header."""
    rows = [json_safe(r) for r in rows]
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, extrasaction="raise",
                            lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return str(path)
