#!/usr/bin/env python3
"""Compare a study table.csv against a reference CSV, cell by cell.

Fractions use three binomial standard errors at the run's M; means use three
of the run's own standard errors (floored at 0.05).
"""
import csv
import math
import sys


def key(row, dims):
    return tuple(float(row[d]) if d != "weight_fn" else row[d] for d in dims)


def main(result_path, reference_path, kind):
    with open(reference_path) as f:
        ref_rows = list(csv.DictReader(f))
    dims = [c for c in ref_rows[0].keys() if c != "value"]
    ref = {key(r, dims): float(r["value"]) for r in ref_rows}
    with open(result_path) as f:
        ours = {key(r, dims): r for r in csv.DictReader(f)}
    failed = 0
    for k, target in sorted(ref.items()):
        row = ours.get(k)
        if row is None:
            print(f"MISSING {dict(zip(dims, k))}")
            failed += 1
            continue
        got, m = float(row["value"]), int(row["M"])
        if kind == "fraction":
            p = min(max(target, 0.5 / m), 1 - 0.5 / m)
            tol = 3 * math.sqrt(p * (1 - p) / m)
        else:
            tol = max(3 * float(row["se"]), 0.05)
        ok = abs(got - target) <= tol
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {dict(zip(dims, k))} got={got:.3f} ref={target:.2f} tol={tol:.3f}")
    print(f"{len(ref) - failed}/{len(ref)} cells within tolerance")
    return 1 if failed else 0


if __name__ == "__main__":
    if len(sys.argv) != 4 or sys.argv[3] not in ("fraction", "mean"):
        sys.exit("usage: compare_tables.py table.csv reference.csv fraction|mean")
    sys.exit(main(*sys.argv[1:]))
