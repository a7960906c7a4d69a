#!/usr/bin/env python3
"""Convert the raw UCI Adult files into one headered CSV.

usage: prepare_adult.py RAW_DIR OUT_CSV

RAW_DIR must contain adult.data and adult.test as distributed by UCI.
Rows are copied verbatim (whitespace-trimmed); filtering is left to the schema.
"""
import csv
import sys
from pathlib import Path

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num", "marital-status",
    "occupation", "relationship", "race", "sex", "capital-gain", "capital-loss",
    "hours-per-week", "native-country", "income",
]


def rows(path):
    with open(path, newline="") as f:
        for record in csv.reader(f):
            record = [c.strip() for c in record]
            # adult.test opens with a "|1x3 Cross validator" line; blank lines close both files
            if len(record) != len(COLUMNS):
                continue
            yield record


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    raw, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(out, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(COLUMNS)
        for name in ("adult.data", "adult.test"):
            for record in rows(raw / name):
                w.writerow(record)
                n += 1
    print(f"wrote {n} rows to {out}")


if __name__ == "__main__":
    main()
