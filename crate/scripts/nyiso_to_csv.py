#!/usr/bin/env python3
"""Convert NYISO real-time zonal LBMP files into `timestamp,price` CSV.

NYISO publishes daily files such as `20120101realtime_zone.csv` with columns
"Time Stamp", "Name", "PTID", "LBMP ($/MWHr)", ... Their 5-minute time stamps
mark the end of each interval, so configs reading the output should set
`"convention": "interval-end"`.

    scripts/nyiso_to_csv.py --zone N.Y.C. -o nyc_2012.csv 2012*/*realtime_zone.csv
"""

import argparse
import csv
import sys
from datetime import datetime


def read_rows(path, zone):
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            if row.get("Name", "").strip() != zone:
                continue
            stamp = datetime.strptime(row["Time Stamp"].strip(), "%m/%d/%Y %H:%M:%S")
            price_key = next(k for k in row if k.startswith("LBMP"))
            yield stamp, float(row[price_key])


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("files", nargs="+", help="NYISO real-time zonal CSV files")
    parser.add_argument("--zone", default="N.Y.C.", help="zone name (default N.Y.C.)")
    parser.add_argument("-o", "--output", default="-", help="output file (default stdout)")
    args = parser.parse_args(argv)

    rows = []
    for path in args.files:
        rows.extend(read_rows(path, args.zone))
    rows.sort(key=lambda r: r[0])
    if not rows:
        sys.exit(f"no rows for zone {args.zone!r}")

    out = sys.stdout if args.output == "-" else open(args.output, "w", newline="")
    try:
        w = csv.writer(out)
        w.writerow(["timestamp", "price"])
        for stamp, price in rows:
            w.writerow([stamp.strftime("%Y-%m-%d %H:%M:%S"), f"{price:.2f}"])
    finally:
        if out is not sys.stdout:
            out.close()


if __name__ == "__main__":
    main()
