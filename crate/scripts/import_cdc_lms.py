#!/usr/bin/env python3
"""Convert CDC growth-chart LMS CSV files to the `metric|sex|key|L|M|S` table
format read by `LmsTable::load` (and the `lms_table` config option).

    scripts/import_cdc_lms.py bmi_for_age bmiagerev.csv > bmi.lms
    scripts/import_cdc_lms.py weight_for_length wtleninf.csv --out wfl.lms

CDC files code sex as 1 = male, 2 = female. The key column is `Agemos` for
age-based charts and `Length` for weight-for-length.
"""

import argparse
import csv
import sys

METRICS = {"bmi_for_age": "Agemos", "weight_for_length": "Length"}
SEXES = {"1": "male", "2": "female"}


def rows(path, key_column):
    with open(path, newline="", encoding="utf-8-sig") as f:
        reader = csv.DictReader(f)
        fields = {name.strip().lower(): name for name in reader.fieldnames or []}
        wanted = [key_column.lower(), "sex", "l", "m", "s"]
        missing = [c for c in wanted if c not in fields]
        if missing:
            sys.exit(f"{path}: missing column(s) {', '.join(missing)}")
        for record in reader:
            sex = SEXES.get(record[fields["sex"]].strip())
            if sex is None:
                # Repeated header lines appear in some CDC downloads.
                continue
            yield (
                sex,
                float(record[fields[key_column.lower()]]),
                record[fields["l"]].strip(),
                record[fields["m"]].strip(),
                record[fields["s"]].strip(),
            )


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("metric", choices=sorted(METRICS))
    parser.add_argument("csv", nargs="+", help="CDC LMS CSV file(s)")
    parser.add_argument("--out", help="output file (default stdout)")
    args = parser.parse_args()

    table = {}
    for path in args.csv:
        for sex, key, l, m, s in rows(path, METRICS[args.metric]):
            table[(sex, key)] = (l, m, s)

    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    out.write(f"# {args.metric} LMS parameters imported from {', '.join(args.csv)}\n")
    out.write("# metric|sex|key|L|M|S\n")
    for sex in ("male", "female"):
        for key in sorted(k for s, k in table if s == sex):
            l, m, s = table[(sex, key)]
            out.write(f"{args.metric}|{sex}|{key:g}|{l}|{m}|{s}\n")
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
