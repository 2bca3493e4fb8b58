"""Convert the UCI Adult files (adult.data + adult.test) into one headered CSV.

Usage: python3 scripts/adult_to_csv.py adult.data adult.test data/adult/adult.csv
"""
import csv
import sys

COLUMNS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]


def rows(path):
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("|"):
                continue
            cells = [c.strip() for c in line.split(",")]
            if len(cells) != len(COLUMNS):
                raise SystemExit(f"{path}: bad row {line!r}")
            cells[-1] = cells[-1].rstrip(".")
            yield cells


def main():
    train, test, out = sys.argv[1:4]
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        n = 0
        for path in (train, test):
            for cells in rows(path):
                writer.writerow(cells)
                n += 1
    print(f"wrote {n} rows to {out}")


if __name__ == "__main__":
    main()
