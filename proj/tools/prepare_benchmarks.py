#!/usr/bin/env python3
"""Derive the WBC and Glass outlier benchmarks from the R MASS datasets.

Inputs are `biopsy.csv` (Wisconsin breast cancer, original) and `fgl.csv`
(forensic glass) as exported by Rdatasets / the `pydataset` package.

  WBC   : rows with missing values dropped; all 444 benign rows kept and 10
          malignant rows sampled with a fixed seed -> 454 x 9, 10 outliers.
  Glass : all 214 rows; type "Tabl" (tableware, 9 rows) is the outlier class;
          attributes RI Na Mg Al Si K Ca (Ba and Fe dropped) -> 214 x 7.

Values are written unnormalised; the generated manifest asks the loader to
min-max normalise each column.
"""

import argparse
import csv
import pathlib
import random
import sys

WBC_SEED = 2016


def find_source() -> pathlib.Path | None:
    candidates = [pathlib.Path.home() / ".pydataset" / "resources" / "rdata" / "csv" / "MASS"]
    try:
        import pydataset  # noqa: F401

        root = pathlib.Path(pydataset.__file__).parent
        candidates.append(root / "resources" / "rdata" / "csv" / "MASS")
    except Exception:
        pass
    for c in candidates:
        if (c / "biopsy.csv").exists() and (c / "fgl.csv").exists():
            return c
    return None


def read_rows(path: pathlib.Path) -> list[dict[str, str]]:
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def write_csv(path: pathlib.Path, header: list[str], rows: list[list[str]]) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def build_wbc(src: pathlib.Path, out: pathlib.Path) -> None:
    attrs = [f"V{i}" for i in range(1, 10)]
    rows = [r for r in read_rows(src / "biopsy.csv") if all(r[a] != "NA" for a in attrs)]
    benign = [r for r in rows if r["class"] == "benign"]
    malignant = [r for r in rows if r["class"] == "malignant"]
    chosen = set(id(r) for r in random.Random(WBC_SEED).sample(malignant, 10))
    kept = [r for r in rows if r["class"] == "benign" or id(r) in chosen]
    assert len(benign) == 444 and len(kept) == 454
    body = [[str(i)] + [r[a] for a in attrs] + ["1" if r["class"] == "malignant" else "0"]
            for i, r in enumerate(kept)]
    write_csv(out / "wbc.csv", ["id"] + attrs + ["label"], body)


def build_glass(src: pathlib.Path, out: pathlib.Path) -> None:
    attrs = ["RI", "Na", "Mg", "Al", "Si", "K", "Ca"]
    rows = read_rows(src / "fgl.csv")
    assert len(rows) == 214
    body = [[str(i)] + [r[a] for a in attrs] + ["1" if r["type"] == "Tabl" else "0"]
            for i, r in enumerate(rows)]
    assert sum(b[-1] == "1" for b in body) == 9
    write_csv(out / "glass.csv", ["id"] + attrs + ["label"], body)


MANIFEST = """\
# Benchmark manifest: one section per dataset.
[WBC]
path = "wbc.csv"
label_column = "label"
id_column = "id"
normalize = true

[Glass]
path = "glass.csv"
label_column = "label"
id_column = "id"
normalize = true
"""


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--source", type=pathlib.Path, help="directory holding biopsy.csv and fgl.csv")
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("data"))
    args = ap.parse_args()
    src = args.source or find_source()
    if src is None:
        print("cannot find biopsy.csv / fgl.csv; pass --source", file=sys.stderr)
        return 1
    args.out.mkdir(parents=True, exist_ok=True)
    build_wbc(src, args.out)
    build_glass(src, args.out)
    (args.out / "manifest.toml").write_text(MANIFEST)
    print(f"wrote {args.out}/wbc.csv, {args.out}/glass.csv, {args.out}/manifest.toml")
    return 0


if __name__ == "__main__":
    sys.exit(main())
