#!/usr/bin/env python3
"""Rebuild data/nlsym.csv from the Card (1995) NLSYM extract in the wooldridge package."""
import bz2
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

import pandas as pd

COLUMNS = ["id", "nearc4", "educ", "wage", "exper", "black", "south", "smsa", "smsa66"] + [
    f"reg66{i}" for i in range(1, 10)
]


def main() -> None:
    out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "data/nlsym.csv")
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, "wooldridge"],
            check=True,
        )
        wheel = next(pathlib.Path(tmp).glob("wooldridge-*.whl"))
        with zipfile.ZipFile(wheel) as z:
            raw = bz2.decompress(z.read("wooldridge/datasets/card.csv.bz2"))
    df = pd.read_csv(io.BytesIO(raw))
    out.parent.mkdir(parents=True, exist_ok=True)
    df[COLUMNS].to_csv(out, index=False)
    print(f"wrote {len(df)} rows to {out}")


if __name__ == "__main__":
    main()
