#!/usr/bin/env python3
"""Write MovieLens-100K as data/ml-100k/u.data (user, item, rating, timestamp; tab separated).

The ratings are taken from the copy bundled in the pytorch-widedeep wheel,
which pip can fetch when grouplens.org is unreachable. The file is not
redistributed with this repository; see the MovieLens terms of use.
"""

import argparse
import glob
import io
import pathlib
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent / "data" / "ml-100k"))
    parser.add_argument("--wheel", help="use an already downloaded pytorch-widedeep wheel")
    args = parser.parse_args()

    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
                            "pytorch-widedeep"], check=True)
            wheel = glob.glob(f"{tmp}/pytorch_widedeep-*.whl")[0]
        with zipfile.ZipFile(wheel) as z:
            frame = pd.read_parquet(io.BytesIO(z.read(MEMBER)))

    frame = frame[["user_id", "movie_id", "rating", "timestamp"]]
    if len(frame) != 100000:
        print(f"unexpected row count {len(frame)}", file=sys.stderr)
        return 1
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out / "u.data", sep="\t", header=False, index=False)
    print(f"wrote {out / 'u.data'} ({len(frame)} ratings)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
