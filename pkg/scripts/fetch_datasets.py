#!/usr/bin/env python3
"""Fetch public PGO benchmark files used by the dataset-dependent tests.

Downloads into datasets/ (or ASYNCPGO_DATASET_DIR). Benchmark hosting moves
around, so pass --base-url if the default no longer serves the files; any
directory serving <base>/<name>.g2o works. All dataset tests skip cleanly
when the files are absent, so running this script is optional.
"""

import argparse
import os
import sys
import urllib.request
from pathlib import Path

FILES = ["intel.g2o", "CSAIL.g2o", "manhattan.g2o", "sphere2500.g2o", "parking-garage.g2o", "torus3D.g2o"]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--base-url", default="https://lucacarlone.mit.edu/datasets")
    parser.add_argument("names", nargs="*", default=FILES, help="files to fetch (default: all)")
    args = parser.parse_args()

    out_dir = Path(os.environ.get("ASYNCPGO_DATASET_DIR", Path(__file__).resolve().parent.parent / "datasets"))
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = 0
    for name in args.names or FILES:
        dest = out_dir / name
        if dest.exists():
            print(f"{name}: already present")
            continue
        url = f"{args.base_url.rstrip('/')}/{name}"
        try:
            print(f"{name}: fetching {url}")
            with urllib.request.urlopen(url, timeout=60) as resp, open(dest, "wb") as fh:
                fh.write(resp.read())
        except Exception as exc:  # noqa: BLE001 - report which file failed
            failures += 1
            dest.unlink(missing_ok=True)
            print(f"  failed: {exc}")
    if failures:
        print(f"{failures} file(s) not fetched; dataset tests will skip for those")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
