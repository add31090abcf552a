#!/usr/bin/env python3
"""Download the FB15k-237 triple files into the data directory used by the
acceptance suite (override with KGTOPO_DATA). Needs internet access."""

import os
import sys
import urllib.request
from pathlib import Path

MIRROR = "https://raw.githubusercontent.com/villmow/datasets_knowledge_embedding/master/FB15k-237"
FILES = ("train.txt", "valid.txt", "test.txt")


def main() -> int:
    root = Path(os.environ.get("KGTOPO_DATA", Path(__file__).resolve().parent.parent / "data"))
    target = root / "fb15k-237"
    target.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        dest = target / name
        if dest.exists():
            print(f"{dest} already present")
            continue
        url = f"{MIRROR}/{name}"
        print(f"downloading {url}")
        urllib.request.urlretrieve(url, dest)
        print(f"  -> {dest} ({dest.stat().st_size} bytes)")
    print("done; run the acceptance suite with: pytest tests/test_acceptance.py -v")
    return 0


if __name__ == "__main__":
    sys.exit(main())
