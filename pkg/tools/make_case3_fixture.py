#!/usr/bin/env python3
"""Regenerate the checked-in case-3 mesh fixture."""

import json
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from faultrom import cases  # noqa: E402


def main():
    doc = cases.make_case3_document()
    out = pathlib.Path(__file__).resolve().parents[1] \
        / "src" / "faultrom" / "fixtures" / "case3_mesh.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
