#!/usr/bin/env python3
"""OCR engine adapter: argv = [png_path, config_path], stdout = token table.

Each output line is text<TAB>x<TAB>y<TAB>w<TAB>h<TAB>conf in the coordinates of
the PNG it was given.
"""
import csv
import io
import json
import shutil
import subprocess
import sys

PSM = {"sparse": "11", "block": "6", "line": "7"}


def main(argv):
    if len(argv) != 3:
        sys.stderr.write("usage: tesseract_adapter.py <png> <config.json>\n")
        return 2
    exe = shutil.which("tesseract")
    if exe is None:
        sys.stderr.write("tesseract not found on PATH\n")
        return 3
    with open(argv[2], encoding="utf-8") as f:
        cfg = json.load(f)
    cmd = [exe, argv[1], "stdout", "--psm", PSM.get(cfg.get("segmentation", "sparse"), "11")]
    if cfg.get("char_whitelist"):
        cmd += ["-c", "tessedit_char_whitelist=" + cfg["char_whitelist"]]
    cmd.append("tsv")
    out = subprocess.run(cmd, check=True, capture_output=True, text=True).stdout
    rows = csv.DictReader(io.StringIO(out), delimiter="\t", quoting=csv.QUOTE_NONE)
    for row in rows:
        text = (row.get("text") or "").strip()
        if row.get("level") != "5" or not text:
            continue
        conf = max(0.0, min(100.0, float(row["conf"])))
        text = text.replace("\t", " ")
        print("\t".join([text, row["left"], row["top"], row["width"], row["height"], f"{conf:.1f}"]))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
