#!/usr/bin/env python3
"""Exporter built on GNU binutils, for binaries with a symbol table.

    python3 objdump_export.py <binary> <out.json> [binary_id]
"""
import os
import re
import subprocess
import sys

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from common import artifact_document, write_document  # noqa: E402

FUNC_RE = re.compile(r"^([0-9a-f]+) <([^>]+)>:$")
INSN_RE = re.compile(r"^\s*([0-9a-f]+):\s+(.*)$")
TARGET_RE = re.compile(r"\b([0-9a-f]+) <([^>+]+)(\+0x[0-9a-f]+)?>")
RIP_RE = re.compile(r"# ([0-9a-f]+) <([^>+]+)(\+0x[0-9a-f]+)?>")


def run(*cmd):
    return subprocess.run(cmd, check=True, capture_output=True, text=True).stdout


def read_symbols(binary):
    functions, objects = {}, {}
    for line in run("nm", "--defined-only", "-S", binary).splitlines():
        parts = line.split()
        if len(parts) == 4:
            addr, size, kind, name = parts
        elif len(parts) == 3:
            addr, kind, name = parts
            size = "0"
        else:
            continue
        if kind in "tT":
            functions[int(addr, 16)] = name
        elif kind in "dDbBrR":
            objects[int(addr, 16)] = (name, int(size, 16))
    return functions, objects


def read_rodata_strings(binary):
    out = []
    try:
        dump = run("objdump", "-s", "-j", ".rodata", binary)
    except subprocess.CalledProcessError:
        return out
    data = bytearray()
    base = None
    for line in dump.splitlines():
        m = re.match(r"^ ([0-9a-f]+) ((?:[0-9a-f]{2,8} ?){1,4})", line)
        if not m:
            continue
        if base is None:
            base = int(m.group(1), 16)
        data += bytes.fromhex(m.group(2).replace(" ", ""))
    start = None
    for i, b in enumerate(data + b"\0"):
        if 32 <= b < 127:
            if start is None:
                start = i
        else:
            if start is not None and i - start >= 4 and b == 0:
                out.append((base + start, data[start:i].decode("ascii")))
            start = None
    return out


def split_blocks(entry, insns):
    leaders = {entry}
    for i, (addr, text) in enumerate(insns):
        mnemonic = text.split()[0] if text else ""
        if mnemonic.startswith("j") or mnemonic.startswith("ret"):
            if i + 1 < len(insns):
                leaders.add(insns[i + 1][0])
            m = TARGET_RE.search(text)
            if m and mnemonic.startswith("j"):
                leaders.add(int(m.group(1), 16))
    blocks, current = [], None
    for addr, text in insns:
        if addr in leaders or current is None:
            current = (addr, [])
            blocks.append(current)
        current[1].append(text)
    return blocks


def main(argv):
    if len(argv) < 3:
        sys.stderr.write(__doc__)
        return 2
    binary, out_path = argv[1], argv[2]
    binary_id = argv[3] if len(argv) > 3 else os.path.basename(binary)
    fn_names, objects = read_symbols(binary)
    strings = read_rodata_strings(binary)
    string_addrs = set(a for a, _ in strings)

    per_fn, current = {}, None
    for line in run("objdump", "-d", "-M", "intel", "--no-show-raw-insn", "-j", ".text", binary).splitlines():
        m = FUNC_RE.match(line)
        if m:
            addr = int(m.group(1), 16)
            current = addr if addr in fn_names else None
            if current is not None:
                per_fn[current] = []
            continue
        m = INSN_RE.match(line)
        if m and current is not None:
            text = " ".join(m.group(2).split())
            if text and not text.startswith("(bad)"):
                per_fn[current].append((int(m.group(1), 16), text))

    functions, xrefs = [], []
    for entry, insns in per_fn.items():
        if not insns:
            continue
        blocks = split_blocks(entry, insns)
        functions.append((entry, fn_names[entry], blocks))
        for block_addr, lines in blocks:
            for text in lines:
                mnemonic = text.split()[0]
                m = TARGET_RE.search(text)
                if mnemonic.startswith("call") and m:
                    xrefs.append((block_addr, int(m.group(1), 16), "call"))
                r = RIP_RE.search(text)
                if r:
                    to = int(r.group(1), 16)
                    xrefs.append((block_addr, to, "string" if to in string_addrs else "data"))

    globals_ = [(a, n, "undefined%d" % s if s else "undefined") for a, (n, s) in objects.items()]
    write_document(out_path, artifact_document(binary_id, functions, globals_, strings, xrefs))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
