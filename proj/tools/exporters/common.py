"""Helpers shared by the disassembler exporters. Plain Python 2/3 so the
Jython interpreter inside Ghidra can import it too."""
import json


def hex_addr(value):
    return "0x%x" % value


def artifact_document(binary_id, functions, globals_, strings, xrefs):
    """functions: [(entry, name, [(addr, [lines])])]; globals_: [(addr, name, type)];
    strings: [(addr, literal)]; xrefs: [(from, to, kind)] with kind call|data|string."""
    known = set()
    for entry, _, blocks in functions:
        known.add(entry)
        for addr, _ in blocks:
            known.add(addr)
    known.update(a for a, _, _ in globals_)
    known.update(a for a, _ in strings)
    doc = {
        "binary_id": binary_id,
        "functions": [
            {
                "entry": hex_addr(entry),
                "name": name,
                "blocks": [{"addr": hex_addr(a), "lines": lines} for a, lines in sorted(blocks) if lines],
            }
            for entry, name, blocks in sorted(functions)
            if any(lines for _, lines in blocks)
        ],
        "globals": [{"addr": hex_addr(a), "name": n, "type": t} for a, n, t in sorted(globals_)],
        "strings": [{"addr": hex_addr(a), "literal": s} for a, s in sorted(strings)],
        "xrefs": [
            {"from": hex_addr(f), "to": hex_addr(t), "kind": k}
            for f, t, k in sorted(set(xrefs))
            if f in known and t in known
        ],
    }
    return doc


def write_document(path, doc):
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")
