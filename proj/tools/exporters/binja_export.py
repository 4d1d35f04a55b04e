#!/usr/bin/env python3
"""Binary Ninja (headless API) exporter.

    python3 binja_export.py <binary> <out.json> [binary_id]
"""
import os
import sys

import binaryninja

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from common import artifact_document, write_document  # noqa: E402


def main(argv):
    if len(argv) < 3:
        sys.stderr.write(__doc__)
        return 2
    binary_id = argv[3] if len(argv) > 3 else os.path.basename(argv[1])
    with binaryninja.load(argv[1]) as bv:
        functions = []
        block_of = {}
        for fn in bv.functions:
            if fn.symbol.type == binaryninja.SymbolType.ImportedFunctionSymbol:
                continue
            blocks = []
            for block in sorted(fn.basic_blocks, key=lambda b: b.start):
                lines = []
                for line in block.get_disassembly_text():
                    text = "".join(tok.text for tok in line.tokens).strip()
                    if text:
                        lines.append(text)
                        block_of[line.address] = block.start
                blocks.append((block.start, lines))
            functions.append((fn.start, fn.name, blocks))

        strings = [(s.start, s.value) for s in bv.strings]
        string_addrs = set(a for a, _ in strings)
        globals_ = []
        for var in bv.data_vars.values():
            sym = bv.get_symbol_at(var.address)
            if sym is not None and var.address not in string_addrs:
                globals_.append((var.address, sym.name, str(var.type)))

        xrefs = []
        for fn in bv.functions:
            for site in fn.call_sites:
                for callee in bv.get_callees(site.address):
                    if site.address in block_of:
                        xrefs.append((block_of[site.address], callee, "call"))
        for addr, _, _ in globals_:
            for ref in bv.get_code_refs(addr):
                if ref.address in block_of:
                    xrefs.append((block_of[ref.address], addr, "data"))
        for addr in string_addrs:
            for ref in bv.get_code_refs(addr):
                if ref.address in block_of:
                    xrefs.append((block_of[ref.address], addr, "string"))

    write_document(argv[2], artifact_document(binary_id, functions, globals_, strings, xrefs))
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
