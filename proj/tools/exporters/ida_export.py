# IDAPython script: writes the artifact map of the open database.
#   idat64 -A -S"tools/exporters/ida_export.py <out.json> [binary_id]" <binary>
import os
import sys

import ida_auto
import ida_bytes
import ida_funcs
import ida_gdl
import ida_lines
import ida_nalt
import ida_pro
import idautils
import idc

sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from common import artifact_document, write_document  # noqa: E402

ida_auto.auto_wait()
out_path = idc.ARGV[1]
binary_id = idc.ARGV[2] if len(idc.ARGV) > 2 else ida_nalt.get_root_filename()

functions = []
block_of = {}
for entry in idautils.Functions():
    fn = ida_funcs.get_func(entry)
    if fn is None or fn.flags & (ida_funcs.FUNC_LIB | ida_funcs.FUNC_THUNK):
        continue
    blocks = []
    for block in ida_gdl.FlowChart(fn):
        lines = []
        for head in idautils.Heads(block.start_ea, block.end_ea):
            if ida_bytes.is_code(ida_bytes.get_flags(head)):
                lines.append(ida_lines.tag_remove(idc.generate_disasm_line(head, 0)))
                block_of[head] = block.start_ea
        blocks.append((block.start_ea, lines))
    functions.append((entry, idc.get_func_name(entry), blocks))

strings = [(s.ea, str(s)) for s in idautils.Strings()]
string_addrs = set(a for a, _ in strings)

globals_ = []
for ea, name in idautils.Names():
    flags = ida_bytes.get_flags(ea)
    if ida_bytes.is_data(flags) and ea not in string_addrs:
        globals_.append((ea, name, idc.get_type(ea) or "undefined"))

xrefs = []
for head, block in block_of.items():
    for ref in idautils.XrefsFrom(head, 0):
        if ref.iscode and ref.type in (idautils.ida_xref.fl_CN, idautils.ida_xref.fl_CF):
            xrefs.append((block, ref.to, "call"))
        elif not ref.iscode:
            xrefs.append((block, ref.to, "string" if ref.to in string_addrs else "data"))

write_document(out_path, artifact_document(binary_id, functions, globals_, strings, xrefs))
ida_pro.qexit(0)
