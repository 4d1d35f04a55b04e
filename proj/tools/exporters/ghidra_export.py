# Ghidra headless post-script: writes the artifact map of the current program.
#   analyzeHeadless <project_dir> <name> -import <binary> \
#     -scriptPath tools/exporters -postScript ghidra_export.py <out.json> [binary_id]
# @category annotrace
import os
import sys

sys.path.append(os.path.dirname(os.path.abspath(getSourceFile().getAbsolutePath())))
from common import artifact_document, write_document  # noqa: E402

from ghidra.program.model.block import BasicBlockModel  # noqa: E402
from ghidra.program.model.data import StringDataInstance  # noqa: E402
from ghidra.program.model.symbol import SymbolType  # noqa: E402
from ghidra.util.task import ConsoleTaskMonitor  # noqa: E402

args = getScriptArgs()
out_path = args[0]
binary_id = args[1] if len(args) > 1 else currentProgram.getName()
listing = currentProgram.getListing()
monitor = ConsoleTaskMonitor()
model = BasicBlockModel(currentProgram)


def off(addr):
    return addr.getOffset()


functions = []
for fn in currentProgram.getFunctionManager().getFunctions(True):
    if fn.isExternal() or fn.isThunk():
        continue
    blocks = []
    it = model.getCodeBlocksContaining(fn.getBody(), monitor)
    while it.hasNext():
        block = it.next()
        lines = [str(ins) for ins in listing.getInstructions(block, True)]
        blocks.append((off(block.getFirstStartAddress()), lines))
    functions.append((off(fn.getEntryPoint()), fn.getName(), blocks))

globals_ = []
strings = []
for data in listing.getDefinedData(True):
    sdi = StringDataInstance.getStringDataInstance(data)
    if sdi != StringDataInstance.NULL_INSTANCE:
        strings.append((off(data.getAddress()), sdi.getStringValue() or ""))
        continue
    sym = currentProgram.getSymbolTable().getPrimarySymbol(data.getAddress())
    if sym is not None and sym.getSymbolType() == SymbolType.LABEL:
        globals_.append((off(data.getAddress()), sym.getName(), data.getDataType().getName()))

string_addrs = set(a for a, _ in strings)
xrefs = []
for ref in currentProgram.getReferenceManager().getReferenceIterator(currentProgram.getMinAddress()):
    src = ref.getFromAddress()
    dst = ref.getToAddress()
    if not src.isMemoryAddress() or not dst.isMemoryAddress():
        continue
    if ref.getReferenceType().isCall():
        kind = "call"
    elif off(dst) in string_addrs:
        kind = "string"
    elif ref.getReferenceType().isData():
        kind = "data"
    else:
        continue
    src_block = model.getFirstCodeBlockContaining(src, monitor)
    if src_block is None:
        continue
    xrefs.append((off(src_block.getFirstStartAddress()), off(dst), kind))

write_document(out_path, artifact_document(binary_id, functions, globals_, strings, xrefs))
