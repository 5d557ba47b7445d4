#!/usr/bin/env python3
"""Regenerates core/src/digits8x8_table.cpp from scikit-learn's copy of the
UCI optical recognition of handwritten digits set (8x8, 16 grey levels)."""
import pathlib
import sys

from sklearn.datasets import load_digits

out = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "core/src/digits8x8_table.cpp")
digits = load_digits()
rows = []
for pixels, label in zip(digits.data.astype(int), digits.target.astype(int)):
    rows.append(",".join(str(v) for v in list(pixels) + [label]))

with out.open("w") as f:
    f.write("// Generated by tools/scripts/generate_digits_table.py. Do not edit.\n")
    f.write("// Source: UCI optical recognition of handwritten digits (CC BY 4.0).\n")
    f.write("#include <cstddef>\n#include <cstdint>\n\n")
    f.write("namespace qfl::detail {\n\n")
    f.write(f"extern const std::size_t kDigitsRows = {len(rows)};\n")
    f.write("// 64 pixel intensities in [0, 16] followed by the label, per row.\n")
    f.write(f"extern const std::uint8_t kDigitsTable[{len(rows)} * 65] = {{\n")
    for r in rows:
        f.write("    " + r + ",\n")
    f.write("};\n\n}  // namespace qfl::detail\n")
