#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc from Python's unicodedata.

Usage: python3 tools/gen_unicode_tables.py > src/unicode_tables.inc
"""
import sys
import unicodedata

EXTRA_SYMBOLS = "~^|<>=+"


def ranges(pred):
    out = []
    start = None
    for cp in range(0x110000):
        hit = pred(cp)
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def is_punct(cp):
    if chr(cp) in EXTRA_SYMBOLS:
        return True
    return unicodedata.category(chr(cp)).startswith("P")


def is_digit(cp):
    return unicodedata.category(chr(cp)) == "Nd"


def lower_pairs():
    pairs = []
    for cp in range(0x110000):
        ch = chr(cp)
        lo = ch.lower()
        if len(lo) == 1 and lo != ch:
            pairs.append((cp, ord(lo)))
    return pairs


def emit_ranges(name, rs):
    print(f"inline constexpr CodeRange {name}[] = {{")
    for a, b in rs:
        print(f"    {{0x{a:04X}, 0x{b:04X}}},")
    print("};")
    print()


def main():
    print(f"// Generated by tools/gen_unicode_tables.py (Unicode {unicodedata.unidata_version}). Do not edit.")
    print()
    emit_ranges("kPunctuation", ranges(is_punct))
    emit_ranges("kDecimalDigit", ranges(is_digit))
    print("inline constexpr CaseMapping kLowercase[] = {")
    for a, b in lower_pairs():
        print(f"    {{0x{a:04X}, 0x{b:04X}}},")
    print("};")


if __name__ == "__main__":
    sys.exit(main())
