#!/usr/bin/env python3
"""Regenerates include/dota/unicode_tables.hpp from Python's unicodedata."""
import sys
import unicodedata


def ranges(pred):
    out, start = [], None
    for cp in range(0x110000):
        ok = pred(cp)
        if ok and start is None:
            start = cp
        elif not ok and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def is_punct(cp):
    return unicodedata.category(chr(cp)).startswith("P") or chr(cp) in "$%&+=@#"


def is_digit(cp):
    return unicodedata.category(chr(cp)) == "Nd"


def is_space(cp):
    return chr(cp).isspace()


def lower_pairs():
    pairs = []
    for cp in range(0x110000):
        c = chr(cp)
        lo = c.lower()
        if len(lo) != 1 or lo == c:
            continue
        if lo.lower() != lo or is_punct(ord(lo)) or is_space(ord(lo)):
            continue
        pairs.append((cp, ord(lo)))
    return pairs


def emit_ranges(name, rs):
    body = ",\n".join(f"    {{0x{a:04X}, 0x{b:04X}}}" for a, b in rs)
    return f"inline constexpr CodepointRange {name}[] = {{\n{body}\n}};\n"


def main():
    out = [
        "// Generated by scripts/gen_unicode_tables.py (Unicode "
        + unicodedata.unidata_version + "). Do not edit.\n",
        "#pragma once\n\n#include <cstdint>\n\nnamespace dota::unicode {\n\n",
        "struct CodepointRange {\n  char32_t lo;\n  char32_t hi;\n};\n\n",
        "struct CaseMapping {\n  char32_t from;\n  char32_t to;\n};\n\n",
        emit_ranges("kPunctuation", ranges(is_punct)),
        "\n",
        emit_ranges("kDecimalDigit", ranges(is_digit)),
        "\n",
        emit_ranges("kWhitespace", ranges(is_space)),
        "\n",
    ]
    pairs = lower_pairs()
    body = ",\n".join(f"    {{0x{a:04X}, 0x{b:04X}}}" for a, b in pairs)
    out.append(f"inline constexpr CaseMapping kToLower[] = {{\n{body}\n}};\n")
    out.append("\n}  // namespace dota::unicode\n")
    sys.stdout.write("".join(out))


if __name__ == "__main__":
    main()
