#!/usr/bin/env python3
"""Independent compactness check for the default vocabulary.

Uses a deliberately naive greedy longest-match tokenizer (linear scan of
the entry list at every position, no trie) and a direct LEB128 encoder,
so it shares no code with the package. Reports per-message raw UTF-8
bytes vs encoded token bytes for the packaged scenario corpus.
"""

import os
import sys

import yaml


def leb128_len(value: int) -> int:
    length = 1
    while value >= 0x80:
        value >>= 7
        length += 1
    return length


def naive_tokenize(entries, text):
    ids = []
    pos = 0
    while pos < len(text):
        best = None
        best_len = 0
        for idx, entry in enumerate(entries):
            if len(entry) > best_len and text.startswith(entry, pos):
                best = idx
                best_len = len(entry)
        if best is None:
            byte_values = text[pos].encode("utf-8")
            ids.extend(byte_values)
            pos += 1
        else:
            ids.append(256 + best)
            pos += best_len
    return ids


def main() -> None:
    root = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..")
    data_dir = os.path.join(root, "src", "discedge", "data")

    with open(os.path.join(data_dir, "default.vocab"), "r", encoding="utf-8") as fh:
        content = fh.read()
    if content.endswith("\n"):
        content = content[:-1]
    entries = content.split("\n") if content else []

    with open(os.path.join(data_dir, "scenario_default.yaml"), "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    messages = doc["messages"]

    total_raw = 0
    total_encoded = 0
    failures = 0
    for i, message in enumerate(messages, start=1):
        raw = len(message.encode("utf-8"))
        ids = naive_tokenize(entries, message)
        encoded = sum(leb128_len(t) for t in ids)
        total_raw += raw
        total_encoded += encoded
        verdict = "ok"
        if raw >= 20 and encoded > raw:
            verdict = "FAIL"
            failures += 1
        print(f"message {i}: raw={raw} encoded={encoded} tokens={len(ids)} {verdict}")
    print(f"total: raw={total_raw} encoded={total_encoded}")
    if total_encoded >= total_raw:
        print("FAIL: total encoded not smaller than total raw")
        failures += 1
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
