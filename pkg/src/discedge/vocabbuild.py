"""Vocabulary construction from text corpora.

Entries are whole words in up to four surface forms: bare, leading-space,
capitalized, and leading-space capitalized. The leading-space forms are
what make running text compress well under greedy matching, since almost
every word in a sentence is preceded by a space. Single-character bare
forms are skipped: their LEB128 id costs two bytes while the raw byte
costs one.

The role markers used by the context renderer are always placed first so
every generated vocabulary can render chat history cheaply.
"""

from __future__ import annotations

import logging
import re
from collections import Counter

log = logging.getLogger(__name__)

ROLE_MARKER_ENTRIES = ("<|system|>", "<|user|>", "<|assistant|>")

# Frequent punctuation bigrams in running text; same 2-bytes-for-2-chars
# parity as leading-space words, and they often precede a capital.
PUNCTUATION_ENTRIES = (", ", ". ", "? ", "! ", ": ")

_WORD_RE = re.compile(r"[A-Za-z][A-Za-z']*")


def extract_word_counts(text: str) -> Counter:
    """Case-insensitive word frequencies; words keep internal apostrophes."""
    counts: Counter = Counter()
    for match in _WORD_RE.finditer(text):
        counts[match.group(0).lower()] += 1
    return counts


def word_forms(word: str) -> list[str]:
    """Surface forms of one lowercase word, longest-useful first."""
    forms = []
    capitalized = word[0].upper() + word[1:]
    for form in (" " + word, " " + capitalized, word, capitalized):
        if len(form) >= 2 and form not in forms:
            forms.append(form)
    return forms


def build_entries(words) -> list[str]:
    """Full entry list: markers, punctuation, then word forms in order."""
    entries = list(ROLE_MARKER_ENTRIES) + list(PUNCTUATION_ENTRIES)
    seen = set(entries)
    for word in words:
        for form in word_forms(word):
            if form not in seen:
                seen.add(form)
                entries.append(form)
    return entries


def build_vocab_entries(corpus_texts, extra_words=(), max_words: int = 2000) -> list[str]:
    """Entries for the most frequent corpus words plus fixed extras.

    Word order is frequency-descending with alphabetical tie-break, so the
    same corpus always produces the same file.
    """
    counts: Counter = Counter()
    for text in corpus_texts:
        counts.update(extract_word_counts(text))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [w for w, _ in ranked[:max_words]]
    for extra in extra_words:
        lowered = extra.lower()
        if lowered not in counts or counts[lowered] == 0:
            words.append(lowered)
    return build_entries(words)


def write_vocab(entries, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for entry in entries:
            fh.write(entry + "\n")
