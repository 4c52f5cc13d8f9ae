"""Pronunciation lexicon and the phoneme-distance confusable filter.

Confusable words for a wake word are the vocabulary entries whose
phoneme-level edit distance to the wake word falls in [1, d_max],
optionally restricted to the most frequent words.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import _accel


class LexiconError(ValueError):
    pass


@dataclass
class Lexicon:
    """word -> pronunciations (each a tuple of phoneme symbols).

    frequency_rank maps word -> rank with 1 the most frequent; it is
    None when no frequency data was supplied.
    """

    entries: dict[str, list[tuple[str, ...]]]
    frequency_rank: dict[str, int] | None = None

    def pronunciations(self, word: str) -> list[tuple[str, ...]]:
        try:
            return self.entries[word.lower()]
        except KeyError:
            raise LexiconError(f"word {word!r} not in lexicon") from None

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_lexicon(
    path: str | os.PathLike, frequency_path: str | os.PathLike | None = None
) -> Lexicon:
    """Parse `word<TAB>PH1 PH2 ...` lines; repeated words add alternates.

    The optional frequency file holds `word<TAB>count` lines; ranks are
    assigned by descending count with lexicographic tie-breaking.
    """
    entries: dict[str, list[tuple[str, ...]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(
                    f"{path}:{lineno}: expected 'word<TAB>phonemes', got {line!r}"
                )
            word = parts[0].strip().lower()
            phonemes = tuple(parts[1].split())
            if not word or not phonemes:
                raise LexiconError(f"{path}:{lineno}: empty word or phoneme field")
            prons = entries.setdefault(word, [])
            if phonemes not in prons:
                prons.append(phonemes)
    if not entries:
        raise LexiconError(f"{path}: empty lexicon")

    ranks = None
    if frequency_path is not None:
        counts: dict[str, int] = {}
        with open(frequency_path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 2:
                    raise LexiconError(
                        f"{frequency_path}:{lineno}: expected 'word<TAB>count'"
                    )
                try:
                    counts[parts[0].strip().lower()] = int(parts[1])
                except ValueError:
                    raise LexiconError(
                        f"{frequency_path}:{lineno}: count is not an integer"
                    ) from None
        ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        ranks = {word: rank for rank, (word, _) in enumerate(ordered, 1)}
    return Lexicon(entries, ranks)


def _encode(seq: tuple[str, ...], table: dict[str, int]) -> np.ndarray:
    return np.asarray([table.setdefault(p, len(table)) for p in seq], dtype=np.int64)


def levenshtein(a, b) -> int:
    """Unit-cost edit distance between two phoneme sequences."""
    a = tuple(a)
    b = tuple(b)
    if not a or not b:
        raise LexiconError("cannot compare empty phoneme sequences")
    table: dict[str, int] = {}
    return int(_accel.levenshtein_codes(_encode(a, table), _encode(b, table)))


@dataclass
class ConfusableSet:
    """Words within edit distance [1, d_max] of the wake word."""

    wake_word: str
    d_max: int
    members: dict[str, int] = field(default_factory=dict)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.members

    def __len__(self) -> int:
        return len(self.members)

    def words(self) -> set[str]:
        return set(self.members)


def build_confusable_set(
    lex: Lexicon, wake_word: str, d_max: int, top_n_frequent: int = 10000
) -> ConfusableSet:
    """Scan the (frequency-capped) vocabulary for confusable words.

    A word's distance is the minimum over all pronunciation pairs with
    the wake word; the wake word itself and exact homophones (distance
    0) are excluded. Without frequency data every word is considered.
    """
    wake = wake_word.lower()
    if wake not in lex:
        raise LexiconError(f"wake word {wake_word!r} not in lexicon")
    if d_max < 0:
        raise LexiconError("d_max must be >= 0")

    table: dict[str, int] = {}
    wake_codes = [_encode(p, table) for p in lex.pronunciations(wake)]
    members: dict[str, int] = {}
    for word, prons in lex.entries.items():
        if word == wake:
            continue
        if lex.frequency_rank is not None:
            rank = lex.frequency_rank.get(word)
            if rank is None or rank > top_n_frequent:
                continue
        codes = [_encode(p, table) for p in prons]
        dist = min(
            int(_accel.levenshtein_codes(c, w)) for c in codes for w in wake_codes
        )
        if 1 <= dist <= d_max:
            members[word] = dist
    return ConfusableSet(wake, d_max, members)


def write_confusables(confusables: ConfusableSet, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(confusables.members):
            fh.write(f"{word}\t{confusables.members[word]}\n")


def read_confusables(path: str | os.PathLike, wake_word: str = "") -> ConfusableSet:
    members: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise LexiconError(f"{path}:{lineno}: expected 'word<TAB>distance'")
            members[parts[0].strip().lower()] = int(parts[1])
    d_max = max(members.values(), default=0)
    return ConfusableSet(wake_word.lower(), d_max, members)
