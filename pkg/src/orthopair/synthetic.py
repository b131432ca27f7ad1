"""Seeded rule-based perturbations for building synthetic variant corpora."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import TokenPair

VOWELS = "aeiou"


@dataclass(frozen=True)
class RuleSet:
    """One orthographic "system": a vowel map plus the optional rules it uses."""

    name: str
    vowel_map: dict
    elision: bool = True
    doubling: bool = True
    extra: tuple = ()  # (source substring, replacement) rewrites


SYSTEM_A = RuleSet(
    "system-a",
    {"a": "e", "e": "i", "i": "y", "o": "u", "u": "oo"},
    elision=True,
    doubling=True,
)

SYSTEM_B = RuleSet(
    "system-b",
    {"a": "au", "e": "a", "i": "ee", "o": "aw", "u": "e"},
    elision=False,
    doubling=False,
    extra=(("th", "d"), ("ng", "n'"), ("v", "w"), ("c", "k")),
)


def _vowel_sub(word: str, rules: RuleSet, rng) -> str | None:
    spots = [i for i, ch in enumerate(word) if ch in rules.vowel_map]
    if not spots:
        return None
    i = spots[rng.integers(len(spots))]
    return word[:i] + rules.vowel_map[word[i]] + word[i + 1 :]


def _elide(word: str, rules: RuleSet, rng) -> str | None:
    if not rules.elision or len(word) < 4:
        return None
    choices = []
    if word[0] in VOWELS:
        choices.append("'" + word[1:])
    if word.endswith("ing"):
        choices.append(word[:-1] + "'")
    inner = [i for i in range(1, len(word) - 1) if word[i] in VOWELS]
    choices.extend(word[:i] + "'" + word[i + 1 :] for i in inner)
    if not choices:
        return None
    return choices[rng.integers(len(choices))]


def _double(word: str, rules: RuleSet, rng) -> str | None:
    if not rules.doubling:
        return None
    spots = [i for i, ch in enumerate(word) if ch.isalpha() and ch not in VOWELS]
    if not spots:
        return None
    i = spots[rng.integers(len(spots))]
    return word[: i + 1] + word[i] + word[i + 1 :]


def _rewrite(word: str, rules: RuleSet, rng) -> str | None:
    hits = [(src, dst) for src, dst in rules.extra if src in word]
    if not hits:
        return None
    src, dst = hits[rng.integers(len(hits))]
    return word.replace(src, dst, 1)


RULES = (_vowel_sub, _elide, _double, _rewrite)


def perturb(word: str, rules: RuleSet, rng, max_edits: int = 2) -> str:
    """Apply one to ``max_edits`` applicable rules; the result always differs from ``word``."""
    target = 1 + int(rng.integers(max_edits))
    out = word
    for _ in range(8 * max_edits):
        if target == 0:
            break
        fn = RULES[rng.integers(len(RULES))]
        new = fn(out, rules, rng)
        if new is not None and new != out:
            out = new
            target -= 1
    if out == word:
        out = word[: 1] + word[0] + word[1:] if len(word) else word + "'"
    return out


def synthetic_pairs(
    words: Sequence[str],
    count: int,
    seed: int = 0,
    systems: Sequence[RuleSet] = (SYSTEM_A,),
    min_length: int = 4,
) -> list[TokenPair]:
    """Perturb ``count`` distinct words, cycling through ``systems``.

    ``source_id`` records which system produced each variant.
    """
    rng = np.random.default_rng(seed)
    eligible = sorted({w for w in words if len(w) >= min_length and w.isalpha()})
    if len(eligible) < count:
        raise ValueError(f"only {len(eligible)} eligible words for {count} pairs")
    picks = rng.choice(len(eligible), size=count, replace=False)
    out = []
    for k, idx in enumerate(picks):
        word = eligible[int(idx)]
        system = systems[k % len(systems)]
        out.append(TokenPair(perturb(word, system, rng), word, None, system.name))
    return out
