"""Character-level string primitives: token normalization, alphabets,
Levenshtein distance and alignment, and LD histograms."""

from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpusError, InvalidTokenError

APOSTROPHES = {"'", "’", "‘", "ʼ"}
PAD = "<pad>"
UNK = "<unk>"

LD_BUCKETS = ("1", "2", "3", "4+")


def _is_strippable(ch: str) -> bool:
    if ch in APOSTROPHES:
        return False
    cat = unicodedata.category(ch)
    return cat[0] in "PS"


def normalize_token(text: str, lowercase: bool = True) -> str:
    """Normalize a raw word form into a token.

    Surrounding punctuation is stripped except apostrophes, which are folded
    to ASCII ``'`` since they carry elisions ("'fraid", "mars'"). Raises
    InvalidTokenError if nothing is left or whitespace remains inside.
    """
    text = unicodedata.normalize("NFC", text.strip())
    text = "".join("'" if ch in APOSTROPHES else ch for ch in text)
    start, end = 0, len(text)
    while start < end and _is_strippable(text[start]):
        start += 1
    while end > start and _is_strippable(text[end - 1]):
        end -= 1
    text = text[start:end]
    if lowercase:
        text = text.lower()
    validate_token(text)
    return text


def validate_token(text: str) -> None:
    if not text:
        raise InvalidTokenError("empty token")
    if any(ch.isspace() for ch in text):
        raise InvalidTokenError(f"token contains whitespace: {text!r}")


class Alphabet:
    """Ordered character vocabulary with reserved PAD (boundary) and UNK symbols.

    Index 0 is PAD, index 1 is UNK; ordinary characters follow in sorted order.
    """

    def __init__(self, chars: Iterable[str] = ()):
        chars = sorted({c for c in chars if c not in (PAD, UNK)})
        for c in chars:
            if len(c) != 1:
                raise ValueError(f"alphabet symbols must be single characters: {c!r}")
        self.symbols: tuple[str, ...] = (PAD, UNK, *chars)
        self._index = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Alphabet":
        return cls(ch for t in tokens for ch in t)

    @classmethod
    def from_symbols(cls, symbols: Sequence[str]) -> "Alphabet":
        if tuple(symbols[:2]) != (PAD, UNK):
            raise ValueError("symbol list must start with PAD and UNK")
        alpha = cls(symbols[2:])
        if alpha.symbols != tuple(symbols):
            raise ValueError("symbol list is not in canonical order")
        return alpha

    @property
    def pad_index(self) -> int:
        return 0

    @property
    def unk_index(self) -> int:
        return 1

    def index(self, ch: str) -> int:
        return self._index.get(ch, 1)

    def encode(self, token: str) -> list[int]:
        return [self._index.get(ch, 1) for ch in token]

    def __len__(self):
        return len(self.symbols)

    def __contains__(self, ch):
        return ch in self._index

    def __eq__(self, other):
        return isinstance(other, Alphabet) and self.symbols == other.symbols

    def __hash__(self):
        return hash(self.symbols)

    def __repr__(self):
        return f"Alphabet({''.join(self.symbols[2:])!r})"


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insertions, deletions, substitutions)."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_to_many(a: str, candidates: Sequence[str]) -> np.ndarray:
    """Distances from ``a`` to every candidate, vectorized over candidates."""
    k = len(candidates)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    lens = np.fromiter((len(c) for c in candidates), dtype=np.int64, count=k)
    width = int(lens.max())
    chars = np.full((k, width), -1, dtype=np.int64)
    for r, c in enumerate(candidates):
        if c:
            chars[r, : len(c)] = [ord(ch) for ch in c]
    prev = np.broadcast_to(np.arange(width + 1), (k, width + 1)).copy()
    for i, ca in enumerate(a, 1):
        cost = (chars != ord(ca)).astype(np.int64)
        diag = np.minimum(prev[:, 1:] + 1, prev[:, :-1] + cost)
        cur = np.empty_like(prev)
        cur[:, 0] = i
        for j in range(1, width + 1):
            cur[:, j] = np.minimum(diag[:, j - 1], cur[:, j - 1] + 1)
        prev = cur
    return prev[np.arange(k), lens]


@dataclass(frozen=True)
class EditOp:
    kind: str  # "match" | "substitute" | "delete" | "insert"
    i: int  # position in source before the op
    j: int  # position in target before the op
    src: str = ""
    tgt: str = ""

    def __str__(self):
        if self.kind == "match":
            return f"match({self.i},{self.src})"
        if self.kind == "substitute":
            return f"substitute({self.i},{self.src}->{self.tgt})"
        if self.kind == "delete":
            return f"delete({self.i},{self.src})"
        return f"insert({self.i},{self.tgt})"


def _suffix_distances(a: str, b: str) -> list[list[int]]:
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m, -1, -1):
        for j in range(n, -1, -1):
            if i == m:
                d[i][j] = n - j
            elif j == n:
                d[i][j] = m - i
            else:
                d[i][j] = min(
                    d[i + 1][j + 1] + (a[i] != b[j]),
                    d[i + 1][j] + 1,
                    d[i][j + 1] + 1,
                )
    return d


def levenshtein_alignment(a: str, b: str) -> list[EditOp]:
    """One optimal edit script from ``a`` to ``b``.

    Walks from the start of both strings, preferring match, then substitute,
    delete, insert among the moves that stay optimal.
    """
    d = _suffix_distances(a, b)
    m, n = len(a), len(b)
    ops = []
    i = j = 0
    while i < m or j < n:
        here = d[i][j]
        if i < m and j < n and a[i] == b[j] and d[i + 1][j + 1] == here:
            ops.append(EditOp("match", i, j, a[i], b[j]))
            i, j = i + 1, j + 1
        elif i < m and j < n and d[i + 1][j + 1] + 1 == here:
            ops.append(EditOp("substitute", i, j, a[i], b[j]))
            i, j = i + 1, j + 1
        elif i < m and d[i + 1][j] + 1 == here:
            ops.append(EditOp("delete", i, j, a[i], ""))
            i += 1
        else:
            ops.append(EditOp("insert", i, j, "", b[j]))
            j += 1
    return ops


def apply_alignment(a: str, ops: Sequence[EditOp]) -> str:
    out = []
    pos = 0
    for op in ops:
        if op.kind in ("match", "substitute"):
            if a[pos] != op.src:
                raise ValueError(f"operation {op} does not apply at source position {pos}")
            out.append(op.tgt)
            pos += 1
        elif op.kind == "delete":
            if a[pos] != op.src:
                raise ValueError(f"operation {op} does not apply at source position {pos}")
            pos += 1
        else:
            out.append(op.tgt)
    if pos != len(a):
        raise ValueError("operations do not consume the whole source")
    return "".join(out)


def _round1(x: float) -> float:
    return float(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass
class LdHistogram:
    counts: dict[str, int]
    total: int
    zero_ld: int = 0
    percentages: dict[str, float] = field(init=False)

    def __post_init__(self):
        if sum(self.counts.values()) != self.total:
            raise ValueError("bucket counts do not sum to total")
        self.percentages = {
            k: _round1(100.0 * self.counts[k] / self.total) if self.total else 0.0
            for k in LD_BUCKETS
        }

    def rows(self) -> list[tuple[str, int, float]]:
        return [(k, self.counts[k], self.percentages[k]) for k in LD_BUCKETS]


def ld_bucket(ld: int) -> str:
    return "4+" if ld >= 4 else str(ld)


def _pair_strings(pair) -> tuple[str, str]:
    if hasattr(pair, "variant"):
        return pair.variant, pair.standard
    a, b = pair[:2]
    return a, b


def ld_histogram(pairs: Iterable) -> LdHistogram:
    """Bucket pair distances into 1, 2, 3 and 4+; LD-0 pairs are counted aside."""
    counts = Counter({k: 0 for k in LD_BUCKETS})
    zero = 0
    seen = 0
    for pair in pairs:
        seen += 1
        ld = levenshtein(*_pair_strings(pair))
        if ld == 0:
            zero += 1
        else:
            counts[ld_bucket(ld)] += 1
    if seen == 0:
        raise EmptyCorpusError("cannot build an LD histogram from an empty corpus")
    return LdHistogram(counts=dict(counts), total=seen - zero, zero_ld=zero)
