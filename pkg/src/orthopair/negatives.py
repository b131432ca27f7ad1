"""Known-false (variant, candidate) pairs drawn from a lexicon."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Lexicon, TokenPair
from .errors import LexiconTooSmallError
from .strings import levenshtein_to_many

KINDS = ("random", "ld", "mixed")


@dataclass(frozen=True)
class NegativeStrategy:
    kind: str
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown negative strategy {self.kind!r}; expected one of {KINDS}")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def ld_count(self) -> int:
        if self.kind == "ld":
            return self.n
        if self.kind == "mixed":
            return self.n // 2
        return 0

    @property
    def random_count(self) -> int:
        return self.n - self.ld_count


@dataclass(frozen=True)
class NegativeRow:
    variant: str
    candidate: str
    ld: int
    source: str  # "ld" or "random" draw


@dataclass
class NegativeSet:
    strategy: NegativeStrategy
    rows: list[NegativeRow] = field(default_factory=list)

    @property
    def avg_ld(self) -> float:
        if not self.rows:
            return float("nan")
        return float(np.mean([r.ld for r in self.rows]))

    def by_variant(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for r in self.rows:
            out.setdefault(r.variant, []).append(r.candidate)
        return out

    def labeled(self) -> list[tuple[str, str, bool]]:
        return [(r.variant, r.candidate, False) for r in self.rows]

    def to_tsv(self) -> str:
        buf = io.StringIO()
        buf.write("variant\tcandidate\tlabel\tstrategy\tseed\n")
        for r in self.rows:
            buf.write(f"{r.variant}\t{r.candidate}\tnon-match\t{self.strategy.kind}\t{self.strategy.seed}\n")
        return buf.getvalue()


def variant_seed(base_seed: int, variant: str) -> int:
    digest = hashlib.sha256(f"{base_seed}\x00{variant}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _nearest(variant: str, pool: Sequence[str], k: int) -> list[int]:
    if k == 0:
        return []
    lds = levenshtein_to_many(variant, pool)
    # pool is sorted, so a stable sort on LD breaks ties lexicographically
    order = np.argsort(lds, kind="stable")
    return [int(i) for i in order[:k]]


def generate_negatives(
    pairs: Iterable[TokenPair], lexicon: Lexicon, strategy: NegativeStrategy
) -> NegativeSet:
    """Draw ``strategy.n`` negatives per distinct variant.

    The variant itself and every standard it is paired with are excluded.
    Random draws use a per-variant seed derived from ``strategy.seed``.
    """
    standards: dict[str, set[str]] = {}
    for p in pairs:
        standards.setdefault(p.variant, set()).add(p.standard.lower())
    tokens = lexicon.tokens
    out = NegativeSet(strategy)
    for variant, stds in standards.items():
        excluded = stds | {variant.lower()}
        pool = [t for t in tokens if t.lower() not in excluded]
        if len(pool) < strategy.n:
            raise LexiconTooSmallError(variant, len(pool), strategy.n)
        near = _nearest(variant, pool, strategy.ld_count)
        chosen = set(near)
        rest = [i for i in range(len(pool)) if i not in chosen]
        rng = np.random.default_rng(variant_seed(strategy.seed, variant))
        drawn = rng.choice(len(rest), size=strategy.random_count, replace=False) if strategy.random_count else []
        picks = [(pool[i], "ld") for i in near] + [(pool[rest[int(k)]], "random") for k in drawn]
        lds = levenshtein_to_many(variant, [c for c, _ in picks])
        out.rows.extend(
            NegativeRow(variant, cand, int(ld), src) for (cand, src), ld in zip(picks, lds)
        )
    return out


def labeled_pairs(pairs: Iterable[TokenPair], negatives: NegativeSet | None = None) -> list[tuple[str, str, bool]]:
    """Positives followed by negatives as ``(a, b, label)`` triples."""
    out = [(p.variant, p.standard, True) for p in pairs]
    if negatives is not None:
        out.extend(negatives.labeled())
    return out


def negative_ld_report(sets: Mapping[tuple[str, int], NegativeSet]) -> list[tuple[str, int, float]]:
    rows = [(kind, int(n), s.avg_ld) for (kind, n), s in sets.items()]
    rows.sort(key=lambda r: (KINDS.index(r[0]) if r[0] in KINDS else len(KINDS), r[0], r[1]))
    return rows


def negative_ld_csv(sets: Mapping[tuple[str, int], NegativeSet]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["strategy", "n", "avg_ld"])
    for kind, n, avg in negative_ld_report(sets):
        w.writerow([kind, n, f"{avg:.6f}"])
    return buf.getvalue()
