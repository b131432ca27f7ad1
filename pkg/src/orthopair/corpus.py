"""Pair corpora, lexicons, candidate extraction from raw text, and splits."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyFileError,
    InvalidTokenError,
    MissingColumnsError,
    UndecodableError,
)
from .strings import normalize_token

log = logging.getLogger(__name__)

FORMATS = ("gb-tsv", "fce-tsv")
GB_COLUMNS = ("variant", "standard", "context", "source_id")
FCE_COLUMNS = ("variant", "standard", "error_code", "source_id")
REQUIRED_COLUMNS = ("variant", "standard")


@dataclass(frozen=True)
class TokenPair:
    variant: str
    standard: str
    context: str | None = None
    source_id: str | None = None


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    raw: str = ""


@dataclass(frozen=True)
class Lexicon:
    tokens: tuple[str, ...]
    name: str = "lexicon"
    _index: frozenset = field(default=frozenset(), repr=False, compare=False)

    def __post_init__(self):
        if list(self.tokens) != sorted(set(self.tokens)):
            raise ValueError("lexicon tokens must be sorted and unique")
        object.__setattr__(self, "_index", frozenset(self.tokens))

    @classmethod
    def from_tokens(cls, tokens: Iterable[str], name: str = "lexicon", lowercase: bool = True) -> "Lexicon":
        out = set()
        for t in tokens:
            try:
                out.add(normalize_token(t, lowercase=lowercase))
            except InvalidTokenError:
                continue
        return cls(tuple(sorted(out)), name)

    def __contains__(self, token):
        return token in self._index

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


def load_lexicon(path, name: str | None = None, lowercase: bool = True) -> Lexicon:
    """One token per line; blank and invalid lines are skipped, case folded by default."""
    path = Path(path)
    text = _decode(path.read_bytes(), path)
    return Lexicon.from_tokens(text.splitlines(), name=name or path.stem, lowercase=lowercase)


def bundled_lexicon() -> Lexicon:
    """1,000 frequent English words shipped with the package."""
    text = resources.files("orthopair").joinpath("data/common_en_1k.txt").read_text("utf-8")
    return Lexicon.from_tokens(text.splitlines(), name="common_en_1k")


def _decode(data: bytes, path) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        raise UndecodableError(f"invalid UTF-8 at byte {exc.start}", path=path, line=line) from None


def load_pairs(
    path,
    fmt: str = "gb-tsv",
    *,
    lowercase: bool = True,
    rejects: list | None = None,
) -> list[TokenPair]:
    """Read a tab-separated pair file with a header row.

    Columns are located by header name. Rows that fail normalization, have
    identical variant and standard, or (for fce-tsv) carry a non-"S" error
    code are appended to ``rejects`` instead of being returned.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown pair format {fmt!r}; expected one of {FORMATS}")
    path = Path(path)
    raw = path.read_bytes()
    if not raw.strip():
        raise EmptyFileError("pair file is empty", path=path)
    text = _decode(raw, path)
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    header = [h.strip().lower() for h in lines[0].lstrip("﻿").split("\t")]
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise MissingColumnsError(f"header lacks columns {missing}", path=path, line=1)
    col = {name: header.index(name) for name in header}
    out: list[TokenPair] = []
    bad: list[Reject] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split("\t")
        if len(cells) < len(header):
            cells += [""] * (len(header) - len(cells))

        def get(name):
            i = col.get(name)
            value = cells[i].strip() if i is not None else ""
            return value or None

        if fmt == "fce-tsv":
            code = get("error_code")
            if code is not None and not code.upper().startswith("S"):
                bad.append(Reject(lineno, f"non-orthographic error code {code}", line))
                continue
        try:
            variant = normalize_token(get("variant") or "", lowercase=lowercase)
            standard = normalize_token(get("standard") or "", lowercase=lowercase)
        except InvalidTokenError as exc:
            bad.append(Reject(lineno, str(exc), line))
            continue
        if variant == standard:
            bad.append(Reject(lineno, "variant equals standard", line))
            continue
        context = get("context") if fmt == "gb-tsv" else None
        out.append(TokenPair(variant, standard, context, get("source_id")))
    if rejects is not None:
        rejects.extend(bad)
    log.info("loaded %d pairs from %s (%d rejected)", len(out), path, len(bad))
    return out


def write_pairs(path, pairs: Iterable[TokenPair]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(GB_COLUMNS) + "\n")
        for p in pairs:
            fh.write(f"{p.variant}\t{p.standard}\t{p.context or ''}\t{p.source_id or ''}\n")


def write_rejects(path, rejects: Iterable[Reject]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("line\treason\n")
        for r in rejects:
            fh.write(f"{r.line}\t{r.reason}\n")


# ---------------------------------------------------------------------------
# Candidate extraction

ABBREVIATIONS = {
    "mr", "mrs", "ms", "dr", "st", "jr", "sr", "prof", "rev", "gen", "col",
    "capt", "lieut", "gov", "hon", "mt", "vs", "etc", "no", "co", "messrs",
}
_BOUNDARY = re.compile(r"[.!?]+[\"'”’)\]]*\s+(?=[\"'“‘(\[]*[A-Z])")
_WORD = re.compile(r"[\w'’‘-]+")


def split_sentences(text: str) -> list[str]:
    """Split on terminal punctuation followed by whitespace and a capital letter."""
    text = " ".join(text.split())
    out = []
    start = 0
    for m in _BOUNDARY.finditer(text):
        before = text[start : m.start()].split()
        last = before[-1].lower().strip("\"'“‘(") if before else ""
        if text[m.start()] == "." and (last in ABBREVIATIONS or (len(last) == 1 and last.isalpha())):
            continue
        out.append(text[start : m.end()].strip())
        start = m.end()
    tail = text[start:].strip()
    if tail:
        out.append(tail)
    return out


def tokenize(sentence: str) -> list[str]:
    """Word tokens keeping internal apostrophes and hyphens.

    Edge apostrophes are kept as elision marks, except a pair wrapping the
    whole token, which is read as quotation.
    """
    out = []
    for raw in _WORD.findall(sentence):
        tok = raw.strip("-_").replace("’", "'").replace("‘", "'")
        if len(tok) > 2 and tok[0] == "'" and tok[-1] == "'":
            tok = tok[1:-1]
        if tok.strip("'"):
            out.append(tok)
    return out


def extract_candidates(text: str, lexicon: Lexicon) -> list[tuple[str, str]]:
    """Tokens that look like orthographic variants, each with its sentence.

    A token qualifies when it has no digits, is not capitalized, and its
    lowercased form is not in the lexicon. A sentence-initial capital is
    tolerated unless the same capitalized form also occurs mid-sentence in
    the document, which marks it as a proper noun.
    """
    sentences = [tokenize(s) for s in split_sentences(text)]
    proper = {tok for toks in sentences for tok in toks[1:] if tok[:1].isupper()}
    out = []
    for sentence, toks in zip(split_sentences(text), sentences):
        for pos, tok in enumerate(toks):
            if any(ch.isdigit() for ch in tok):
                continue
            if any(ch.isupper() for ch in tok):
                if pos != 0 or tok in proper or any(ch.isupper() for ch in tok.lstrip("'")[1:]):
                    continue
            try:
                norm = normalize_token(tok)
            except InvalidTokenError:
                continue
            if not any(ch.isalpha() for ch in norm):
                continue
            if norm in lexicon:
                continue
            out.append((norm, sentence))
    return out


# ---------------------------------------------------------------------------
# Splits


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0
    grouping: str = "variant-type"  # or "pair"

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ValueError("fractions must be three non-negative numbers")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(self.fractions)}")
        if self.grouping not in ("pair", "variant-type"):
            raise ValueError(f"unknown grouping {self.grouping!r}")


def largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    quotas = [total * f for f in fractions]
    sizes = [int(q) for q in quotas]
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: total - sum(sizes)]:
        sizes[i] += 1
    # keep every split with a positive fraction non-empty when enough items exist
    if total >= len(fractions):
        for i, f in enumerate(fractions):
            if f > 0 and sizes[i] == 0:
                donor = max(range(len(sizes)), key=lambda k: (sizes[k], -k))
                sizes[donor] -= 1
                sizes[i] += 1
    return sizes


def split(pairs: Sequence[TokenPair], spec: SplitSpec = SplitSpec()):
    """Seeded train/validation/test partition.

    With ``variant-type`` grouping all pairs sharing a variant land in the
    same split, and sizes are allotted in groups.
    """
    if spec.grouping == "pair":
        groups = [[i] for i in range(len(pairs))]
    else:
        by_variant: dict[str, list[int]] = {}
        for i, p in enumerate(pairs):
            by_variant.setdefault(p.variant, []).append(i)
        groups = list(by_variant.values())
    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(len(groups))
    sizes = largest_remainder(len(groups), spec.fractions)
    parts = []
    start = 0
    for size in sizes:
        idx = sorted(i for g in order[start : start + size] for i in groups[g])
        parts.append([pairs[i] for i in idx])
        start += size
    return tuple(parts)
