"""Pair-classification metrics and full-lexicon ranking (MRR)."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import neural
from .corpus import Lexicon
from .errors import EmptyCorpusError
from .training import f1_score


@dataclass
class QueryRank:
    variant: str
    standard: str
    rank: int | None  # None when the standard is not in the lexicon

    @property
    def reciprocal_rank(self) -> float:
        return 1.0 / self.rank if self.rank else 0.0


@dataclass
class EvalReport:
    tau: float | None = None
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0
    queries: list[QueryRank] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        return f1_score(self.tp, self.fp, self.fn)

    @property
    def mrr(self) -> float:
        if not self.queries:
            return float("nan")
        return float(np.mean([q.reciprocal_rank for q in self.queries]))

    @property
    def coverage(self) -> float:
        if not self.queries:
            return float("nan")
        return sum(q.rank is not None for q in self.queries) / len(self.queries)

    def merge(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(
            self.tau if self.tau is not None else other.tau,
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn,
            self.queries + other.queries,
        )

    def summary_rows(self) -> list[tuple[str, str]]:
        def fmt(x):
            return "" if x is None else (f"{x:.6f}" if isinstance(x, float) else str(x))

        return [
            ("tau", fmt(self.tau)), ("tp", fmt(self.tp)), ("fp", fmt(self.fp)),
            ("fn", fmt(self.fn)), ("tn", fmt(self.tn)),
            ("precision", fmt(self.precision)), ("recall", fmt(self.recall)), ("f1", fmt(self.f1)),
            ("mrr", fmt(self.mrr) if self.queries else ""),
            ("coverage", fmt(self.coverage) if self.queries else ""),
            ("queries", fmt(len(self.queries))),
        ]

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerows(self.summary_rows())
        return buf.getvalue()

    def ranks_tsv(self) -> str:
        lines = ["variant\tstandard\trank\treciprocal_rank"]
        for q in self.queries:
            rank = "miss" if q.rank is None else str(q.rank)
            lines.append(f"{q.variant}\t{q.standard}\t{rank}\t{q.reciprocal_rank:.6f}")
        return "\n".join(lines) + "\n"


def classification_report(probs: Sequence[float], labels: Sequence[bool], tau: float) -> EvalReport:
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if p.size == 0:
        raise EmptyCorpusError("empty test set")
    pred = p >= tau
    return EvalReport(
        tau=float(tau),
        tp=int((pred & y).sum()),
        fp=int((pred & ~y).sum()),
        fn=int((~pred & y).sum()),
        tn=int((~pred & ~y).sum()),
    )


def classify_pairs(model, data: Sequence[tuple[str, str, bool]], tau: float | None = None) -> EvalReport:
    """Predict a match iff p_match >= tau (the model's calibrated threshold by default)."""
    if not data:
        raise EmptyCorpusError("empty test set")
    _, _, probs = neural.score_pairs(model, [(a, b) for a, b, _ in data])
    return classification_report(probs, [lab for *_, lab in data], model.threshold if tau is None else tau)


def pessimistic_rank(scores: np.ndarray, index: int) -> int:
    """Rank counting every tied candidate, the true one included, as ahead."""
    s = scores[index]
    return int((scores > s).sum() + (scores == s).sum())


def mean_reciprocal_rank(ranks: Sequence[int | None]) -> float:
    if not ranks:
        return float("nan")
    return float(np.mean([1.0 / r if r else 0.0 for r in ranks]))


def rank_with_scores(
    queries: Sequence[tuple[str, str]], lexicon: Lexicon, score_fn
) -> EvalReport:
    """Rank every lexicon token for each (variant, standard) query.

    ``score_fn(variant, candidates)`` returns one score per candidate,
    higher meaning more likely.
    """
    if not len(lexicon):
        raise EmptyCorpusError("empty lexicon")
    tokens = list(lexicon.tokens)
    where = {t: i for i, t in enumerate(tokens)}
    out = EvalReport()
    for variant, standard in queries:
        idx = where.get(standard.lower())
        if idx is None:
            out.queries.append(QueryRank(variant, standard, None))
            continue
        scores = np.asarray(score_fn(variant, tokens), dtype=np.float64)
        out.queries.append(QueryRank(variant, standard, pessimistic_rank(scores, idx)))
    return out


def rank_against_lexicon(model, queries, lexicon: Lexicon, batch_size: int = 1024) -> EvalReport:
    """MRR of the true standard among all lexicon candidates, ranked by p_match."""
    queries = [(q.variant, q.standard) if hasattr(q, "variant") else (q[0], q[1]) for q in queries]

    def score(variant, candidates):
        _, _, p = neural.score_pairs(model, [(variant, c) for c in candidates], batch_size=batch_size)
        return p

    return rank_with_scores(queries, lexicon, score)


SWEEP_HEADER = ("strategy", "n", "f1", "mrr")


def sweep_rows(results: Mapping[tuple[str, int], EvalReport]) -> list[tuple[str, int, float, float]]:
    from .negatives import KINDS

    rows = [(k, int(n), r.f1, r.mrr) for (k, n), r in results.items()]
    rows.sort(key=lambda r: (KINDS.index(r[0]) if r[0] in KINDS else len(KINDS), r[0], r[1]))
    return rows


def sweep_report(results: Mapping[tuple[str, int], EvalReport]) -> str:
    """Table-2-shaped CSV: one row per (strategy, n)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for kind, n, f1, mrr in sweep_rows(results):
        w.writerow([kind, n, f"{f1:.4f}", f"{mrr:.4f}"])
    return buf.getvalue()


def mrr_by_n_csv(results: Mapping[tuple[str, int], EvalReport]) -> str:
    """Wide table for plotting MRR against n, one column per strategy."""
    rows = sweep_rows(results)
    kinds = list(dict.fromkeys(r[0] for r in rows))
    ns = sorted({r[1] for r in rows})
    lookup = {(k, n): mrr for k, n, _, mrr in rows}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", *kinds])
    for n in ns:
        w.writerow([n, *("" if (k, n) not in lookup else f"{lookup[(k, n)]:.4f}" for k in kinds)])
    return buf.getvalue()
