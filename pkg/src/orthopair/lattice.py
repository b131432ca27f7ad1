"""Probabilistic edit lattice and the memoryless statistical edit distance.

A lattice for source ``a`` (length m) and target ``b`` (length n) is the
(m+1) x (n+1) grid of prefix pairs. Every path from (0, 0) to (m, n) is a
derivation of ``b`` from ``a`` built from three moves, each scored at the cell
it enters:

* delete     (i-1, j)   -> (i, j), consumes a[i-1]
* insert     (i, j-1)   -> (i, j), consumes b[j-1]
* substitute (i-1, j-1) -> (i, j), consumes both; a match is a substitution
  of a character for itself.

Operation arrays are stacked in the order ``OPS = (delete, insert, substitute)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateLatticeError, EmptyCorpusError, ModelFileError, ModelVersionError
from .strings import Alphabet

OPS = ("delete", "insert", "substitute")
DEL, INS, SUB = 0, 1, 2
NEG_INF = -math.inf


def _lse(*xs: float) -> float:
    hi = max(xs)
    if hi == NEG_INF:
        return NEG_INF
    return hi + math.log(sum(math.exp(x - hi) for x in xs))


@dataclass
class CostGrid:
    """Log-scores for entering each lattice cell by each operation.

    ``logp`` has shape (3, m+1, n+1). Entries for moves that cannot enter a
    cell (delete/substitute into row 0, insert/substitute into column 0) are
    never read by the lattice.
    """

    logp: np.ndarray

    def __post_init__(self):
        self.logp = np.asarray(self.logp, dtype=np.float64)
        if self.logp.ndim != 3 or self.logp.shape[0] != 3:
            raise ValueError(f"expected shape (3, m+1, n+1), got {self.logp.shape}")

    @property
    def m(self) -> int:
        return self.logp.shape[1] - 1

    @property
    def n(self) -> int:
        return self.logp.shape[2] - 1

    @property
    def del_logp(self):
        return self.logp[DEL]

    @property
    def ins_logp(self):
        return self.logp[INS]

    @property
    def sub_logp(self):
        return self.logp[SUB]

    @classmethod
    def constant(cls, m: int, n: int, p_del: float, p_ins: float, p_sub: float) -> "CostGrid":
        logp = np.empty((3, m + 1, n + 1))
        logp[DEL], logp[INS], logp[SUB] = math.log(p_del), math.log(p_ins), math.log(p_sub)
        return cls(logp)

    def defined_mask(self) -> np.ndarray:
        mask = np.ones(self.logp.shape, dtype=bool)
        mask[DEL, 0, :] = False
        mask[SUB, 0, :] = False
        mask[INS, :, 0] = False
        mask[SUB, :, 0] = False
        return mask

    def cell_log_mass(self) -> np.ndarray:
        """Per-cell log of the total operation mass over all three moves."""
        with np.errstate(invalid="ignore", divide="ignore"):
            hi = self.logp.max(axis=0)
            safe = np.where(np.isfinite(hi), hi, 0.0)
            return safe + np.log(np.exp(self.logp - safe).sum(axis=0))

    def is_normalized(self, tol: float = 1e-9) -> bool:
        """True if every cell except (0, 0) carries a 3-way distribution."""
        mass = np.exp(self.cell_log_mass())
        mass[0, 0] = 1.0
        return bool(np.all(np.abs(mass - 1.0) <= tol))

    def check_probabilities(self) -> None:
        vals = self.logp[self.defined_mask()]
        if np.any(np.isnan(vals)) or np.any(vals > 1e-12):
            raise ValueError("defined grid entries must be log-probabilities (<= 0)")


@dataclass
class LatticeResult:
    log_alpha: np.ndarray
    log_beta: np.ndarray
    loglik: float
    posteriors: np.ndarray  # (3, m+1, n+1) expected operation counts

    @property
    def expected_length(self) -> float:
        return float(self.posteriors.sum())


def forward_backward(grid: CostGrid) -> LatticeResult:
    """Forward and backward masses, likelihood and operation posteriors."""
    m, n = grid.m, grid.n
    lp = grid.logp
    alpha = np.full((m + 1, n + 1), NEG_INF)
    alpha[0, 0] = 0.0
    for i in range(m + 1):
        for j in range(n + 1):
            if i == 0 and j == 0:
                continue
            d = alpha[i - 1, j] + lp[DEL, i, j] if i > 0 else NEG_INF
            s = alpha[i, j - 1] + lp[INS, i, j] if j > 0 else NEG_INF
            u = alpha[i - 1, j - 1] + lp[SUB, i, j] if i > 0 and j > 0 else NEG_INF
            alpha[i, j] = _lse(d, s, u)

    beta = np.full((m + 1, n + 1), NEG_INF)
    beta[m, n] = 0.0
    for i in range(m, -1, -1):
        for j in range(n, -1, -1):
            if i == m and j == n:
                continue
            d = beta[i + 1, j] + lp[DEL, i + 1, j] if i < m else NEG_INF
            s = beta[i, j + 1] + lp[INS, i, j + 1] if j < n else NEG_INF
            u = beta[i + 1, j + 1] + lp[SUB, i + 1, j + 1] if i < m and j < n else NEG_INF
            beta[i, j] = _lse(d, s, u)

    loglik = float(alpha[m, n])
    if loglik == NEG_INF or math.isnan(loglik):
        raise DegenerateLatticeError(f"no path carries mass in a {m}x{n} lattice")

    post = np.zeros((3, m + 1, n + 1))
    with np.errstate(invalid="ignore"):
        if m > 0:
            post[DEL, 1:, :] = np.exp(alpha[:-1, :] + lp[DEL, 1:, :] + beta[1:, :] - loglik)
        if n > 0:
            post[INS, :, 1:] = np.exp(alpha[:, :-1] + lp[INS, :, 1:] + beta[:, 1:] - loglik)
        if m > 0 and n > 0:
            post[SUB, 1:, 1:] = np.exp(alpha[:-1, :-1] + lp[SUB, 1:, 1:] + beta[1:, 1:] - loglik)
    post = np.nan_to_num(post, nan=0.0)
    return LatticeResult(alpha, beta, loglik, post)


def viterbi(grid: CostGrid) -> tuple[list[tuple[tuple[int, int], str]], float]:
    """Highest-scoring path as ``[((i, j), op), ...]`` plus its log-score.

    Each entry names the cell the move enters. Ties prefer substitute, then
    delete, then insert.
    """
    m, n = grid.m, grid.n
    lp = grid.logp
    best = np.full((m + 1, n + 1), NEG_INF)
    back = np.full((m + 1, n + 1), -1, dtype=np.int64)
    best[0, 0] = 0.0
    for i in range(m + 1):
        for j in range(n + 1):
            if i == 0 and j == 0:
                continue
            cands = []
            if i > 0 and j > 0:
                cands.append((best[i - 1, j - 1] + lp[SUB, i, j], SUB))
            if i > 0:
                cands.append((best[i - 1, j] + lp[DEL, i, j], DEL))
            if j > 0:
                cands.append((best[i, j - 1] + lp[INS, i, j], INS))
            score, op = cands[0]
            for s, o in cands[1:]:
                if s > score:
                    score, op = s, o
            best[i, j] = score
            back[i, j] = op
    best_logp = float(best[m, n])
    if best_logp == NEG_INF or math.isnan(best_logp):
        raise DegenerateLatticeError(f"no path carries mass in a {m}x{n} lattice")
    path = []
    i, j = m, n
    while (i, j) != (0, 0):
        op = int(back[i, j])
        path.append(((i, j), OPS[op]))
        if op == DEL:
            i -= 1
        elif op == INS:
            j -= 1
        else:
            i, j = i - 1, j - 1
    path.reverse()
    return path, best_logp


def path_logp(grid: CostGrid, path: Sequence[tuple[tuple[int, int], str]]) -> float:
    return float(sum(grid.logp[OPS.index(op), i, j] for (i, j), op in path))


# ---------------------------------------------------------------------------
# Memoryless statistical edit distance


MODEL_TEXT_MAGIC = "#memoryless-edit-model"
MODEL_TEXT_VERSION = 1


@dataclass
class MemorylessEditModel:
    """A single joint distribution over edit operations.

    ``sub_logp[x, y]``, ``del_logp[x]`` and ``ins_logp[y]`` are indexed by
    alphabet symbol; all K*K + 2K probabilities sum to one.
    """

    alphabet: Alphabet
    sub_logp: np.ndarray
    del_logp: np.ndarray
    ins_logp: np.ndarray
    trained: bool = False
    history: list[float] = field(default_factory=list)

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "MemorylessEditModel":
        k = len(alphabet)
        lp = -math.log(k * k + 2 * k)
        return cls(alphabet, np.full((k, k), lp), np.full(k, lp), np.full(k, lp))

    @classmethod
    def from_op_logits(cls, alphabet: Alphabet, logits: Sequence[float]) -> "MemorylessEditModel":
        """Character-blind model whose operation types have weights exp(logits).

        Per-cell renormalized grids of this model have the same 3-way
        distribution ``softmax(logits)`` at every cell.
        """
        k = len(alphabet)
        l_del, l_ins, l_sub = (float(x) for x in logits)
        log_z = _lse(math.log(k) + l_del, math.log(k) + l_ins, 2 * math.log(k) + l_sub)
        return cls(
            alphabet,
            np.full((k, k), l_sub - log_z),
            np.full(k, l_del - log_z),
            np.full(k, l_ins - log_z),
        )

    def total_mass(self) -> float:
        return float(
            np.exp(self.sub_logp).sum() + np.exp(self.del_logp).sum() + np.exp(self.ins_logp).sum()
        )

    def param(self, op: str, chars: tuple[str, ...]) -> float:
        idx = [self.alphabet.index(c) for c in chars]
        if op == "substitute":
            return float(self.sub_logp[idx[0], idx[1]])
        if op == "delete":
            return float(self.del_logp[idx[0]])
        if op == "insert":
            return float(self.ins_logp[idx[0]])
        raise ValueError(f"unknown operation {op!r}")

    def loglik(self, pairs: Iterable) -> float:
        return float(sum(forward_backward(memoryless_cost_grid(self, a, b)).loglik for a, b in _as_tuples(pairs)))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(dump_memoryless(self))

    @classmethod
    def load(cls, path) -> "MemorylessEditModel":
        with open(path, encoding="utf-8") as fh:
            return parse_memoryless(fh.read())


def _as_tuples(pairs: Iterable) -> list[tuple[str, str]]:
    out = []
    for p in pairs:
        if hasattr(p, "variant"):
            out.append((p.variant, p.standard))
        else:
            out.append((p[0], p[1]))
    return out


def memoryless_cost_grid(
    model: MemorylessEditModel, a: str, b: str, renormalize: bool = False
) -> CostGrid:
    """Position-independent lattice scores for ``a`` -> ``b``.

    With ``renormalize=False`` entries are the joint log-probabilities and
    impossible moves are -inf. With ``renormalize=True`` each cell holds the
    conditional 3-way distribution over (delete a_i, insert b_j, substitute
    a_i b_j), with the PAD symbol standing in for the missing side on the
    boundary row and column.
    """
    alpha = model.alphabet
    ai = np.array([alpha.pad_index] + alpha.encode(a), dtype=np.int64)
    bj = np.array([alpha.pad_index] + alpha.encode(b), dtype=np.int64)
    m, n = len(a), len(b)
    logp = np.empty((3, m + 1, n + 1))
    logp[DEL] = model.del_logp[ai][:, None]
    logp[INS] = model.ins_logp[bj][None, :]
    logp[SUB] = model.sub_logp[np.ix_(ai, bj)]
    if renormalize:
        with np.errstate(invalid="ignore"):
            hi = logp.max(axis=0)
            log_z = hi + np.log(np.exp(logp - hi).sum(axis=0))
        logp = logp - log_z
    else:
        logp[DEL, 0, :] = NEG_INF
        logp[SUB, 0, :] = NEG_INF
        logp[INS, :, 0] = NEG_INF
        logp[SUB, :, 0] = NEG_INF
    return CostGrid(logp)


class ExpectedCounts:
    """Additive buffer of expected operation counts; merge per-worker buffers with ``+=``."""

    def __init__(self, k: int):
        self.sub = np.zeros((k, k))
        self.dele = np.zeros(k)
        self.ins = np.zeros(k)
        self.loglik = 0.0

    def add(self, alphabet: Alphabet, a: str, b: str, result: LatticeResult) -> None:
        ai = np.array(alphabet.encode(a), dtype=np.int64)
        bj = np.array(alphabet.encode(b), dtype=np.int64)
        post = result.posteriors
        if len(ai):
            np.add.at(self.dele, ai, post[DEL, 1:, :].sum(axis=1))
        if len(bj):
            np.add.at(self.ins, bj, post[INS, :, 1:].sum(axis=0))
        if len(ai) and len(bj):
            np.add.at(self.sub, (ai[:, None], bj[None, :]), post[SUB, 1:, 1:])
        self.loglik += result.loglik

    def __iadd__(self, other: "ExpectedCounts"):
        self.sub += other.sub
        self.dele += other.dele
        self.ins += other.ins
        self.loglik += other.loglik
        return self


def e_step(
    model: MemorylessEditModel, pairs: Sequence[tuple[str, str]], renormalize: bool = False
) -> ExpectedCounts:
    counts = ExpectedCounts(len(model.alphabet))
    for a, b in pairs:
        grid = memoryless_cost_grid(model, a, b, renormalize=renormalize)
        counts.add(model.alphabet, a, b, forward_backward(grid))
    return counts


def m_step(model: MemorylessEditModel, counts: ExpectedCounts, floor: float) -> None:
    sub = counts.sub + floor
    dele = counts.dele + floor
    ins = counts.ins + floor
    total = sub.sum() + dele.sum() + ins.sum()
    with np.errstate(divide="ignore"):
        model.sub_logp = np.log(sub / total)
        model.del_logp = np.log(dele / total)
        model.ins_logp = np.log(ins / total)


def em_fit_memoryless(
    pairs: Iterable,
    alphabet: Alphabet,
    iters: int = 10,
    floor: float = 1e-6,
    init: MemorylessEditModel | None = None,
) -> MemorylessEditModel:
    """Fit the joint edit distribution by expectation maximization.

    ``history`` holds the corpus log-likelihood before each update and, as
    its final entry, the likelihood of the returned parameters.
    """
    pairs = _as_tuples(pairs)
    if not pairs:
        raise EmptyCorpusError("em_fit_memoryless needs at least one pair")
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if init is None:
        model = MemorylessEditModel.uniform(alphabet)
    else:
        model = MemorylessEditModel(
            alphabet, init.sub_logp.copy(), init.del_logp.copy(), init.ins_logp.copy()
        )
    history = []
    for _ in range(iters):
        counts = e_step(model, pairs)
        history.append(counts.loglik)
        m_step(model, counts, floor)
    history.append(model.loglik(pairs))
    model.history = history
    model.trained = True
    return model



def dump_memoryless(model: MemorylessEditModel) -> str:
    """Text serialization: two header lines, then ``op<TAB>chars<TAB>logp`` rows.

    Symbols in ``chars`` are space-separated; tokens never contain whitespace.
    """
    syms = model.alphabet.symbols
    lines = [
        f"{MODEL_TEXT_MAGIC}\tversion={MODEL_TEXT_VERSION}\ttrained={int(model.trained)}",
        "#alphabet\t" + " ".join(syms),
    ]
    if model.history:
        lines.append("#history\t" + " ".join(repr(float(x)) for x in model.history))
    for x, sx in enumerate(syms):
        for y, sy in enumerate(syms):
            lines.append(f"sub\t{sx} {sy}\t{float(model.sub_logp[x, y])!r}")
    for x, sx in enumerate(syms):
        lines.append(f"del\t{sx}\t{float(model.del_logp[x])!r}")
    for y, sy in enumerate(syms):
        lines.append(f"ins\t{sy}\t{float(model.ins_logp[y])!r}")
    return "\n".join(lines) + "\n"


def parse_memoryless(text: str) -> MemorylessEditModel:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(MODEL_TEXT_MAGIC):
        raise ModelVersionError("not a memoryless edit model file")
    meta = dict(kv.split("=", 1) for kv in lines[0].split("\t")[1:])
    if int(meta.get("version", -1)) != MODEL_TEXT_VERSION:
        raise ModelVersionError(f"unsupported model version {meta.get('version')}")
    if len(lines) < 2 or not lines[1].startswith("#alphabet\t"):
        raise ModelFileError("missing alphabet header")
    alphabet = Alphabet.from_symbols(lines[1].split("\t", 1)[1].split(" "))
    history = []
    body = lines[2:]
    if body and body[0].startswith("#history\t"):
        history = [float(x) for x in body[0].split("\t", 1)[1].split(" ")]
        body = body[1:]
    k = len(alphabet)
    model = MemorylessEditModel(
        alphabet, np.full((k, k), np.nan), np.full(k, np.nan), np.full(k, np.nan),
        trained=bool(int(meta.get("trained", 0))), history=history,
    )
    idx = {s: i for i, s in enumerate(alphabet.symbols)}
    for row in body:
        if not row:
            continue
        op, chars, val = row.split("\t")
        syms = chars.split(" ")
        if op == "sub":
            model.sub_logp[idx[syms[0]], idx[syms[1]]] = float(val)
        elif op == "del":
            model.del_logp[idx[syms[0]]] = float(val)
        elif op == "ins":
            model.ins_logp[idx[syms[0]]] = float(val)
        else:
            raise ModelFileError(f"unknown operation row {op!r}")
    if np.isnan(model.sub_logp).any() or np.isnan(model.del_logp).any() or np.isnan(model.ins_logp).any():
        raise ModelFileError("model file is missing parameter rows")
    return model
