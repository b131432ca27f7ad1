"""Neural edit distance.

A shared bidirectional GRU turns each string into contextual character
vectors. A small feed-forward scorer reads the (source position, target
position) vector pair of every lattice cell and emits a 3-way distribution
over the operation entering that cell (delete, insert, substitute). The
lattice sums over derivations to give a pair log-likelihood, and a scalar
affine head over the length-normalized likelihood gives the match
probability.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .errors import (
    AlphabetMismatchError,
    DegenerateLatticeError,
    ModelFileError,
    ModelVersionError,
    TruncatedModelError,
)
from .lattice import CostGrid
from .strings import Alphabet

DTYPE = torch.float64
NEG = -1e30  # finite stand-in for log(0); keeps logsumexp gradients NaN-free
NONMATCH_CLAMP = 1.0 - 1e-6

MAGIC = b"NEDM"
FORMAT_VERSION = 1


class NeuralEditModel(nn.Module):
    def __init__(
        self,
        alphabet: Alphabet,
        d_emb: int = 256,
        layers: int = 2,
        hidden: int | None = None,
        seed: int = 0,
    ):
        super().__init__()
        if d_emb < 2 or d_emb % 2:
            raise ValueError("d_emb must be a positive even number")
        if layers < 1:
            raise ValueError("layers must be >= 1")
        self.alphabet = alphabet
        self.d_emb = d_emb
        self.layers = layers
        self.hidden = hidden or d_emb
        self.threshold = 0.5
        k = len(alphabet)
        self.embedding = nn.Embedding(k, d_emb)
        self.encoder = nn.GRU(
            d_emb, d_emb // 2, num_layers=layers, bidirectional=True, batch_first=True
        )
        self.src_boundary = nn.Parameter(torch.zeros(d_emb))
        self.tgt_boundary = nn.Parameter(torch.zeros(d_emb))
        # input = [source vector; target vector; row-0 flag; column-0 flag]
        self.scorer_hidden = nn.Linear(2 * d_emb + 2, self.hidden)
        self.scorer_out = nn.Linear(self.hidden, 3)
        self.match_gain = nn.Parameter(torch.tensor(1.0))
        self.match_bias = nn.Parameter(torch.tensor(0.0))
        self.to(DTYPE)
        self.reset_parameters(seed)

    def reset_parameters(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        gru_scale = 1.0 / math.sqrt(self.d_emb // 2)

        def uniform_(p, a):
            p.copy_((torch.rand(p.shape, generator=gen, dtype=DTYPE) * 2 - 1) * a)

        with torch.no_grad():
            for name, p in self.named_parameters():
                if name == "match_gain":
                    p.fill_(1.0)
                elif name == "match_bias" or "bias" in name:
                    p.zero_()
                elif name.startswith("encoder."):
                    uniform_(p, gru_scale)
                else:
                    uniform_(p, 0.1)

    def config(self) -> dict:
        return {"d_emb": self.d_emb, "layers": self.layers, "hidden": self.hidden}

    # -- encoding -----------------------------------------------------------

    def encode_batch(self, tokens: Sequence[str]) -> tuple[torch.Tensor, torch.Tensor]:
        """Contextual vectors for each token, zero-padded to (B, L, d_emb)."""
        lengths = torch.tensor([len(t) for t in tokens], dtype=torch.int64)
        if (lengths == 0).any():
            raise ValueError("cannot encode an empty token")
        width = int(lengths.max())
        ids = torch.full((len(tokens), width), self.alphabet.pad_index, dtype=torch.int64)
        for r, t in enumerate(tokens):
            ids[r, : len(t)] = torch.tensor(self.alphabet.encode(t))
        packed = pack_padded_sequence(
            self.embedding(ids), lengths, batch_first=True, enforce_sorted=False
        )
        out, _ = self.encoder(packed)
        out, _ = pad_packed_sequence(out, batch_first=True, total_length=width)
        return out, lengths

    # -- lattice scoring ----------------------------------------------------

    def cell_logp(self, src: torch.Tensor, tgt: torch.Tensor) -> torch.Tensor:
        """Operation log-probabilities for every cell.

        ``src`` is (B, M, d) and ``tgt`` is (B, N, d); returns (B, M+1, N+1, 3)
        with the boundary vectors occupying row 0 and column 0.
        """
        b = src.shape[0]
        d = self.d_emb
        src = torch.cat([self.src_boundary.expand(b, 1, d), src], dim=1)
        tgt = torch.cat([self.tgt_boundary.expand(b, 1, d), tgt], dim=1)
        w = self.scorer_hidden.weight
        p = src @ w[:, :d].T
        q = tgt @ w[:, d : 2 * d].T
        row_flag = torch.zeros(src.shape[1], 1, dtype=DTYPE)
        row_flag[0] = 1.0
        col_flag = torch.zeros(tgt.shape[1], 1, dtype=DTYPE)
        col_flag[0] = 1.0
        p = p + row_flag * w[:, 2 * d]
        q = q + col_flag * w[:, 2 * d + 1]
        h = torch.tanh(p[:, :, None, :] + q[:, None, :, :] + self.scorer_hidden.bias)
        return F.log_softmax(self.scorer_out(h), dim=-1)

    def forward(self, pairs: Sequence[tuple[str, str]]):
        """Score a batch of (source, target) pairs.

        Returns ``(logp, loglik, src_lens, tgt_lens)``.
        """
        uniq = sorted({t for pair in pairs for t in pair[:2]})
        pos = {t: i for i, t in enumerate(uniq)}
        enc, lens = self.encode_batch(uniq)
        si = torch.tensor([pos[p[0]] for p in pairs])
        ti = torch.tensor([pos[p[1]] for p in pairs])
        m, n = lens[si], lens[ti]
        src = enc[si, : int(m.max())]
        tgt = enc[ti, : int(n.max())]
        logp = self.cell_logp(src, tgt)
        return logp, lattice_loglik(logp, m, n), m, n


def lattice_loglik(logp: torch.Tensor, src_lens: torch.Tensor, tgt_lens: torch.Tensor) -> torch.Tensor:
    """Batched forward pass over anti-diagonals; returns log alpha(m, n) per pair."""
    bsz, m1, n1, _ = logp.shape
    big_m, big_n = m1 - 1, n1 - 1
    rows = torch.arange(m1)
    edge = torch.full((bsz, 1), NEG, dtype=logp.dtype)
    prev2 = torch.full((bsz, m1), NEG, dtype=logp.dtype)
    first = torch.full((bsz, m1), NEG, dtype=logp.dtype)
    first[:, 0] = 0.0
    prev1 = first
    diags = [first]
    for k in range(1, big_m + big_n + 1):
        cols = k - rows
        valid = (cols >= 0) & (cols <= big_n)
        cell = logp[:, rows, cols.clamp(0, big_n), :]
        up = torch.cat([edge, prev1[:, :-1]], dim=1)
        diag = torch.cat([edge, prev2[:, :-1]], dim=1)
        terms = torch.stack(
            [up + cell[..., 0], prev1 + cell[..., 1], diag + cell[..., 2]], dim=-1
        )
        cur = torch.where(valid, torch.logsumexp(terms, dim=-1), torch.tensor(NEG, dtype=logp.dtype))
        diags.append(cur)
        prev2, prev1 = prev1, cur
    stacked = torch.stack(diags, dim=0)  # (K, B, M+1)
    batch = torch.arange(bsz)
    return stacked[src_lens + tgt_lens, batch, src_lens]


def lattice_posteriors(logp: torch.Tensor, src_lens, tgt_lens) -> torch.Tensor:
    """Expected operation counts per cell, as d loglik / d logp on a detached copy."""
    with torch.enable_grad():
        leaf = logp.detach().requires_grad_(True)
        ll = lattice_loglik(leaf, src_lens, tgt_lens)
        (grad,) = torch.autograd.grad(ll.sum(), leaf)
    return grad


# ---------------------------------------------------------------------------
# Inference surface


@dataclass(frozen=True)
class PairScore:
    loglik: float
    norm_ll: float
    p_match: float


def match_probability(model: NeuralEditModel, norm_ll: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(model.match_gain * norm_ll + model.match_bias)


def encode(model: NeuralEditModel, token: str) -> np.ndarray:
    with torch.no_grad():
        out, _ = model.encode_batch([token])
    return out[0, : len(token)].numpy().copy()


def score_grid(model: NeuralEditModel, a: str, b: str) -> CostGrid:
    with torch.no_grad():
        logp, _, _, _ = model([(a, b)])
    return CostGrid(logp[0, : len(a) + 1, : len(b) + 1].permute(2, 0, 1).numpy().copy())


def _check_finite(loglik: torch.Tensor, pairs) -> None:
    bad = ~torch.isfinite(loglik) | (loglik <= NEG / 2)
    if bad.any():
        idx = int(torch.nonzero(bad)[0])
        raise DegenerateLatticeError(f"lattice has no mass for pair {tuple(pairs[idx][:2])!r}")


def score_pairs(
    model: NeuralEditModel, pairs: Sequence[tuple[str, str]], batch_size: int = 512
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized pair scoring; returns (loglik, norm_ll, p_match) arrays."""
    lls, norms, probs = [], [], []
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            _, ll, m, n = model(chunk)
            _check_finite(ll, chunk)
            norm = ll / (m + n).to(DTYPE)
            lls.append(ll.numpy())
            norms.append(norm.numpy())
            probs.append(match_probability(model, norm).numpy())
    if not lls:
        empty = np.zeros(0)
        return empty, empty.copy(), empty.copy()
    return np.concatenate(lls), np.concatenate(norms), np.concatenate(probs)


def pair_score(model: NeuralEditModel, a: str, b: str) -> PairScore:
    ll, norm, p = score_pairs(model, [(a, b)])
    return PairScore(float(ll[0]), float(norm[0]), float(p[0]))


# ---------------------------------------------------------------------------
# Training losses


@dataclass
class LossBreakdown:
    em_loss: torch.Tensor
    bce_loss: torch.Tensor
    nonmatch_nll: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.em_loss + self.bce_loss + self.nonmatch_nll

    def as_floats(self) -> dict[str, float]:
        return {
            "em_loss": float(self.em_loss.detach()),
            "bce_loss": float(self.bce_loss.detach()),
            "nonmatch_nll": float(self.nonmatch_nll.detach()),
            "total": float(self.total.detach()),
        }


def loss(model: NeuralEditModel, batch, posteriors: torch.Tensor | None = None) -> LossBreakdown:
    """Equal-weight EM, binary cross-entropy and non-match NLL losses.

    ``batch`` holds ``(a, b, label)`` triples with a truthy label for matches.
    ``posteriors`` overrides the lattice posteriors used as fixed targets by
    the EM term; gradient checks pass the posteriors of the unperturbed model.
    """
    if not batch:
        raise ValueError("empty batch")
    logp, loglik, m, n = model([(a, b) for a, b, _ in batch])
    _check_finite(loglik, batch)
    labels = torch.tensor([1.0 if lab else 0.0 for _, _, lab in batch], dtype=DTYPE)
    pos = labels > 0.5
    neg = ~pos
    norm = loglik / (m + n).to(DTYPE)
    zero = torch.zeros((), dtype=DTYPE)

    if pos.any():
        gamma = posteriors if posteriors is not None else lattice_posteriors(logp, m, n)
        per_pair = -(gamma * logp).sum(dim=(1, 2, 3))
        em = per_pair[pos].mean()
    else:
        em = zero

    bce = F.binary_cross_entropy_with_logits(model.match_gain * norm + model.match_bias, labels)

    if neg.any():
        lik = torch.exp(norm[neg]).clamp(max=NONMATCH_CLAMP)
        nonmatch = -torch.log1p(-lik).mean()
    else:
        nonmatch = zero
    return LossBreakdown(em, bce, nonmatch)


def batch_posteriors(model: NeuralEditModel, batch) -> torch.Tensor:
    with torch.no_grad():
        logp, _, m, n = model([(a, b) for a, b, *_ in batch])
    return lattice_posteriors(logp, m, n)


# ---------------------------------------------------------------------------
# Binary model file
#
# Layout (little-endian):
#   b"NEDM", u32 version
#   u32 symbol count, then per symbol: u16 byte length + UTF-8 bytes
#   u32 d_emb, u32 layers, u32 hidden
#   f64 threshold, f64 match gain, f64 match bias
#   u32 tensor count, then per tensor: u16 name length + UTF-8 name,
#       u8 ndim, ndim x u32 shape, prod(shape) x f64 values


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise TruncatedModelError("model file ends unexpectedly")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise TruncatedModelError("model file ends unexpectedly")
        out = self.data[self.pos : self.pos + size]
        self.pos += size
        return out


def dumps(model: NeuralEditModel) -> bytes:
    out = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    syms = model.alphabet.symbols
    out.append(struct.pack("<I", len(syms)))
    for s in syms:
        enc = s.encode("utf-8")
        out.append(struct.pack("<H", len(enc)) + enc)
    out.append(struct.pack("<III", model.d_emb, model.layers, model.hidden))
    out.append(
        struct.pack(
            "<ddd", model.threshold, float(model.match_gain.detach()), float(model.match_bias.detach())
        )
    )
    state = model.state_dict()
    out.append(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        enc = name.encode("utf-8")
        arr = tensor.detach().cpu().numpy().astype("<f8", copy=False)
        out.append(struct.pack("<H", len(enc)) + enc)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


def loads(data: bytes, alphabet: Alphabet | None = None) -> NeuralEditModel:
    r = _Reader(data)
    if r.raw(4) != MAGIC:
        raise ModelVersionError("not a neural edit model file (bad magic)")
    (version,) = r.take("<I")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format version {version}")
    (count,) = r.take("<I")
    syms = []
    for _ in range(count):
        (size,) = r.take("<H")
        syms.append(r.raw(size).decode("utf-8"))
    try:
        file_alphabet = Alphabet.from_symbols(syms)
    except ValueError as exc:
        raise AlphabetMismatchError(f"invalid alphabet in model file: {exc}") from None
    if alphabet is not None and alphabet != file_alphabet:
        raise AlphabetMismatchError("model alphabet differs from the expected alphabet")
    d_emb, layers, hidden = r.take("<III")
    threshold, _, _ = r.take("<ddd")
    model = NeuralEditModel(file_alphabet, d_emb=d_emb, layers=layers, hidden=hidden)
    expected = model.state_dict()
    (n_tensors,) = r.take("<I")
    state = {}
    for _ in range(n_tensors):
        (size,) = r.take("<H")
        name = r.raw(size).decode("utf-8")
        (ndim,) = r.take("<B")
        shape = r.take(f"<{ndim}I")
        numel = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.raw(8 * numel), dtype="<f8").reshape(shape)
        if name not in expected:
            raise ModelFileError(f"unexpected tensor {name!r}")
        if tuple(expected[name].shape) != tuple(shape):
            if name == "embedding.weight":
                raise AlphabetMismatchError(
                    f"embedding has {shape[0]} rows but alphabet has {len(file_alphabet)} symbols"
                )
            raise ModelFileError(f"tensor {name!r} has shape {shape}, expected {tuple(expected[name].shape)}")
        state[name] = torch.from_numpy(arr.astype(np.float64))
    missing = set(expected) - set(state)
    if missing:
        raise TruncatedModelError(f"model file lacks tensors: {sorted(missing)}")
    if r.pos != len(data):
        raise ModelFileError("trailing bytes after model data")
    model.load_state_dict(state)
    model.threshold = threshold
    return model


def save(model: NeuralEditModel, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path, alphabet: Alphabet | None = None) -> NeuralEditModel:
    return loads(Path(path).read_bytes(), alphabet=alphabet)
