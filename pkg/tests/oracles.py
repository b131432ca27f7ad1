"""Independent reference implementations used as test oracles."""

import itertools
import math
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def recursive_ld(a: str, b: str) -> int:
    """Edit distance straight from the recursive definition over edit paths."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(
        recursive_ld(a[1:], b) + 1,
        recursive_ld(a, b[1:]) + 1,
        recursive_ld(a[1:], b[1:]) + (a[0] != b[0]),
    )


def all_strings(alphabet: str, max_len: int):
    for n in range(max_len + 1):
        for chars in itertools.product(alphabet, repeat=n):
            yield "".join(chars)


def edit_paths(m: int, n: int):
    """Every move sequence from (0, 0) to (m, n) as [((i, j), op), ...]."""
    if m == 0 and n == 0:
        yield []
        return
    if m > 0:
        for p in edit_paths(m - 1, n):
            yield p + [((m, n), "delete")]
    if n > 0:
        for p in edit_paths(m, n - 1):
            yield p + [((m, n), "insert")]
    if m > 0 and n > 0:
        for p in edit_paths(m - 1, n - 1):
            yield p + [((m, n), "substitute")]


OP_INDEX = {"delete": 0, "insert": 1, "substitute": 2}


def path_prob(logp: np.ndarray, path) -> float:
    return math.exp(sum(logp[OP_INDEX[op], i, j] for (i, j), op in path))


def enumerate_likelihood(logp: np.ndarray) -> float:
    m, n = logp.shape[1] - 1, logp.shape[2] - 1
    return sum(path_prob(logp, p) for p in edit_paths(m, n))


def enumerate_posteriors(logp: np.ndarray) -> np.ndarray:
    m, n = logp.shape[1] - 1, logp.shape[2] - 1
    post = np.zeros_like(logp)
    total = 0.0
    for p in edit_paths(m, n):
        w = path_prob(logp, p)
        total += w
        for (i, j), op in p:
            post[OP_INDEX[op], i, j] += w
    return post / total


def random_grid(rng, m: int, n: int) -> np.ndarray:
    """Per-cell Dirichlet operation distributions, as log-probabilities."""
    probs = rng.dirichlet(np.ones(3), size=(m + 1, n + 1))
    return np.log(np.moveaxis(probs, -1, 0))


def grid_f1(scores, labels, tau):
    tp = sum(1 for s, y in zip(scores, labels) if s >= tau and y)
    fp = sum(1 for s, y in zip(scores, labels) if s >= tau and not y)
    fn = sum(1 for s, y in zip(scores, labels) if s < tau and y)
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)
