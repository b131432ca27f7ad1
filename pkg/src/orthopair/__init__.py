"""Learnable edit distance for pairing orthographic variants with standard forms."""

__version__ = "0.1.0"

from .corpus import Lexicon, SplitSpec, TokenPair, load_lexicon, load_pairs, split
from .lattice import CostGrid, MemorylessEditModel, em_fit_memoryless, forward_backward, viterbi
from .strings import Alphabet, levenshtein, levenshtein_alignment, ld_histogram

__all__ = [
    "Alphabet",
    "CostGrid",
    "Lexicon",
    "MemorylessEditModel",
    "SplitSpec",
    "TokenPair",
    "em_fit_memoryless",
    "forward_backward",
    "ld_histogram",
    "levenshtein",
    "levenshtein_alignment",
    "load_lexicon",
    "load_pairs",
    "split",
    "viterbi",
]
