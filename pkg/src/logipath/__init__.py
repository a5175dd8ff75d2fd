"""Logical reasoning toolkit: atoms, rewrites, augmentation, and a
path-attention model with built-in reverse-mode autodiff."""

from .atoms import (
    Atom,
    AugmentedSample,
    Category,
    DerivationStep,
    Literal,
    ReasoningPath,
    Sample,
    atoms_equal,
    negate,
    parse_atom,
)
from .lexicon import Lexicon, load_lexicon

__version__ = "0.1.0"

__all__ = [
    "Atom",
    "AugmentedSample",
    "Category",
    "DerivationStep",
    "Literal",
    "Lexicon",
    "ReasoningPath",
    "Sample",
    "atoms_equal",
    "load_lexicon",
    "negate",
    "parse_atom",
    "__version__",
]
