import sys
from pathlib import Path

import numpy as np
import pytest

from logipath.atoms import Atom, Category, Literal, ReasoningPath
from logipath.lexicon import load_lexicon

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture(scope="session")
def lex():
    return load_lexicon()


VARS = ["A", "B", "C", "D", "E"]
TWO_PLACE = [Category.CAUSE, Category.SA, Category.NA]

# one representative surface per category, matching the bundled lexicon
SURFACE = {
    Category.CAUSE: "because",
    Category.SA: "if",
    Category.NA: "only if",
    Category.FACT: "fact",
}


def make_atom(
    rng: np.random.Generator,
    variables=VARS,
    categories=(Category.CAUSE, Category.SA, Category.NA, Category.FACT),
) -> Atom:
    cat = categories[int(rng.integers(len(categories)))]
    if cat is Category.FACT:
        lits = (_lit(rng, variables),)
    else:
        first = _lit(rng, variables)
        second = _lit(rng, variables, exclude=first.var)
        lits = (first, second)
    return Atom(cat, SURFACE[cat], lits)


def _lit(rng, variables, exclude=None) -> Literal:
    pool = [v for v in variables if v != exclude]
    var = pool[int(rng.integers(len(pool)))]
    return Literal(var, bool(rng.integers(2)))


def make_path(
    rng: np.random.Generator, body_len: int = 3, head_len: int = 1
) -> ReasoningPath:
    body = tuple(make_atom(rng) for _ in range(body_len))
    head = tuple(make_atom(rng) for _ in range(head_len))
    variables = {l.var for a in body + head for l in a.literals}
    bindings = {v: f"clause {v.lower()}" for v in variables}
    return ReasoningPath(body=body, head=head, bindings=bindings)
