"""Reference entailment checker used to certify the package's logic.

Deliberately written from scratch with a different model representation
(bitmask subsets of true variables) so that agreement with the package
oracle is meaningful evidence rather than the same code twice.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

from logipath.atoms import Atom, Category, Literal


def _variables(atoms: Iterable[Atom]) -> list[str]:
    seen: dict[str, None] = {}
    for atom in atoms:
        for lit in atom.literals:
            seen.setdefault(lit.var, None)
    return list(seen)


def _true_sets(variables: Sequence[str]) -> Iterator[frozenset[str]]:
    for mask in range(1 << len(variables)):
        yield frozenset(
            v for bit, v in enumerate(variables) if mask >> bit & 1
        )


def _lit_holds(lit: Literal, true_set: frozenset[str]) -> bool:
    return (lit.var in true_set) == lit.positive


def holds(atom: Atom, true_set: frozenset[str]) -> bool:
    """Truth of one atom in the model given by a set of true variables.

    Cause and SA state that their first argument implies the second;
    NA states the reverse; Fact asserts its single literal outright.
    """
    if atom.category is Category.FACT:
        return _lit_holds(atom.literals[0], true_set)
    first, second = atom.literals
    if atom.category is Category.NA:
        antecedent, consequent = second, first
    else:
        antecedent, consequent = first, second
    if _lit_holds(antecedent, true_set):
        return _lit_holds(consequent, true_set)
    return True


def ref_entails(premises: Sequence[Atom], conclusion: Atom) -> bool:
    variables = _variables([*premises, conclusion])
    for true_set in _true_sets(variables):
        if all(holds(p, true_set) for p in premises) and not holds(
            conclusion, true_set
        ):
            return False
    return True


def ref_equivalent(a: Atom, b: Atom) -> bool:
    return ref_entails([a], b) and ref_entails([b], a)


def ref_consistent(atoms: Sequence[Atom]) -> bool:
    variables = _variables(atoms)
    return any(
        all(holds(a, true_set) for a in atoms)
        for true_set in _true_sets(variables)
    )
