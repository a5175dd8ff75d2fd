"""Rewrite rules, a truth-table entailment oracle, and atom closure.

Connectives are interpreted as material conditionals over clause
variables.  Cause and SA read left to right (arg1 implies arg2); NA
reads right to left (arg2 implies arg1), which is the one reading that
makes the NA-to-SA rewrite an equivalence.  Fact asserts its literal.

Four rewrite rules are supported:

* contrapositive:  swap and negate both arguments (Cause, SA)
* na_to_sa:        NA(A,B) becomes SA(~A,~B)
* conjoin:         chain X(A,B) and Y(B,C) into X(A,C) (non-Fact)
* modus_ponens:    Fact(A) and X(A,B) yield Fact(B)

conjoin and modus_ponens are not sound for every category mix, so the
closure re-checks each candidate against the oracle by default and
keeps only certified derivations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Iterator, Sequence

from .atoms import FACT_SURFACE, Atom, Category, Literal, ReasoningPath

MAX_ORACLE_VARS = 20

RULE_CONTRAPOSITIVE = "contrapositive"
RULE_NA_TO_SA = "na_to_sa"
RULE_CONJOIN = "conjoin"
RULE_MODUS_PONENS = "modus_ponens"
RULE_AXIOM = "axiom"

# Default surface given to SA atoms produced by the NA rewrite.
NA_TO_SA_SURFACE = "if"


class RuleNotApplicable(ValueError):
    """Rule preconditions not met for the given atoms."""


class OracleCapacityError(ValueError):
    """Too many distinct variables for truth-table enumeration."""


Direction = str  # "forward" (arg1 -> arg2) or "backward" (arg2 -> arg1)


@dataclass(frozen=True)
class SemanticsMap:
    """Implication direction per two-place category."""

    directions: dict[Category, Direction] = field(
        default_factory=lambda: {
            Category.CAUSE: "forward",
            Category.SA: "forward",
            Category.NA: "backward",
        }
    )

    def implication(self, atom: Atom) -> tuple[Literal, Literal]:
        if atom.category is Category.FACT:
            raise ValueError("Fact atoms are assertions, not implications")
        direction = self.directions[atom.category]
        a, b = atom.literals
        return (a, b) if direction == "forward" else (b, a)


DEFAULT_SEMANTICS = SemanticsMap()


def _literal_true(lit: Literal, env: dict[str, bool]) -> bool:
    value = env[lit.var]
    return value if lit.positive else not value


def atom_true(atom: Atom, env: dict[str, bool], semantics: SemanticsMap) -> bool:
    if atom.category is Category.FACT:
        return _literal_true(atom.literals[0], env)
    p, q = semantics.implication(atom)
    return (not _literal_true(p, env)) or _literal_true(q, env)


def entails(
    premises: Sequence[Atom],
    conclusion: Atom,
    semantics: SemanticsMap = DEFAULT_SEMANTICS,
) -> bool:
    """Truth-table entailment over every assignment of the variables."""
    variables = sorted(
        {
            lit.var
            for atom in (*premises, conclusion)
            for lit in atom.literals
        }
    )
    if len(variables) > MAX_ORACLE_VARS:
        raise OracleCapacityError(
            f"{len(variables)} variables exceed the "
            f"{MAX_ORACLE_VARS}-variable oracle limit"
        )
    for values in product((False, True), repeat=len(variables)):
        env = dict(zip(variables, values))
        if all(atom_true(a, env, semantics) for a in premises) and not atom_true(
            conclusion, env, semantics
        ):
            return False
    return True


def equivalent(
    a: Atom, b: Atom, semantics: SemanticsMap = DEFAULT_SEMANTICS
) -> bool:
    return entails([a], b, semantics) and entails([b], a, semantics)


def contrapositive(atom: Atom) -> Atom:
    """Swap and negate both arguments; valid for Cause and SA only."""
    if atom.category not in (Category.CAUSE, Category.SA):
        raise RuleNotApplicable(
            f"contrapositive needs Cause or SA, got {atom.category.value}"
        )
    a, b = atom.literals
    return Atom(atom.category, atom.surface, (b.negate(), a.negate()))


def na_to_sa(atom: Atom, surface: str = NA_TO_SA_SURFACE) -> Atom:
    """NA(A,B) becomes the equivalent SA(~A,~B)."""
    if atom.category is not Category.NA:
        raise RuleNotApplicable(
            f"na_to_sa needs NA, got {atom.category.value}"
        )
    a, b = atom.literals
    return Atom(Category.SA, surface, (a.negate(), b.negate()))


def conjoin(a1: Atom, a2: Atom) -> Atom | None:
    """Chain two-place atoms sharing a middle literal; None if no chain.

    The output copies the first atom's category and surface.  Validity
    depends on the category mix, which the closure checks separately.
    """
    if a1.category is Category.FACT or a2.category is Category.FACT:
        raise RuleNotApplicable("conjoin needs two-place atoms")
    if a1.literals[1] != a2.literals[0]:
        return None
    return Atom(a1.category, a1.surface, (a1.literals[0], a2.literals[1]))


def modus_ponens(fact: Atom, implication: Atom) -> Atom | None:
    """Fact(A) with X(A,B) yields Fact(B); None if arguments mismatch."""
    if fact.category is not Category.FACT:
        raise RuleNotApplicable("modus_ponens needs a Fact first argument")
    if implication.category is Category.FACT:
        raise RuleNotApplicable("modus_ponens needs a two-place second argument")
    if fact.literals[0] != implication.literals[0]:
        return None
    return Atom(Category.FACT, FACT_SURFACE, (implication.literals[1],))


@dataclass(frozen=True)
class ClosureConfig:
    max_rounds: int = 8
    max_atoms: int = 64
    sound_only: bool = True
    semantics: SemanticsMap = field(default_factory=SemanticsMap)
    sa_surface: str = NA_TO_SA_SURFACE

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.max_atoms < 1:
            raise ValueError("max_atoms must be >= 1")


@dataclass(frozen=True)
class Derivation:
    """One rule application among atoms of a base."""

    rule: str
    premises: tuple[int, ...]  # indices into AtomBase.atoms
    output: int


@dataclass
class AtomBase:
    """Closure output: axioms plus derived atoms, with traces.

    ``traces`` maps the index of each derived atom to the applied rule
    and premise indices.  ``truncated`` flags a run stopped by the atom
    or round budget before reaching a fixed point.
    """

    atoms: list[Atom]
    n_axioms: int
    traces: dict[int, Derivation]
    truncated: bool = False

    def derived(self) -> list[Atom]:
        return self.atoms[self.n_axioms :]

    def index_of(self, atom: Atom) -> int | None:
        key = atom.key()
        for i, a in enumerate(self.atoms):
            if a.key() == key:
                return i
        return None

    def trace_lines(self) -> list[str]:
        lines = []
        for i in sorted(self.traces):
            d = self.traces[i]
            args = ", ".join(self.atoms[p].canonical() for p in d.premises)
            lines.append(f"{self.atoms[i].canonical()} <= {d.rule}({args})")
        return lines


def _informative(atom: Atom) -> bool:
    """Reject self-loop outputs like X implies X, true under any reading."""
    return atom.arity == 1 or atom.literals[0] != atom.literals[1]


def _applications(
    atoms: Sequence[Atom], cfg: ClosureConfig
) -> Iterator[tuple[str, tuple[int, ...], Atom]]:
    """Yield every rule application over the given atoms, in index order.

    Tautological outputs are dropped: the soundness gate would admit
    them vacuously, and they carry no information.
    """
    for i, a in enumerate(atoms):
        if a.category in (Category.CAUSE, Category.SA):
            yield RULE_CONTRAPOSITIVE, (i,), contrapositive(a)
        elif a.category is Category.NA:
            yield RULE_NA_TO_SA, (i,), na_to_sa(a, cfg.sa_surface)
    for i, a1 in enumerate(atoms):
        for j, a2 in enumerate(atoms):
            if i == j:
                continue
            if (
                a1.category is not Category.FACT
                and a2.category is not Category.FACT
            ):
                chained = conjoin(a1, a2)
                if chained is not None and _informative(chained):
                    yield RULE_CONJOIN, (i, j), chained
            elif (
                a1.category is Category.FACT
                and a2.category is not Category.FACT
            ):
                fact = modus_ponens(a1, a2)
                if fact is not None:
                    yield RULE_MODUS_PONENS, (i, j), fact


def _admits(
    rule: str,
    premises: Sequence[Atom],
    output: Atom,
    cfg: ClosureConfig,
) -> bool:
    if not cfg.sound_only:
        return True
    return entails(premises, output, cfg.semantics)


def closure(
    source: ReasoningPath | Iterable[Atom], cfg: ClosureConfig | None = None
) -> AtomBase:
    """Saturate the body atoms under the rewrite rules.

    Round based: each round applies every rule to the atoms known at
    the start of the round, deduplicates by (category, literals), and
    appends the survivors.  Stops at a fixed point or when a budget is
    hit, in which case ``truncated`` is set.
    """
    cfg = cfg or ClosureConfig()
    axioms = list(source.body) if isinstance(source, ReasoningPath) else list(source)

    atoms: list[Atom] = []
    index: dict[tuple, int] = {}
    for atom in axioms:
        if atom.key() not in index:
            index[atom.key()] = len(atoms)
            atoms.append(atom)
    base = AtomBase(atoms=atoms, n_axioms=len(atoms), traces={})

    for _ in range(cfg.max_rounds):
        snapshot = len(atoms)
        produced = False
        overflow = False
        for rule, premise_idx, candidate in _applications(atoms[:snapshot], cfg):
            if candidate.key() in index:
                continue
            premises = [atoms[p] for p in premise_idx]
            if not _admits(rule, premises, candidate, cfg):
                continue
            if len(atoms) >= cfg.max_atoms:
                overflow = True
                break
            index[candidate.key()] = len(atoms)
            base.traces[len(atoms)] = Derivation(rule, premise_idx, len(atoms))
            atoms.append(candidate)
            produced = True
        if overflow:
            base.truncated = True
            break
        if not produced:
            return base  # fixed point
    else:
        # round budget exhausted; check whether more was derivable
        for rule, premise_idx, candidate in _applications(atoms, cfg):
            if candidate.key() in index:
                continue
            if _admits(rule, [atoms[p] for p in premise_idx], candidate, cfg):
                base.truncated = True
                break
    return base


def enumerate_derivations(base: AtomBase, cfg: ClosureConfig) -> list[Derivation]:
    """Every admissible rule application among atoms already in the base.

    Unlike the traces, which record only the first derivation of each
    atom, this lists all of them, which is what subset reachability
    checks need.
    """
    index = {a.key(): i for i, a in enumerate(base.atoms)}
    out: list[Derivation] = []
    for rule, premise_idx, candidate in _applications(base.atoms, cfg):
        target = index.get(candidate.key())
        if target is None:
            continue  # truncated base can lack some outputs
        if target in premise_idx:
            continue
        premises = [base.atoms[p] for p in premise_idx]
        if _admits(rule, premises, candidate, cfg):
            out.append(Derivation(rule, premise_idx, target))
    return out


def reachable(
    start: Iterable[int], derivations: Sequence[Derivation]
) -> set[int]:
    """Forward-chain derivations from a seed subset of atom indices."""
    have = set(start)
    pending = True
    while pending:
        pending = False
        for d in derivations:
            if d.output not in have and all(p in have for p in d.premises):
                have.add(d.output)
                pending = True
    return have
