"""Core domain types: literals, atoms, reasoning paths, and samples.

An atom is a connective tag applied to one or two signed clause
variables, e.g. ``NA:OnlyIf(A,~B)``.  A reasoning path packs the atoms
extracted from a sample's context (the body) and from its question plus
one answer option (the head), together with the variable bindings.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable


class Category(Enum):
    """Connective families: causal, sufficient, necessary, and factual."""

    CAUSE = "Cause"
    SA = "SA"
    NA = "NA"
    FACT = "Fact"


# Arity by category: Fact wraps a single clause, the rest relate two.
ARITY = {
    Category.CAUSE: 2,
    Category.SA: 2,
    Category.NA: 2,
    Category.FACT: 1,
}

# Implicit surface used for sentences carrying no explicit connective.
FACT_SURFACE = "fact"


@dataclass(frozen=True)
class Literal:
    """A clause variable with a polarity sign."""

    var: str
    positive: bool = True

    def negate(self) -> Literal:
        return Literal(self.var, not self.positive)

    def text(self) -> str:
        return self.var if self.positive else "~" + self.var


def negate(lit: Literal) -> Literal:
    """Flip the sign of a literal; an involution on any input."""
    return lit.negate()


def var_name(index: int) -> str:
    """Deterministic variable names: A..Z, then V26, V27, ..."""
    if index < 0:
        raise ValueError(f"variable index must be >= 0, got {index}")
    if index < 26:
        return chr(ord("A") + index)
    return f"V{index}"


@dataclass(frozen=True)
class Atom:
    """A tagged connective applied to signed clause variables.

    ``surface`` records the connective phrase actually seen in text
    (lowercase, space separated).  Atom identity for reasoning purposes
    is (category, literals); the surface is presentation only.
    """

    category: Category
    surface: str
    literals: tuple[Literal, ...]

    def __post_init__(self) -> None:
        want = ARITY[self.category]
        if len(self.literals) != want:
            raise ValueError(
                f"{self.category.value} atom needs {want} literal(s), "
                f"got {len(self.literals)}"
            )
        if not self.surface:
            raise ValueError("atom surface must be non-empty")

    def key(self) -> tuple[Any, ...]:
        """Identity tuple: category plus signed variables, surface ignored."""
        return (self.category, self.literals)

    @property
    def arity(self) -> int:
        return len(self.literals)

    def canonical(self) -> str:
        args = ",".join(lit.text() for lit in self.literals)
        return f"{self.category.value}:{surface_to_camel(self.surface)}({args})"


def atoms_equal(a: Atom, b: Atom) -> bool:
    """True when category and signed variables coincide (surface ignored)."""
    return a.key() == b.key()


def surface_to_camel(surface: str) -> str:
    """``"only if" -> "OnlyIf"``; inverse of :func:`camel_to_surface`."""
    words = surface.split()
    if not words:
        raise ValueError("empty surface")
    return "".join(w[:1].upper() + w[1:] for w in words)


def camel_to_surface(camel: str) -> str:
    """``"OnlyIf" -> "only if"``."""
    return re.sub(r"(?<!^)(?=[A-Z])", " ", camel).lower()


_ATOM_RE = re.compile(
    r"^(?P<cat>Cause|SA|NA|Fact):(?P<surf>[A-Za-z][A-Za-z0-9]*)"
    r"\((?P<args>[^()]*)\)$"
)
_LIT_RE = re.compile(r"^(?P<neg>~?)(?P<var>[A-Za-z][A-Za-z0-9]*)$")


def parse_atom(text: str) -> Atom:
    """Parse the canonical form, e.g. ``NA:OnlyIf(A,~B)``."""
    m = _ATOM_RE.match(text.strip())
    if m is None:
        raise ValueError(f"not a canonical atom: {text!r}")
    category = Category(m.group("cat"))
    lits = []
    for part in m.group("args").split(","):
        lm = _LIT_RE.match(part.strip())
        if lm is None:
            raise ValueError(f"bad literal {part!r} in {text!r}")
        lits.append(Literal(lm.group("var"), lm.group("neg") != "~"))
    return Atom(category, camel_to_surface(m.group("surf")), tuple(lits))


def format_atoms(atoms: Iterable[Atom]) -> str:
    return " & ".join(a.canonical() for a in atoms)


@dataclass(frozen=True)
class ReasoningPath:
    """Context atoms (body) entailing question+option atoms (head).

    ``bindings`` maps each variable to the normalized clause text it
    stands for.  ``confidence`` is the scorer probability attached to
    augmented paths; None for directly extracted ones.
    """

    body: tuple[Atom, ...]
    head: tuple[Atom, ...]
    bindings: dict[str, str] = field(default_factory=dict)
    confidence: float | None = None

    def __post_init__(self) -> None:
        if not self.body:
            raise ValueError("path body must be non-empty")
        if not self.head:
            raise ValueError("path head must be non-empty")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence outside [0,1]: {self.confidence}")
        missing = sorted(self.variables() - set(self.bindings))
        if missing:
            raise ValueError(f"unbound variables: {', '.join(missing)}")

    def variables(self) -> set[str]:
        return {
            lit.var for atom in self.body + self.head for lit in atom.literals
        }

    def describe(self) -> str:
        return f"{format_atoms(self.body)} => {format_atoms(self.head)}"

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "body": [a.canonical() for a in self.body],
            "head": [a.canonical() for a in self.head],
            "bindings": dict(sorted(self.bindings.items())),
        }
        if self.confidence is not None:
            out["confidence"] = self.confidence
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ReasoningPath:
        return cls(
            body=tuple(parse_atom(t) for t in data["body"]),
            head=tuple(parse_atom(t) for t in data["head"]),
            bindings=dict(data["bindings"]),
            confidence=data.get("confidence"),
        )


N_OPTIONS = 4


@dataclass(frozen=True)
class Sample:
    """A four-option multiple choice question over a short context."""

    id: str
    context: str
    question: str
    options: tuple[str, str, str, str]
    label: int | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("sample id must be non-empty")
        if len(self.options) != N_OPTIONS:
            raise ValueError(
                f"sample {self.id}: expected {N_OPTIONS} options, "
                f"got {len(self.options)}"
            )
        if self.label is not None and not 0 <= self.label < N_OPTIONS:
            raise ValueError(
                f"sample {self.id}: label {self.label} outside 0..{N_OPTIONS - 1}"
            )

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "context": self.context,
            "question": self.question,
            "options": list(self.options),
        }
        if self.label is not None:
            out["label"] = self.label
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Sample:
        return cls(
            id=str(data["id"]),
            context=data["context"],
            question=data.get("question", ""),
            options=tuple(data["options"]),
            label=data.get("label"),
        )


@dataclass(frozen=True)
class DerivationStep:
    """One recorded rule application, atoms in canonical text form."""

    rule: str
    inputs: tuple[str, ...]
    output: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule": self.rule,
            "inputs": list(self.inputs),
            "output": self.output,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DerivationStep:
        return cls(data["rule"], tuple(data["inputs"]), data["output"])


@dataclass(frozen=True)
class AugmentedSample:
    """A regenerated sample plus the derivation steps justifying it."""

    sample: Sample
    source_id: str
    provenance: tuple[DerivationStep, ...]
    confidence: float

    def to_dict(self) -> dict[str, Any]:
        out = self.sample.to_dict()
        out["source_id"] = self.source_id
        out["confidence"] = self.confidence
        out["provenance"] = [s.to_dict() for s in self.provenance]
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AugmentedSample:
        fields = {
            k: v
            for k, v in data.items()
            if k in ("id", "context", "question", "options", "label")
        }
        return cls(
            sample=Sample.from_dict(fields),
            source_id=data["source_id"],
            provenance=tuple(
                DerivationStep.from_dict(s) for s in data["provenance"]
            ),
            confidence=data["confidence"],
        )
