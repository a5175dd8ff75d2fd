"""Connective lexicon: phrase table driving atom extraction.

Each entry maps a connective phrase to its category, the sentence
positions where it acts as a connective, and which clause supplies the
first atom argument.  The "attached" clause of a connective is the one
it introduces, i.e. the tokens following it; for a sentence-initial
connective that is also the first clause in surface order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

from .atoms import Category

BUNDLED_NAME = "connectives.tsv"


class Position(Enum):
    """Where a phrase is allowed to act as a connective."""

    INITIAL = "sentence-initial"
    MEDIAL = "medial"
    EITHER = "either"


class ArgOrder(Enum):
    """Which clause becomes the first atom argument.

    ``first-clause-first-arg``: the attached clause is argument 1
    (e.g. "because X, Y" and "Y because X" both give Cause(X, Y)).
    ``second-clause-first-arg``: the companion clause is argument 1
    (e.g. "A only if B" gives NA(A, B)).
    """

    ATTACHED_FIRST = "first-clause-first-arg"
    ATTACHED_SECOND = "second-clause-first-arg"


# Token sequences that flip clause polarity; stripped during
# normalization.  Longest sequences are tried first so the multi-token
# phrase is consumed before its "not" would match alone.
NEGATION_MARKERS: tuple[tuple[str, ...], ...] = (
    ("it", "is", "not", "the", "case", "that"),
    ("cannot",),
    ("never",),
    ("without",),
    ("n't",),
    ("not",),
    ("no",),
)


class LexiconError(ValueError):
    """Malformed lexicon file or inconsistent entry set."""


@dataclass(frozen=True)
class Connective:
    """One lexicon row."""

    phrase: tuple[str, ...]
    category: Category
    position: Position
    order: ArgOrder

    @property
    def surface(self) -> str:
        return " ".join(self.phrase)


@dataclass(frozen=True)
class Lexicon:
    """Immutable phrase table with longest-match lookup."""

    entries: tuple[Connective, ...]
    negation_markers: tuple[tuple[str, ...], ...] = NEGATION_MARKERS
    _by_first: dict[str, tuple[Connective, ...]] = field(
        init=False, repr=False, default_factory=dict
    )
    _by_surface: dict[str, Connective] = field(
        init=False, repr=False, default_factory=dict
    )

    def __post_init__(self) -> None:
        buckets: dict[str, list[Connective]] = {}
        for entry in self.entries:
            buckets.setdefault(entry.phrase[0], []).append(entry)
            self._by_surface[entry.surface] = entry
        for first, group in buckets.items():
            # longest phrase first so a match scan can stop early
            group.sort(key=lambda e: (-len(e.phrase), e.surface))
            self._by_first[first] = tuple(group)

    def __len__(self) -> int:
        return len(self.entries)

    def lookup(self, surface: str) -> Connective | None:
        return self._by_surface.get(surface)

    def surfaces(self, category: Category) -> list[str]:
        return [e.surface for e in self.entries if e.category is category]

    def candidates_at(self, first_token: str) -> tuple[Connective, ...]:
        return self._by_first.get(first_token, ())


def match_connective(
    tokens: list[str], lexicon: Lexicon
) -> tuple[Connective, tuple[int, int]] | None:
    """Find the connective occurrence to split on, if any.

    Scans every start position; the longest matching phrase wins, with
    the earliest start breaking ties.  Entries restricted to
    sentence-initial or medial positions only match there.
    """
    best: tuple[Connective, tuple[int, int]] | None = None
    best_len = 0
    n = len(tokens)
    for i in range(n):
        for entry in lexicon.candidates_at(tokens[i]):
            k = len(entry.phrase)
            if k <= best_len:
                break  # group is sorted longest first
            if i + k > n or tuple(tokens[i : i + k]) != entry.phrase:
                continue
            if entry.position is Position.INITIAL and i != 0:
                continue
            if entry.position is Position.MEDIAL and i == 0:
                continue
            best = (entry, (i, i + k))
            best_len = k
    return best


def parse_lexicon_text(text: str, source: str = "<string>") -> list[Connective]:
    """Parse tab-separated rows: phrase, category, position, order."""
    entries: list[Connective] = []
    seen: dict[tuple[str, ...], int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split("\t")]
        if len(parts) != 4:
            raise LexiconError(
                f"{source}:{lineno}: expected 4 tab-separated fields, "
                f"got {len(parts)}"
            )
        phrase = tuple(parts[0].lower().split())
        if not phrase:
            raise LexiconError(f"{source}:{lineno}: empty phrase")
        try:
            category = Category(parts[1])
        except ValueError:
            raise LexiconError(
                f"{source}:{lineno}: unknown category {parts[1]!r}"
            ) from None
        try:
            position = Position(parts[2])
        except ValueError:
            raise LexiconError(
                f"{source}:{lineno}: unknown position {parts[2]!r}"
            ) from None
        try:
            order = ArgOrder(parts[3])
        except ValueError:
            raise LexiconError(
                f"{source}:{lineno}: unknown argument order {parts[3]!r}"
            ) from None
        if phrase in seen:
            raise LexiconError(
                f"{source}:{lineno}: duplicate phrase {' '.join(phrase)!r} "
                f"(first defined on line {seen[phrase]})"
            )
        seen[phrase] = lineno
        entries.append(Connective(phrase, category, position, order))
    return entries


def bundled_lexicon_text() -> str:
    return (
        resources.files("logipath.data").joinpath(BUNDLED_NAME).read_text("utf-8")
    )


def load_lexicon(path: str | Path | None = None) -> Lexicon:
    """Load the bundled lexicon, overlaying entries from ``path`` if given.

    A user entry whose phrase already exists replaces the bundled row,
    so categories and argument orders can be overridden.
    """
    merged: dict[tuple[str, ...], Connective] = {}
    for entry in parse_lexicon_text(bundled_lexicon_text(), BUNDLED_NAME):
        merged[entry.phrase] = entry
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise LexiconError(f"lexicon file not found: {p}")
        for entry in parse_lexicon_text(p.read_text("utf-8"), str(p)):
            merged[entry.phrase] = entry
    entries = tuple(
        sorted(merged.values(), key=lambda e: (-len(e.phrase), e.surface))
    )
    return Lexicon(entries)


def dump_lexicon(lexicon: Lexicon) -> str:
    """Render a lexicon back to the tab-separated file format."""
    lines = ["# phrase\tcategory\tposition\torder"]
    for e in lexicon.entries:
        lines.append(
            "\t".join(
                (e.surface, e.category.value, e.position.value, e.order.value)
            )
        )
    return "\n".join(lines) + "\n"
