"""Turning raw sample text into atoms and reasoning paths.

The pipeline is deliberately rule-based: split into sentences, find the
strongest connective occurrence in each, split the sentence into
clauses at that connective, normalize the clauses, and bind each
distinct clause text to a variable.  One sentence yields exactly one
atom; sentences without a known connective become Fact atoms over the
whole sentence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .atoms import (
    FACT_SURFACE,
    Atom,
    Category,
    Literal,
    ReasoningPath,
    Sample,
    var_name,
)
from .lexicon import ArgOrder, Connective, Lexicon, Position, match_connective


class ExtractionError(ValueError):
    """Input text that cannot be turned into atoms."""


# Trailing-dot tokens that do not end a sentence.
ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "etc.", "vs.", "cf.", "al.", "st.", "no.",
        "mr.", "mrs.", "ms.", "dr.", "prof.", "jr.", "sr.",
        "inc.", "ltd.", "co.", "corp.", "dept.", "fig.", "approx.",
    }
)

_TERMINATORS = ".!?"
_QUOTE_PAIRS = {'"': '"', "“": "”"}


def split_sentences_with_terminators(text: str) -> list[tuple[str, str]]:
    """Split on ``.!?`` outside quotes; keep each terminator run.

    Dots that end a known abbreviation or sit between digits do not
    split.  Returns (sentence, terminator) pairs whose concatenation
    reproduces the input up to whitespace.
    """
    pairs: list[tuple[str, str]] = []
    n = len(text)
    start = 0
    i = 0
    close_quote: str | None = None
    while i < n:
        ch = text[i]
        if close_quote is not None:
            if ch == close_quote:
                close_quote = None
            i += 1
            continue
        if ch in _QUOTE_PAIRS:
            close_quote = _QUOTE_PAIRS[ch]
            i += 1
            continue
        if ch not in _TERMINATORS:
            i += 1
            continue
        if ch == "." and _continues_sentence(text, i):
            i += 1
            continue
        j = i
        while j < n and text[j] in _TERMINATORS:
            j += 1
        sentence = text[start:j].strip()
        # strip the terminator run off the kept sentence
        body = sentence[: len(sentence) - (j - i)].strip()
        if body:
            pairs.append((body, text[i:j]))
        start = j
        i = j
    tail = text[start:].strip()
    if tail:
        pairs.append((tail, ""))
    return pairs


def _continues_sentence(text: str, i: int) -> bool:
    """True when the dot at ``i`` is abbreviation-internal or decimal."""
    if 0 < i < len(text) - 1 and text[i - 1].isdigit() and text[i + 1].isdigit():
        return True
    k = i
    while k > 0 and not text[k - 1].isspace():
        k -= 1
    word = text[k : i + 1].lower()
    if word in ABBREVIATIONS:
        return True
    # mid-abbreviation dots, e.g. the first dot of "e.g."
    return any(abbr.startswith(word) and abbr != word for abbr in ABBREVIATIONS)


def split_sentences(text: str) -> list[str]:
    return [s for s, _ in split_sentences_with_terminators(text)]


_CONTRACTION_RE = re.compile(r"n['’]t\b")
_TOKEN_RE = re.compile(r"[a-z0-9']+|[.,;:!?]")
_PUNCT = frozenset(".,;:!?")


def tokenize(text: str) -> list[str]:
    """Lowercase word/punctuation tokens; splits off "n't" contractions."""
    return _TOKEN_RE.findall(_CONTRACTION_RE.sub(" n't", text.lower()))


def normalize_clause(
    tokens: list[str], markers: tuple[tuple[str, ...], ...]
) -> tuple[str, int]:
    """Strip punctuation and negation markers from a token span.

    Returns the normalized clause text and the number of negation
    markers removed; an odd count means the clause is negated.  Marker
    sequences are matched longest first so "it is not the case that"
    counts once rather than leaving a stray "not".
    """
    ordered = sorted(markers, key=len, reverse=True)
    kept: list[str] = []
    flips = 0
    i = 0
    n = len(tokens)
    while i < n:
        matched = False
        for marker in ordered:
            k = len(marker)
            if tuple(tokens[i : i + k]) == marker:
                flips += 1
                i += k
                matched = True
                break
        if matched:
            continue
        if tokens[i] not in _PUNCT:
            kept.append(tokens[i])
        i += 1
    return " ".join(kept), flips


class VariableTable:
    """Assigns stable variable ids to normalized clause texts."""

    def __init__(self) -> None:
        self._ids: dict[str, str] = {}

    def bind(self, text: str) -> str:
        existing = self._ids.get(text)
        if existing is not None:
            return existing
        name = var_name(len(self._ids))
        self._ids[text] = name
        return name

    def bindings(self) -> dict[str, str]:
        return {v: t for t, v in self._ids.items()}

    def __len__(self) -> int:
        return len(self._ids)


def _strip_boundary(tokens: list[str]) -> list[str]:
    while tokens and tokens[0] in _PUNCT:
        tokens = tokens[1:]
    while tokens and tokens[-1] in _PUNCT:
        tokens = tokens[:-1]
    return tokens


def extract_atom(sentence: str, lexicon: Lexicon, table: VariableTable) -> Atom:
    """Extract the single atom of one sentence.

    The longest matching connective wins.  Two-place connectives split
    the sentence at the match and at the separating comma when the
    connective is sentence-initial; if no well-formed second clause
    exists the sentence degrades to a Fact atom over its full text.
    """
    tokens = tokenize(sentence)
    words = [t for t in tokens if t not in _PUNCT]
    if not words:
        raise ExtractionError(f"no words in sentence: {sentence!r}")

    match = match_connective(tokens, lexicon)
    if match is None:
        return _fact_atom(tokens, FACT_SURFACE, lexicon, table)
    entry, (lo, hi) = match

    if entry.category is Category.FACT:
        remainder = _strip_boundary(tokens[:lo]) + _strip_boundary(tokens[hi:])
        if not remainder:
            remainder = tokens  # connective-only sentence, keep the words
        return _fact_atom(remainder, entry.surface, lexicon, table)

    if lo == 0:
        split = _find_split_comma(tokens, hi)
        if split is None:
            return _fact_atom(tokens, FACT_SURFACE, lexicon, table)
        attached_tokens = tokens[hi:split]
        other_tokens = tokens[split + 1 :]
        surface_order = (attached_tokens, other_tokens)
    else:
        attached_tokens = tokens[hi:]
        other_tokens = tokens[:lo]
        surface_order = (other_tokens, attached_tokens)

    attached_text, attached_flips = normalize_clause(
        _strip_boundary(attached_tokens), lexicon.negation_markers
    )
    other_text, other_flips = normalize_clause(
        _strip_boundary(other_tokens), lexicon.negation_markers
    )
    if not attached_text or not other_text:
        return _fact_atom(tokens, FACT_SURFACE, lexicon, table)

    # bind in surface order so variable ids follow reading order
    for clause in surface_order:
        text, _ = normalize_clause(
            _strip_boundary(clause), lexicon.negation_markers
        )
        table.bind(text)
    attached = Literal(table.bind(attached_text), attached_flips % 2 == 0)
    other = Literal(table.bind(other_text), other_flips % 2 == 0)

    if entry.order is ArgOrder.ATTACHED_FIRST:
        args = (attached, other)
    else:
        args = (other, attached)
    return Atom(entry.category, entry.surface, args)


def _find_split_comma(tokens: list[str], start: int) -> int | None:
    for i in range(start, len(tokens)):
        if tokens[i] == ",":
            return i
    return None


def _fact_atom(
    tokens: list[str], surface: str, lexicon: Lexicon, table: VariableTable
) -> Atom:
    text, flips = normalize_clause(
        _strip_boundary(list(tokens)), lexicon.negation_markers
    )
    if not text:
        raise ExtractionError(
            f"sentence empty after stripping: {' '.join(tokens)!r}"
        )
    lit = Literal(table.bind(text), flips % 2 == 0)
    return Atom(Category.FACT, surface, (lit,))


@dataclass
class ExtractedSample:
    """Extraction artifacts for one sample, shared across its options."""

    sample: Sample
    table: VariableTable
    context_sentences: list[tuple[str, str]]
    body: tuple[Atom, ...]
    question_atoms: tuple[Atom, ...]
    option_atoms: tuple[tuple[Atom, ...], ...]
    paths: list[ReasoningPath] = field(default_factory=list)

    def rebuild_context(self, replacements: dict[int, str]) -> str:
        """Reassemble the context with some sentences swapped out."""
        parts = []
        for i, (sentence, term) in enumerate(self.context_sentences):
            text = replacements.get(i, sentence + (term or "."))
            parts.append(text)
        return " ".join(parts)


def extract_sample(sample: Sample, lexicon: Lexicon) -> ExtractedSample:
    """Extract atoms for context, question, and every option.

    All parts share one variable table, so a clause repeated across the
    context and an option unifies to the same variable.
    """
    table = VariableTable()
    ctx_sentences = split_sentences_with_terminators(sample.context)
    if not ctx_sentences:
        raise ExtractionError(f"sample {sample.id}: empty context")
    body = tuple(
        extract_atom(s, lexicon, table) for s, _ in ctx_sentences
    )
    question_atoms = tuple(
        extract_atom(s, lexicon, table)
        for s in split_sentences(sample.question)
    )
    option_atoms = []
    for i, option in enumerate(sample.options):
        sentences = split_sentences(option)
        if not sentences and not question_atoms:
            raise ExtractionError(
                f"sample {sample.id}: option {i} and question both empty"
            )
        option_atoms.append(
            tuple(extract_atom(s, lexicon, table) for s in sentences)
        )

    extracted = ExtractedSample(
        sample=sample,
        table=table,
        context_sentences=ctx_sentences,
        body=body,
        question_atoms=question_atoms,
        option_atoms=tuple(option_atoms),
    )
    bindings = table.bindings()
    for atoms in extracted.option_atoms:
        head = question_atoms + atoms
        used = {
            lit.var for atom in body + head for lit in atom.literals
        }
        extracted.paths.append(
            ReasoningPath(
                body=body,
                head=head,
                bindings={v: bindings[v] for v in sorted(used)},
            )
        )
    return extracted


def build_paths(sample: Sample, lexicon: Lexicon) -> list[ReasoningPath]:
    """One reasoning path per option: shared body, per-option head."""
    return extract_sample(sample, lexicon).paths
