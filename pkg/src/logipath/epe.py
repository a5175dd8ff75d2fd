"""Equivalent path mining, textualization, filtering, and perturbation.

Mining looks for subsets of a closed atom base that reproduce the
original body under the rewrite rules.  Each surviving subset is
rendered back to text as a fresh context; a confidence scorer then
decides which regenerated samples are trustworthy enough to keep.
"""

from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Protocol, Sequence

import numpy as np

from .atoms import (
    Atom,
    AugmentedSample,
    Category,
    DerivationStep,
    ReasoningPath,
    Sample,
)
from .engine import (
    ClosureConfig,
    AtomBase,
    closure,
    contrapositive,
    enumerate_derivations,
    equivalent,
    na_to_sa,
    reachable,
)
from .extraction import ExtractionError, extract_sample, tokenize
from .lexicon import ArgOrder, Lexicon, Position

log = logging.getLogger(__name__)

NEGATION_PREFIX = "it is not the case that"


class RenderError(ValueError):
    """Atom cannot be rendered back to text with the given lexicon."""


def render_clause(text: str, positive: bool) -> str:
    return text if positive else f"{NEGATION_PREFIX} {text}"


def render_atom(atom: Atom, bindings: dict[str, str], lexicon: Lexicon) -> str:
    """Render one atom as a sentence that extracts back to the same atom.

    Two-place connectives render in their medial form when allowed,
    otherwise sentence-initially with a separating comma.
    """
    clauses = []
    for lit in atom.literals:
        text = bindings.get(lit.var)
        if text is None:
            raise RenderError(f"no binding for variable {lit.var}")
        clauses.append(render_clause(text, lit.positive))

    if atom.category is Category.FACT:
        sentence = clauses[0]
    else:
        entry = lexicon.lookup(atom.surface)
        if entry is None or entry.category is not atom.category:
            raise RenderError(
                f"surface {atom.surface!r} not usable for "
                f"{atom.category.value} atoms in the active lexicon"
            )
        if entry.order is ArgOrder.ATTACHED_FIRST:
            attached, other = clauses
        else:
            other, attached = clauses
        if entry.position is Position.INITIAL:
            sentence = f"{entry.surface} {attached}, {other}"
        else:
            sentence = f"{other} {entry.surface} {attached}"
    return sentence[0].upper() + sentence[1:] + "."


@dataclass(frozen=True)
class MiningConfig:
    """Budget for equivalent-body search."""

    max_extra: int = 2  # subset size cap: len(body) + max_extra
    max_candidates: int = 20
    closure: ClosureConfig = field(default_factory=ClosureConfig)

    def __post_init__(self) -> None:
        if self.max_extra < 0:
            raise ValueError("max_extra must be >= 0")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")


def mine_combinations(
    path: ReasoningPath,
    config: MiningConfig | None = None,
    base: AtomBase | None = None,
) -> list[ReasoningPath]:
    """Find atom subsets whose closure recovers the original body.

    Subsets are enumerated over the closed base in ascending size, then
    by canonical text, and checked by forward-chaining the base's rule
    applications from the subset.  The original body itself is skipped.
    """
    config = config or MiningConfig()
    if base is None:
        base = closure(path, config.closure)
    derivations = enumerate_derivations(base, config.closure)

    order = sorted(range(len(base.atoms)), key=lambda i: base.atoms[i].canonical())
    body_keys = {a.key() for a in path.body}
    body_idx = {i for i in order if base.atoms[i].key() in body_keys}
    max_size = min(len(base.atoms), len(path.body) + config.max_extra)

    found: list[ReasoningPath] = []
    for size in range(1, max_size + 1):
        for combo in combinations(order, size):
            chosen = set(combo)
            if chosen == body_idx:
                continue
            if not body_idx <= reachable(chosen, derivations):
                continue
            body = tuple(base.atoms[i] for i in combo)
            used = {
                lit.var for atom in body + path.head for lit in atom.literals
            }
            found.append(
                ReasoningPath(
                    body=body,
                    head=path.head,
                    bindings={v: path.bindings[v] for v in sorted(used)},
                )
            )
            if len(found) >= config.max_candidates:
                return found
    return found


def provenance_for(
    body: Sequence[Atom], base: AtomBase
) -> tuple[DerivationStep, ...]:
    """Derivation steps that produce the body's non-axiom atoms.

    Steps come out in dependency order, premises before conclusions, so
    replaying them from the base's axioms reproduces every derived atom
    of the body.
    """
    index = {a.key(): i for i, a in enumerate(base.atoms)}
    steps: list[DerivationStep] = []
    emitted: set[int] = set()

    def emit(i: int) -> None:
        if i in emitted:
            return
        emitted.add(i)
        trace = base.traces.get(i)
        if trace is None:
            return  # axiom
        for p in trace.premises:
            emit(p)
        steps.append(
            DerivationStep(
                rule=trace.rule,
                inputs=tuple(
                    base.atoms[p].canonical() for p in trace.premises
                ),
                output=base.atoms[i].canonical(),
            )
        )

    for atom in body:
        i = index.get(atom.key())
        if i is None:
            raise ValueError(f"atom {atom.canonical()} not in base")
        emit(i)
    return tuple(steps)


def textualize(
    path: ReasoningPath,
    lexicon: Lexicon,
    source: Sample,
    sample_id: str | None = None,
) -> Sample:
    """Render a path's body as a new context for the source sample.

    Question and option texts are copied unchanged; only the context is
    regenerated, one sentence per body atom.
    """
    sentences = [render_atom(a, path.bindings, lexicon) for a in path.body]
    return Sample(
        id=sample_id or source.id,
        context=" ".join(sentences),
        question=source.question,
        options=source.options,
        label=source.label,
    )


class ConfidenceScorer(Protocol):
    def score(self, sample: Sample) -> Sequence[float]:
        """Probabilities over the four options, summing to one."""


@dataclass
class OverlapScorer:
    """Deterministic baseline: token overlap between context and options.

    Serves as the stand-in confidence model when no trained checkpoint
    is supplied.  The temperature controls how peaked the resulting
    softmax is.
    """

    temperature: float = 12.0

    def score(self, sample: Sample) -> list[float]:
        reference = set(tokenize(sample.context)) | set(
            tokenize(sample.question)
        )
        ratios = []
        for option in sample.options:
            tokens = tokenize(option)
            hit = sum(1 for t in tokens if t in reference)
            ratios.append(hit / max(1, len(tokens)))
        z = np.asarray(ratios) * self.temperature
        z -= z.max()
        e = np.exp(z)
        return list(e / e.sum())


@dataclass(frozen=True)
class FilterDecision:
    index: int
    keep: bool
    probs: tuple[float, ...]

    @property
    def confidence(self) -> float:
        return max(self.probs)


def filter_candidates(
    candidates: Sequence[tuple[Sample, int]],
    scorer: ConfidenceScorer,
    threshold: float = 0.9,
) -> list[FilterDecision]:
    """Keep candidates the scorer answers correctly and confidently.

    A candidate survives only when the argmax option equals the source
    label and the winning probability exceeds the threshold.  Scorer
    failures are logged and treated as rejections.
    """
    decisions = []
    for i, (sample, label) in enumerate(candidates):
        try:
            probs = tuple(float(p) for p in scorer.score(sample))
        except Exception:
            log.warning("scorer failed on %s; dropping candidate", sample.id)
            decisions.append(FilterDecision(i, False, ()))
            continue
        best = int(np.argmax(probs))
        keep = best == label and probs[best] > threshold
        decisions.append(FilterDecision(i, keep, probs))
    return decisions


def augment(
    dataset: Sequence[Sample],
    lexicon: Lexicon,
    scorer: ConfidenceScorer | None = None,
    threshold: float = 0.9,
    mining: MiningConfig | None = None,
) -> list[AugmentedSample]:
    """Mine, textualize, and filter equivalent contexts for a dataset.

    Unlabeled samples are skipped (the filter needs the gold option).
    Extraction or rendering failures skip the affected sample with a
    warning rather than aborting the run.
    """
    scorer = scorer if scorer is not None else OverlapScorer()
    mining = mining or MiningConfig()
    out: list[AugmentedSample] = []
    for sample in dataset:
        if sample.label is None:
            continue
        try:
            extracted = extract_sample(sample, lexicon)
            path = extracted.paths[sample.label]
            base = closure(path, mining.closure)
            mined = mine_combinations(path, mining, base)
            rendered = [
                (
                    textualize(p, lexicon, sample, f"{sample.id}/epe{k}"),
                    sample.label,
                )
                for k, p in enumerate(mined)
            ]
        except (ExtractionError, RenderError, ValueError) as exc:
            log.warning("skipping sample %s: %s", sample.id, exc)
            continue
        for decision, mined_path in zip(
            filter_candidates(rendered, scorer, threshold), mined
        ):
            if not decision.keep:
                continue
            out.append(
                AugmentedSample(
                    sample=rendered[decision.index][0],
                    source_id=sample.id,
                    provenance=provenance_for(mined_path.body, base),
                    confidence=decision.confidence,
                )
            )
    return out


def _rng_for(seed: int, sample_id: str, tag: str) -> random.Random:
    digest = hashlib.blake2b(
        f"{seed}:{tag}:{sample_id}".encode(), digest_size=8
    ).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _replace_sentence(
    extracted, index: int, atom: Atom, lexicon: Lexicon
) -> str:
    bindings = extracted.table.bindings()
    sentence = render_atom(atom, bindings, lexicon)
    return extracted.rebuild_context({index: sentence})


def perturb_equivalent(
    sample: Sample, lexicon: Lexicon, seed: int = 0
) -> tuple[Sample, bool]:
    """Rewrite one context sentence into a certified-equivalent form.

    Applicable rewrites are connective synonym swaps within a category,
    contrapositive for Cause/SA atoms, and the NA-to-SA conversion.
    The rewritten atom must pass the two-way entailment oracle.  When
    no context atom admits a rewrite the sample returns unchanged with
    a False flag.
    """
    try:
        extracted = extract_sample(sample, lexicon)
    except ExtractionError:
        return sample, False
    rng = _rng_for(seed, sample.id, "eq")

    indices = [
        i
        for i, atom in enumerate(extracted.body)
        if atom.category is not Category.FACT
    ]
    rng.shuffle(indices)
    for i in indices:
        atom = extracted.body[i]
        moves: list[Atom] = []
        for surface in lexicon.surfaces(atom.category):
            if surface != atom.surface:
                moves.append(Atom(atom.category, surface, atom.literals))
        if atom.category in (Category.CAUSE, Category.SA):
            moves.append(contrapositive(atom))
        if atom.category is Category.NA:
            moves.append(na_to_sa(atom))
        rng.shuffle(moves)
        for new_atom in moves:
            if not equivalent(atom, new_atom):
                continue
            context = _replace_sentence(extracted, i, new_atom, lexicon)
            return (
                Sample(
                    id=f"{sample.id}~eq",
                    context=context,
                    question=sample.question,
                    options=sample.options,
                    label=sample.label,
                ),
                True,
            )
    return sample, False


ADVERSARIAL_KINDS = ("connective", "negation")


def perturb_adversarial(
    sample: Sample,
    lexicon: Lexicon,
    seed: int = 0,
    kinds: Sequence[str] = ADVERSARIAL_KINDS,
) -> tuple[Sample, bool]:
    """Break one context sentence with a meaning-changing edit.

    Either swaps the connective for one of a different category or
    flips the polarity of one clause.  The edit only counts when the
    oracle confirms the new atom is not equivalent to the old one;
    otherwise other edits are tried, and the sample returns unchanged
    with a False flag when none works.
    """
    unknown = set(kinds) - set(ADVERSARIAL_KINDS)
    if unknown:
        raise ValueError(f"unknown perturbation kinds: {sorted(unknown)}")
    try:
        extracted = extract_sample(sample, lexicon)
    except ExtractionError:
        return sample, False
    rng = _rng_for(seed, sample.id, "adv")

    indices = list(range(len(extracted.body)))
    rng.shuffle(indices)
    for i in indices:
        atom = extracted.body[i]
        moves: list[Atom] = []
        if "connective" in kinds and atom.category is not Category.FACT:
            others = [
                c
                for c in (Category.CAUSE, Category.SA, Category.NA)
                if c is not atom.category
            ]
            for category in others:
                surfaces = lexicon.surfaces(category)
                if surfaces:
                    moves.append(
                        Atom(
                            category,
                            surfaces[rng.randrange(len(surfaces))],
                            atom.literals,
                        )
                    )
        if "negation" in kinds:
            for k, lit in enumerate(atom.literals):
                literals = list(atom.literals)
                literals[k] = lit.negate()
                moves.append(
                    Atom(atom.category, atom.surface, tuple(literals))
                )
        rng.shuffle(moves)
        for new_atom in moves:
            if equivalent(atom, new_atom):
                continue
            context = _replace_sentence(extracted, i, new_atom, lexicon)
            return (
                Sample(
                    id=f"{sample.id}~adv",
                    context=context,
                    question=sample.question,
                    options=sample.options,
                    label=sample.label,
                ),
                True,
            )
    return sample, False
