import numpy as np
import pytest

from logipath.atoms import Atom, Category, Literal, ReasoningPath, Sample
from logipath.engine import ClosureConfig, closure
from logipath.epe import (
    MiningConfig,
    OverlapScorer,
    RenderError,
    augment,
    filter_candidates,
    mine_combinations,
    perturb_adversarial,
    perturb_equivalent,
    provenance_for,
    render_atom,
    textualize,
)
from logipath.extraction import VariableTable, extract_atom, extract_sample

from conftest import make_path
from oracle_logic import ref_entails

A, B, C = Literal("A"), Literal("B"), Literal("C")
BINDINGS = {
    "A": "the committee approves the plan",
    "B": "the vendor signs the contract",
    "C": "the audit ends",
}


def sa(a, b):
    return Atom(Category.SA, "if", (a, b))


def fact(lit):
    return Atom(Category.FACT, "fact", (lit,))


def test_render_medial_connective(lex):
    text = render_atom(sa(A, B), BINDINGS, lex)
    assert text == (
        "The vendor signs the contract if the committee approves the plan."
    )


def test_render_negative_literal(lex):
    text = render_atom(fact(A.negate()), BINDINGS, lex)
    assert text.startswith("It is not the case that")


def test_render_errors(lex):
    with pytest.raises(RenderError, match="no binding"):
        render_atom(fact(Literal("Z")), BINDINGS, lex)
    with pytest.raises(RenderError, match="not usable"):
        render_atom(Atom(Category.SA, "only if", (A, B)), BINDINGS, lex)


def test_render_extract_round_trip(lex):
    rng = np.random.default_rng(3)
    for _ in range(120):
        path = make_path(rng, body_len=1)
        atom = path.body[0]
        sentence = render_atom(atom, path.bindings, lex)
        table = VariableTable()
        again = extract_atom(sentence, lex, table)
        assert again.category is atom.category
        back = {v: t for v, t in table.bindings().items()}
        lits = tuple(
            Literal(back[lit.var], lit.positive) for lit in again.literals
        )
        want = tuple(
            Literal(path.bindings[lit.var], lit.positive)
            for lit in atom.literals
        )
        assert lits == want


def test_mining_config_validation():
    with pytest.raises(ValueError):
        MiningConfig(max_extra=-1)
    with pytest.raises(ValueError):
        MiningConfig(max_candidates=0)


def chain_path():
    return ReasoningPath(
        body=(fact(A), sa(A, B)),
        head=(fact(B),),
        bindings=BINDINGS,
    )


def test_mine_combinations_rederive_the_body():
    path = chain_path()
    base = closure(path)
    mined = mine_combinations(path, MiningConfig(), base)
    assert mined
    body_keys = {a.key() for a in path.body}
    cfg = ClosureConfig()
    for alt in mined:
        assert {a.key() for a in alt.body} != body_keys
        again = closure(alt.body, cfg)
        got = {a.key() for a in again.atoms}
        assert body_keys <= got
        assert alt.head == path.head


def test_mine_combinations_respects_budgets():
    path = chain_path()
    mined = mine_combinations(path, MiningConfig(max_candidates=1))
    assert len(mined) == 1
    for alt in mine_combinations(path, MiningConfig(max_extra=0)):
        assert len(alt.body) <= len(path.body)


def test_provenance_steps_come_premises_first():
    body = [fact(A), sa(A, B), sa(B, C)]
    base = closure(body)
    target = [fact(C)]
    steps = provenance_for(target, base)
    assert steps[-1].output == "Fact:Fact(C)"
    produced = {a.canonical() for a in base.atoms[: base.n_axioms]}
    for step in steps:
        assert set(step.inputs) <= produced
        produced.add(step.output)


def test_provenance_for_axiom_is_empty():
    base = closure([fact(A)])
    assert provenance_for([fact(A)], base) == ()
    with pytest.raises(ValueError, match="not in base"):
        provenance_for([fact(B)], base)


def test_textualize_regenerates_context_only(lex):
    source = Sample(
        id="src", context="old text.", question="q?",
        options=("a.", "b.", "c.", "d."), label=2,
    )
    new = textualize(chain_path(), lex, source, sample_id="src/epe0")
    assert new.id == "src/epe0"
    assert new.question == source.question
    assert new.options == source.options
    assert new.label == 2
    assert "if" in new.context.lower()


def test_overlap_scorer_prefers_context_tokens():
    sample = Sample(
        id="s", context="The audit ends today.", question="",
        options=(
            "The audit ends.", "Unrelated words entirely.",
            "Другое предложение.", "More unrelated phrasing here.",
        ),
        label=0,
    )
    probs = OverlapScorer().score(sample)
    assert abs(sum(probs) - 1.0) < 1e-9
    assert int(np.argmax(probs)) == 0


class StubScorer:
    def __init__(self, probs):
        self.probs = probs

    def score(self, sample):
        return self.probs


class BrokenScorer:
    def score(self, sample):
        raise RuntimeError("boom")


def _cand(label=0):
    return (
        Sample(id="c", context="x.", question="q?",
               options=("a.", "b.", "c.", "d."), label=label),
        label,
    )


def test_filter_keeps_confident_correct_candidates():
    keep = filter_candidates([_cand()], StubScorer((0.95, 0.02, 0.02, 0.01)))
    assert keep[0].keep
    assert keep[0].confidence == 0.95


def test_filter_drops_wrong_or_unsure_or_broken():
    wrong = filter_candidates([_cand(label=1)], StubScorer((0.95, 0.02, 0.02, 0.01)))
    assert not wrong[0].keep
    unsure = filter_candidates([_cand()], StubScorer((0.6, 0.2, 0.1, 0.1)))
    assert not unsure[0].keep
    broken = filter_candidates([_cand()], BrokenScorer())
    assert not broken[0].keep
    assert broken[0].probs == ()


def test_filter_threshold_is_strict():
    exact = filter_candidates([_cand()], StubScorer((0.9, 0.05, 0.03, 0.02)))
    assert not exact[0].keep


def entailment_sample(lex):
    body = (fact(A), sa(A, B))
    bindings = dict(BINDINGS)
    context = " ".join(render_atom(a, bindings, lex) for a in body)
    options = (
        render_atom(fact(B), bindings, lex),
        render_atom(fact(B.negate()), bindings, lex),
        render_atom(fact(C), bindings, lex),
        render_atom(fact(C.negate()), bindings, lex),
    )
    return Sample(
        id="ent", context=context,
        question="Which one of the following can be inferred?",
        options=options, label=0,
    )


def test_augment_produces_certified_variants(lex):
    sample = entailment_sample(lex)
    out = augment([sample], lex, scorer=StubScorer((0.99, 0.004, 0.003, 0.003)))
    assert out
    for aug in out:
        assert aug.source_id == "ent"
        assert aug.sample.id.startswith("ent/epe")
        assert aug.sample.options == sample.options
        assert aug.confidence > 0.9
        ex = extract_sample(aug.sample, lex)
        assert ex.body  # regenerated context still parses


def test_augment_skips_unlabeled(lex):
    sample = entailment_sample(lex)
    unlabeled = Sample(
        id="u", context=sample.context, question=sample.question,
        options=sample.options,
    )
    assert augment([unlabeled], lex) == []


def _rekeyed(sample, lex):
    """Body atoms keyed by bound clause text, polarity preserved."""
    ex = extract_sample(sample, lex)
    bindings = ex.table.bindings()
    out = []
    for atom in ex.body:
        lits = tuple(
            Literal(bindings[lit.var], lit.positive) for lit in atom.literals
        )
        out.append(Atom(atom.category, atom.surface, lits))
    return out


def test_perturb_equivalent_preserves_meaning(lex):
    sample = entailment_sample(lex)
    variant, applied = perturb_equivalent(sample, lex, seed=4)
    assert applied
    assert variant.id == "ent~eq"
    assert variant.context != sample.context
    before = _rekeyed(sample, lex)
    after = _rekeyed(variant, lex)
    for atom in before:
        assert ref_entails(after, atom)
    for atom in after:
        assert ref_entails(before, atom)


def test_perturb_equivalent_needs_a_connective(lex):
    flat = Sample(
        id="flat", context="The audit ends.", question="q?",
        options=("a.", "b.", "c.", "d."), label=0,
    )
    same, applied = perturb_equivalent(flat, lex)
    assert not applied
    assert same == flat


def test_perturb_adversarial_changes_meaning(lex):
    sample = entailment_sample(lex)
    variant, applied = perturb_adversarial(sample, lex, seed=4)
    assert applied
    before = _rekeyed(sample, lex)
    after = _rekeyed(variant, lex)
    mutual = all(ref_entails(after, a) for a in before) and all(
        ref_entails(before, a) for a in after
    )
    assert not mutual


def test_perturb_adversarial_kind_restriction(lex):
    sample = entailment_sample(lex)
    variant, applied = perturb_adversarial(
        sample, lex, seed=1, kinds=("negation",)
    )
    assert applied
    # a pure negation edit keeps every connective category in place
    before = [a.category for a in _rekeyed(sample, lex)]
    after = [a.category for a in _rekeyed(variant, lex)]
    assert before == after
    with pytest.raises(ValueError, match="unknown perturbation kinds"):
        perturb_adversarial(sample, lex, kinds=("typo",))


def test_perturbations_are_seed_deterministic(lex):
    sample = entailment_sample(lex)
    v1, _ = perturb_equivalent(sample, lex, seed=9)
    v2, _ = perturb_equivalent(sample, lex, seed=9)
    assert v1 == v2
    a1, _ = perturb_adversarial(sample, lex, seed=9)
    a2, _ = perturb_adversarial(sample, lex, seed=9)
    assert a1 == a2
