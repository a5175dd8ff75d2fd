import pytest
from hypothesis import given, strategies as st

from logipath.atoms import (
    ARITY,
    Atom,
    Category,
    DerivationStep,
    Literal,
    N_OPTIONS,
    ReasoningPath,
    Sample,
    atoms_equal,
    camel_to_surface,
    format_atoms,
    negate,
    parse_atom,
    surface_to_camel,
    var_name,
)

names = st.from_regex(r"[A-Z][a-z0-9]{0,3}", fullmatch=True)
literals = st.builds(Literal, var=names, positive=st.booleans())


@given(literals)
def test_negate_is_an_involution(lit):
    assert negate(negate(lit)) == lit
    assert negate(lit) != lit


def test_literal_text():
    assert Literal("A").text() == "A"
    assert Literal("A", False).text() == "~A"


def test_var_name_sequence():
    assert [var_name(i) for i in (0, 1, 25, 26, 30)] == [
        "A", "B", "Z", "V26", "V30",
    ]
    with pytest.raises(ValueError):
        var_name(-1)


def test_arity_is_enforced():
    with pytest.raises(ValueError):
        Atom(Category.FACT, "fact", (Literal("A"), Literal("B")))
    with pytest.raises(ValueError):
        Atom(Category.SA, "if", (Literal("A"),))
    with pytest.raises(ValueError):
        Atom(Category.SA, "", (Literal("A"), Literal("B")))


def test_atom_identity_ignores_surface():
    a = Atom(Category.SA, "if", (Literal("A"), Literal("B")))
    b = Atom(Category.SA, "when", (Literal("A"), Literal("B")))
    c = Atom(Category.SA, "if", (Literal("B"), Literal("A")))
    assert atoms_equal(a, b)
    assert not atoms_equal(a, c)


def test_surface_camel_round_trip():
    assert surface_to_camel("only if") == "OnlyIf"
    assert camel_to_surface("OnlyIf") == "only if"
    assert surface_to_camel("if") == "If"
    with pytest.raises(ValueError):
        surface_to_camel(" ")


@st.composite
def atoms(draw):
    cat = draw(st.sampled_from(list(Category)))
    surface = draw(st.sampled_from(["if", "only if", "because", "fact"]))
    lits = tuple(draw(literals) for _ in range(ARITY[cat]))
    return Atom(cat, surface, lits)


@given(atoms())
def test_canonical_parse_round_trip(atom):
    again = parse_atom(atom.canonical())
    assert again.category is atom.category
    assert again.literals == atom.literals


def test_canonical_examples():
    atom = Atom(Category.NA, "only if", (Literal("A"), Literal("B", False)))
    assert atom.canonical() == "NA:OnlyIf(A,~B)"
    assert parse_atom("Fact:Fact(~C)").literals == (Literal("C", False),)


def test_parse_atom_rejects_garbage():
    for bad in ("", "SA(A,B)", "SA:If(A,B", "SA:If(A,,B)", "Nope:If(A,B)"):
        with pytest.raises(ValueError):
            parse_atom(bad)


def test_format_atoms_joins_with_ampersand():
    a = parse_atom("Fact:Fact(A)")
    b = parse_atom("SA:If(A,B)")
    assert format_atoms([a, b]) == "Fact:Fact(A) & SA:If(A,B)"


def test_path_requires_bindings_for_all_variables():
    body = (parse_atom("SA:If(A,B)"),)
    head = (parse_atom("Fact:Fact(B)"),)
    with pytest.raises(ValueError, match="unbound"):
        ReasoningPath(body=body, head=head, bindings={"A": "x"})
    path = ReasoningPath(
        body=body, head=head, bindings={"A": "x", "B": "y"}
    )
    assert path.variables() == {"A", "B"}


def test_path_confidence_range_and_round_trip():
    body = (parse_atom("SA:If(A,B)"),)
    head = (parse_atom("Fact:Fact(B)"),)
    bindings = {"A": "x", "B": "y"}
    with pytest.raises(ValueError):
        ReasoningPath(body=body, head=head, bindings=bindings, confidence=1.5)
    path = ReasoningPath(
        body=body, head=head, bindings=bindings, confidence=0.25
    )
    again = ReasoningPath.from_dict(path.to_dict())
    assert again.confidence == 0.25
    assert again.body[0].key() == body[0].key()
    assert "=>" in path.describe()


def test_empty_body_or_head_rejected():
    atom = parse_atom("Fact:Fact(A)")
    with pytest.raises(ValueError):
        ReasoningPath(body=(), head=(atom,), bindings={"A": "x"})
    with pytest.raises(ValueError):
        ReasoningPath(body=(atom,), head=(), bindings={"A": "x"})


def test_sample_validation():
    opts = ("a", "b", "c", "d")
    with pytest.raises(ValueError):
        Sample(id="", context="c", question="q", options=opts)
    with pytest.raises(ValueError):
        Sample(id="s", context="c", question="q", options=("a", "b"))
    with pytest.raises(ValueError):
        Sample(id="s", context="c", question="q", options=opts, label=N_OPTIONS)
    sample = Sample(id="s", context="c", question="q", options=opts, label=3)
    assert Sample.from_dict(sample.to_dict()) == sample


def test_unlabeled_sample_round_trip_drops_label_key():
    sample = Sample(id="s", context="c", question="q", options=("a", "b", "c", "d"))
    assert "label" not in sample.to_dict()
    assert Sample.from_dict(sample.to_dict()).label is None


def test_derivation_step_round_trip():
    step = DerivationStep("modus_ponens", ("Fact:Fact(A)", "SA:If(A,B)"), "Fact:Fact(B)")
    assert DerivationStep.from_dict(step.to_dict()) == step
