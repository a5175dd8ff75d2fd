import pytest

from logipath.atoms import Category
from logipath.lexicon import (
    ArgOrder,
    Connective,
    Lexicon,
    LexiconError,
    Position,
    dump_lexicon,
    load_lexicon,
    match_connective,
    parse_lexicon_text,
)


def test_bundled_lexicon_covers_all_categories(lex):
    for category in (Category.CAUSE, Category.SA, Category.NA):
        assert lex.surfaces(category), category


def test_bundled_lookup_spot_checks(lex):
    because = lex.lookup("because")
    assert because is not None
    assert because.category is Category.CAUSE
    only_if = lex.lookup("only if")
    assert only_if is not None
    assert only_if.category is Category.NA
    assert only_if.order is ArgOrder.ATTACHED_SECOND
    assert lex.lookup("if").category is Category.SA
    assert lex.lookup("no such phrase") is None


def test_longest_match_wins(lex):
    tokens = "a holds only if b holds".split()
    found = match_connective(tokens, lex)
    assert found is not None
    entry, (start, end) = found
    assert entry.surface == "only if"
    assert tokens[start:end] == ["only", "if"]


def test_position_restrictions():
    entries = parse_lexicon_text(
        "front\tCause\tsentence-initial\tfirst-clause-first-arg\n"
        "mid\tCause\tmedial\tfirst-clause-first-arg\n"
    )
    lexicon = Lexicon(tuple(entries))
    assert match_connective("front a mid b".split(), lexicon)[0].surface == "front"
    assert match_connective("x mid b".split(), lexicon)[0].surface == "mid"
    assert match_connective("mid b".split(), lexicon) is None
    assert match_connective("x front b".split(), lexicon) is None


def test_earliest_start_breaks_ties():
    entries = parse_lexicon_text(
        "alpha\tCause\teither\tfirst-clause-first-arg\n"
        "beta\tCause\teither\tfirst-clause-first-arg\n"
    )
    lexicon = Lexicon(tuple(entries))
    entry, span = match_connective("x alpha y beta z".split(), lexicon)
    assert entry.surface == "alpha"
    assert span == (1, 2)


def test_parse_rejects_malformed_rows():
    with pytest.raises(LexiconError, match="4 tab-separated"):
        parse_lexicon_text("only if\tNA\tmedial\n")
    with pytest.raises(LexiconError, match="unknown category"):
        parse_lexicon_text("x\tNope\tmedial\tfirst-clause-first-arg\n")
    with pytest.raises(LexiconError, match="unknown position"):
        parse_lexicon_text("x\tNA\tnowhere\tfirst-clause-first-arg\n")
    with pytest.raises(LexiconError, match="unknown argument order"):
        parse_lexicon_text("x\tNA\tmedial\tbackwards\n")
    with pytest.raises(LexiconError, match="duplicate"):
        parse_lexicon_text(
            "x\tNA\tmedial\tfirst-clause-first-arg\n"
            "x\tSA\tmedial\tfirst-clause-first-arg\n"
        )


def test_comments_and_blank_lines_ignored():
    entries = parse_lexicon_text("# header\n\nif\tSA\tmedial\tsecond-clause-first-arg\n")
    assert len(entries) == 1


def test_user_file_overrides_bundled_entry(tmp_path, lex):
    override = tmp_path / "extra.tsv"
    override.write_text(
        "because\tSA\tmedial\tfirst-clause-first-arg\n"
        "zonk\tNA\teither\tsecond-clause-first-arg\n",
        encoding="utf-8",
    )
    merged = load_lexicon(override)
    assert merged.lookup("because").category is Category.SA
    assert merged.lookup("zonk") is not None
    assert len(merged) == len(lex) + 1


def test_missing_user_file_errors():
    with pytest.raises(LexiconError, match="not found"):
        load_lexicon("/no/such/file.tsv")


def test_dump_round_trip(lex):
    text = dump_lexicon(lex)
    entries = parse_lexicon_text(text)
    assert len(entries) == len(lex)
    again = Lexicon(tuple(entries))
    assert again.lookup("only if").order is lex.lookup("only if").order


def test_candidates_sorted_longest_first(lex):
    group = lex.candidates_at("only")
    assert list(group) == sorted(
        group, key=lambda e: (-len(e.phrase), e.surface)
    )
