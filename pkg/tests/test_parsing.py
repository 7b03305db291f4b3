"""Rule-based dependency parser: arc correctness and tree invariants."""

from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annotated_sentences import ANNOTATED
from evstory.parsing import ParseError, RuleBasedDependencyParser, verb_lemma

PARSER = RuleBasedDependencyParser()


def arcs_of(sentence: str) -> set[tuple[str, str, str]]:
    parse = PARSER.parse(sentence.split())
    return {(a.head.surface, a.label, a.tail.surface) for a in parse.arcs}


class TestVerbLemma:
    @pytest.mark.parametrize(
        "form,lemma",
        [
            ("walks", "walk"), ("notices", "notice"), ("tries", "try"),
            ("walked", "walk"), ("noticed", "notice"), ("stopped", "stop"),
            ("tried", "try"), ("walking", "walk"), ("driving", "drive"),
            ("running", "run"), ("went", "go"), ("was", "be"), ("shut", "shut"),
            ("gave", "give"), ("turns", "turn"), ("killed", "kill"),
        ],
    )
    def test_known_forms(self, form, lemma):
        assert verb_lemma(form) == lemma

    @pytest.mark.parametrize("word", ["dog", "raise", "curb", "the", "beautiful"])
    def test_non_verbs(self, word):
        assert verb_lemma(word) is None


class TestSchemaArcs:
    """One check per schema label on its defining sentence."""

    def test_prt(self):
        assert ("shut", "prt", "down") in arcs_of("tom shut down the shop .")

    def test_neg(self):
        assert ("drive", "neg", "not") in arcs_of("bill does not drive .")

    def test_agent(self):
        arcs = arcs_of("the man was killed by the police .")
        assert ("killed", "agent", "police") in arcs
        assert ("killed", "auxpass", "was") in arcs
        assert ("killed", "nsubjpass", "man") in arcs

    def test_dobj(self):
        arcs = arcs_of("he gave her a raise .")
        assert ("gave", "dobj", "raise") in arcs
        assert ("gave", "dative", "her") in arcs

    def test_acomp(self):
        assert ("looks", "acomp", "beautiful") in arcs_of("she looks beautiful .")

    def test_ccomp(self):
        arcs = arcs_of("he says that they like it .")
        assert ("says", "ccomp", "like") in arcs
        assert ("like", "nsubj", "they") in arcs
        assert ("like", "mark", "that") in arcs

    def test_xcomp(self):
        arcs = arcs_of("they like to swim .")
        assert ("like", "xcomp", "swim") in arcs

    def test_stacked_particle_and_xcomp(self):
        arcs = arcs_of("it turns out to be a stray dog .")
        assert ("turns", "prt", "out") in arcs
        assert ("turns", "xcomp", "be") in arcs
        assert ("be", "attr", "dog") in arcs

    def test_noun_phrase_internals(self):
        arcs = arcs_of("he sees his lost dog .")
        assert ("dog", "det", "his") in arcs
        assert ("dog", "amod", "lost") in arcs
        assert ("sees", "dobj", "dog") in arcs


class TestTreeInvariants:
    def test_empty_sentence_rejected(self):
        with pytest.raises(ParseError):
            PARSER.parse([])

    @pytest.mark.parametrize("entry", ANNOTATED, ids=lambda e: " ".join(e["tokens"][:4]))
    def test_annotated_sentences_form_trees(self, entry):
        parse = PARSER.parse(entry["tokens"])
        tails = sorted(a.tail.index for a in parse.arcs)
        expected = [i for i in range(len(entry["tokens"])) if i != parse.root_index]
        assert tails == expected  # every non-root token has exactly one head
        assert all(a.head.index != a.tail.index for a in parse.arcs)

    @given(
        st.lists(
            st.sampled_from(
                ["the", "a", "dog", "ken", "ran", "saw", "was", "happy",
                 "not", "to", "swim", "up", "by", "never", "quickly", ".",
                 "[MALE]", "that", "her", "it"]
            ),
            min_size=1,
            max_size=12,
        )
    )
    @settings(max_examples=300, deadline=None)
    def test_random_token_soup_always_yields_a_tree(self, tokens):
        parse = PARSER.parse(tokens)
        assert 0 <= parse.root_index < len(tokens)
        tails = sorted(a.tail.index for a in parse.arcs)
        assert tails == [i for i in range(len(tokens)) if i != parse.root_index]
        for arc in parse.arcs:
            assert arc.label
            assert arc.head.index != arc.tail.index

    def test_parse_is_deterministic(self):
        tokens = "it turns out to be a stray dog .".split()
        a = PARSER.parse(tokens)
        b = PARSER.parse(tokens)
        assert [(x.head.index, x.label, x.tail.index) for x in a.arcs] == [
            (x.head.index, x.label, x.tail.index) for x in b.arcs
        ]

    def test_case_insensitive(self):
        lower = arcs_of("tom shut down the shop .")
        upper = arcs_of("Tom SHUT down THE shop .")
        assert lower == upper
