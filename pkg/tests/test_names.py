import random

import pytest
from hypothesis import given, settings, strategies as st

from inventor_linker.names import (
    choose_canonical,
    cluster_inventors,
    fold_name,
    link_components,
    similarity,
    similarity_matrix,
)

from oracles import closure_components, levenshtein, ratio


@pytest.mark.parametrize("raw, key", [
    ("REYMOND David", "david reymond"),
    ("David Reymond", "david reymond"),
    ("DURAND-BARTHEZ Manuel", "barthez durand manuel"),
    ("LEFÈVRE Hélène", "helene lefevre"),
    ("  Guérin,   Chloé ", "chloe guerin"),
    ("MARTIN P.", "martin p"),
    ("Straße", "strasse"),
    ("---", ""),
])
def test_fold_examples(raw, key):
    assert fold_name(raw) == key


@given(st.text())
def test_fold_idempotent(raw):
    assert fold_name(fold_name(raw)) == fold_name(raw)


def test_similarity_examples():
    assert similarity(fold_name("DURAND-BARTHEZ Manuel"), fold_name("DURAND-BARTHES Manuel")) == 95
    assert similarity("abc", "abd") == 67
    assert similarity("", "") == 100
    assert similarity("abc", "") == 0
    long = "a" * 300
    assert similarity(long, long + "b") == 99


names_alphabet = st.text(alphabet="abcde ", max_size=12)


@given(names_alphabet, names_alphabet)
def test_similarity_matches_dp_oracle(a, b):
    assert similarity(a, b) == ratio(a, b)
    assert similarity(a, b) == similarity(b, a)
    assert (similarity(a, b) == 100) == (a == b)


@settings(max_examples=30, deadline=None)
@given(st.lists(names_alphabet, max_size=12))
def test_similarity_matrix_matches_pairwise(keys):
    m = similarity_matrix(keys)
    for i, a in enumerate(keys):
        for j, b in enumerate(keys):
            assert m[i, j] == ratio(a, b)


def test_levenshtein_oracle_sanity():
    assert levenshtein("kitten", "sitting") == 3
    assert levenshtein("", "abc") == 3


def _partition(keys, threshold):
    roots = link_components(keys, threshold)
    groups = {}
    for k, r in zip(keys, roots):
        groups.setdefault(r, set()).add(k)
    return {frozenset(g) for g in groups.values()}


@settings(max_examples=50, deadline=None)
@given(st.lists(names_alphabet, max_size=15, unique=True), st.integers(0, 100))
def test_components_equal_transitive_closure(keys, threshold):
    assert _partition(keys, threshold) == closure_components(keys, threshold)


def test_cluster_example():
    names = [("REYMOND David", "P1"), ("David Reymond", "P2"),
             ("DURAND-BARTHEZ Manuel", "P1"), ("DURAND-BARTHES Manuel", "P3"),
             ("SIMON Julie", "P1")]
    clusters = {c.canonical: c for c in cluster_inventors(names, 90)}
    assert set(clusters) == {"DURAND-BARTHES Manuel", "David Reymond", "SIMON Julie"}
    assert clusters["David Reymond"].patent_refs == {"P1", "P2"}
    assert {v.raw for v in clusters["DURAND-BARTHES Manuel"].variants} == {
        "DURAND-BARTHEZ Manuel", "DURAND-BARTHES Manuel"}


def test_empty_names_are_dropped():
    clusters = cluster_inventors([("--", "P1"), ("A B", "P1")])
    assert [c.canonical for c in clusters] == ["A B"]


def test_canonical_choice():
    assert choose_canonical(["ab", "abc", "abd"]) == "abc"


raw_names = st.lists(st.tuples(st.sampled_from([
    "Jean Dupont", "DUPONT Jean", "DUPOND Jean", "Marie Curie", "CURIE Marie",
    "Curie, M.", "Ève Martin", "MARTIN Eve", "MARTINE Eve", "Luc Bernard",
]), st.sampled_from(["P1", "P2", "P3"])), max_size=20)


@settings(max_examples=40, deadline=None)
@given(raw_names, st.randoms())
def test_cluster_permutation_invariant(names, rnd):
    shuffled = names[:]
    rnd.shuffle(shuffled)
    assert cluster_inventors(names) == cluster_inventors(shuffled)


@settings(max_examples=40, deadline=None)
@given(raw_names, st.integers(0, 100), st.integers(0, 100))
def test_cluster_threshold_monotone(names, t1, t2):
    lo, hi = sorted((t1, t2))
    coarse = [{v.raw for v in c.variants} for c in cluster_inventors(names, lo)]
    for c in cluster_inventors(names, hi):
        fine = {v.raw for v in c.variants}
        assert any(fine <= big for big in coarse)


def test_workers_do_not_change_result():
    rnd = random.Random(3)
    names = [("".join(rnd.choice("abcdef") for _ in range(6)) + " x", f"P{i}") for i in range(300)]
    assert cluster_inventors(names, 80, workers=1) == cluster_inventors(names, 80, workers=4)
