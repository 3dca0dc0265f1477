import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linkreg.partition import (
    NEW,
    Constraint,
    ConstraintViolation,
    LinkageState,
    pairwise_links,
    summary,
)


def test_merge_two_singletons():
    s = LinkageState([1, 1])
    s.move_record(1, int(s.labels[0]))
    assert s.k == 1
    assert summary(s).cluster_sizes == (2,)


def test_split_pair_to_new():
    s = LinkageState([1, 1], [0, 0])
    assert s.k == 1
    s.move_record(1, NEW)
    assert s.k == 2
    assert summary(s).cluster_sizes == (1, 1)


def test_bipartite_move_into_same_db_rejected():
    s = LinkageState([1, 1, 2], [0, 1, 1], Constraint.NO_WITHIN_DB_DUPLICATES)
    with pytest.raises(ConstraintViolation):
        s.move_record(0, 1)
    s.check_consistency()


def test_constructor_rejects_violating_labels():
    with pytest.raises(ConstraintViolation):
        LinkageState([1, 1], [0, 0], Constraint.NO_WITHIN_DB_DUPLICATES)


def test_unknown_target():
    s = LinkageState([1, 1, 1], [0, 0, 2])
    with pytest.raises(KeyError):
        s.move_record(0, 1)


def test_new_takes_smallest_free_label():
    s = LinkageState([1, 1, 1, 1], [0, 0, 0, 3])
    assert s.move_record(3, NEW) == 1


@pytest.mark.parametrize("labels,n_pairs", [
    ([0, 1, 2, 3, 4], 0),
    ([0, 0, 0], 3),
    ([0, 0, 1, 1, 2], 2),
])
def test_pairwise_links_counts(labels, n_pairs):
    assert len(pairwise_links(LinkageState([1] * len(labels), labels))) == n_pairs


def test_summary_singletons():
    assert summary(LinkageState([1] * 500)).k == 500


def test_summary_bipartite_identity():
    db = [1] * 250 + [2] * 250
    labels = list(range(500))
    for j in range(28):
        labels[250 + j] = j
    s = LinkageState(db, labels, Constraint.NO_WITHIN_DB_DUPLICATES)
    out = summary(s)
    assert (out.t, out.k) == (28, 472)


def test_summary_empty():
    assert summary(LinkageState([])).k == 0


def test_canonical_labels():
    a = LinkageState([1] * 4, [3, 3, 0, 1])
    b = LinkageState([1] * 4, [1, 1, 2, 0])
    assert a.canonical_labels().tolist() == b.canonical_labels().tolist() == [0, 0, 1, 2]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.lists(st.tuples(st.integers(0, 11), st.integers(-1, 11)), max_size=80),
       st.booleans(), st.randoms(use_true_random=False))
def test_random_moves_keep_bookkeeping(n, moves, constrained, rnd):
    db = [rnd.choice([1, 2]) for _ in range(n)]
    cons = Constraint.NO_WITHIN_DB_DUPLICATES if constrained else Constraint.UNCONSTRAINED
    s = LinkageState(db, None, cons)
    for r, t in moves:
        r %= n
        k0 = s.k
        target = NEW if t < 0 else t % n
        try:
            s.move_record(r, target)
        except (KeyError, ConstraintViolation):
            pass
        assert s.k - k0 in (-1, 0, 1)
    s.check_consistency()
    assert s.sizes.sum() == n


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=1, max_size=8), st.permutations(range(8)))
def test_label_invariance(labels, perm):
    n = len(labels)
    labels = [v % n for v in labels]
    mapping = [p for p in perm if p < n]
    a = LinkageState([1] * n, labels)
    b = LinkageState([1] * n, [mapping[v] for v in labels])
    assert summary(a) == summary(b)
    assert pairwise_links(a) == pairwise_links(b)


def test_copy_is_independent():
    s = LinkageState([1, 1, 1])
    c = s.copy()
    c.move_record(0, 1)
    assert s.k == 3 and c.k == 2
    np.testing.assert_array_equal(s.labels, [0, 1, 2])
