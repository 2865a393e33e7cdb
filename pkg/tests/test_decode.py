import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wcparse.decode import (
    all_single_root_trees,
    assign_labels,
    brute_force_best_tree,
    chu_liu_edmonds,
    greedy_decode,
    is_single_root_tree,
    tree_score,
)

NEG = -1e9


def enumerate_trees(n):
    """Independent oracle: filter all head assignments by reachability from ROOT."""
    out = []
    for heads in itertools.product(range(n + 1), repeat=n):
        if sum(h == 0 for h in heads) != 1 or any(h == d for d, h in enumerate(heads, 1)):
            continue
        reach = {0}
        changed = True
        while changed:
            changed = False
            for d, h in enumerate(heads, 1):
                if h in reach and d not in reach:
                    reach.add(d)
                    changed = True
        if len(reach) == n + 1:
            out.append(list(heads))
    return out


def oracle_best(s):
    n = s.shape[0] - 1
    return max(tree_score(s, t) for t in enumerate_trees(n))


def matrix(entries, n):
    s = np.full((n + 1, n + 1), NEG)
    for (h, d), v in entries.items():
        s[h, d] = v
    return s


def test_single_token():
    s = matrix({(0, 1): 0.3}, 1)
    assert chu_liu_edmonds(s) == [0]
    assert greedy_decode(s) == [0]
    assert brute_force_best_tree(s) == [0]


def test_two_tokens_worked_example():
    s = matrix({(0, 1): 5, (0, 2): 1, (1, 2): 4, (2, 1): 0}, 2)
    assert enumerate_trees(2) == [[0, 1], [2, 0]]
    assert oracle_best(s) == 9
    assert chu_liu_edmonds(s) == [0, 1]
    assert tree_score(s, [2, 0]) == 1


def test_greedy_cycle_resolved():
    s = matrix(
        {(0, 1): 1, (0, 2): 1, (0, 3): 3, (1, 2): 10, (2, 1): 10, (1, 3): 0, (2, 3): 0, (3, 1): 2, (3, 2): 5},
        3,
    )
    assert greedy_decode(s) == [2, 1, 0]  # 1 <-> 2 cycle
    assert len(enumerate_trees(3)) == 9
    assert oracle_best(s) == 18
    heads = chu_liu_edmonds(s)
    assert heads == [2, 3, 0]
    assert heads != greedy_decode(s)
    assert brute_force_best_tree(s) == heads


def test_greedy_equals_cle_when_already_a_tree():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(5, 5))
    for d, h in enumerate([0, 1, 1, 3], 1):
        s[h, d] = 10.0
    assert greedy_decode(s) == chu_liu_edmonds(s) == [0, 1, 1, 3]


def test_greedy_upper_bounds_tree_per_column():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = rng.normal(size=(5, 5))
        g, c = greedy_decode(s), chu_liu_edmonds(s)
        for d in range(1, 5):
            assert s[g[d - 1], d] >= s[c[d - 1], d]


def test_cayley_counts():
    for n in range(1, 6):
        assert len(all_single_root_trees(n)) == n ** (n - 1)
    assert all_single_root_trees(3).tolist() == enumerate_trees(3)


def test_brute_force_limit_and_empty():
    with pytest.raises(ValueError):
        brute_force_best_tree(np.zeros((9, 9)))
    with pytest.raises(ValueError):
        chu_liu_edmonds(np.zeros((1, 1)))


def test_brute_force_tie_break_lexicographic():
    s = np.zeros((3, 3))
    assert brute_force_best_tree(s) == [0, 1]


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_cle_matches_oracle_random(n):
    rng = np.random.default_rng(n)
    for _ in range(100):
        s = rng.normal(size=(n + 1, n + 1))
        heads = chu_liu_edmonds(s)
        assert is_single_root_tree(heads)
        assert tree_score(s, heads) == pytest.approx(tree_score(s, brute_force_best_tree(s)), abs=1e-9)


@settings(max_examples=150, deadline=None)
@given(
    st.integers(1, 7).flatmap(
        lambda n: arrays(np.float64, (n + 1, n + 1), elements=st.floats(-50, 50, allow_nan=False))
    )
)
def test_cle_always_a_single_root_tree(s):
    assert is_single_root_tree(chu_liu_edmonds(s))


@settings(max_examples=100, deadline=None)
@given(
    st.integers(2, 5).flatmap(
        lambda n: arrays(np.float64, (n + 1, n + 1), elements=st.floats(-10, 10, allow_nan=False))
    ),
    st.floats(-100, 100),
)
def test_constant_shift_keeps_optimum(s, c):
    n = s.shape[0] - 1
    best = tree_score(s, chu_liu_edmonds(s))
    shifted = s + c
    assert tree_score(shifted, chu_liu_edmonds(shifted)) == pytest.approx(best + n * c, abs=1e-6)


def test_assign_labels():
    heads = [2, 0, 2]
    ones = np.zeros((1, 4, 3))
    assert assign_labels(ones, heads) == [0, 0, 0]
    gold = [3, 0, 1]
    scores = np.zeros((4, 4, 3))
    for d, (h, lab) in enumerate(zip(heads, gold)):
        scores[lab, h, d] = 1.0
    out = assign_labels(scores, heads)
    assert out == gold and len(out) == 3
