"""Tree decoding from arc score matrices.

Score matrices are (n+1) x (n+1) with entry [h, d] the score of the arc
h -> d and index 0 the artificial ROOT. Self-arcs and arcs into ROOT are
ignored whatever their stored value.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Sequence

import numpy as np

MAX_BRUTE_FORCE = 7


def _prepare(scores) -> np.ndarray:
    s = np.array(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"score matrix must be square, got shape {s.shape}")
    if s.shape[0] < 2:
        raise ValueError("cannot decode a sentence with zero tokens")
    np.fill_diagonal(s, -np.inf)
    s[:, 0] = -np.inf
    return s


def tree_score(scores, heads: Sequence[int]) -> float:
    s = np.asarray(scores, dtype=np.float64)
    return float(sum(s[h, d] for d, h in enumerate(heads, start=1)))


def is_single_root_tree(heads: Sequence[int]) -> bool:
    n = len(heads)
    if sum(1 for h in heads if h == 0) != 1:
        return False
    for d, h in enumerate(heads, start=1):
        if not 0 <= h <= n or h == d:
            return False
    for start in range(1, n + 1):
        node, steps = start, 0
        while node != 0:
            node = heads[node - 1]
            steps += 1
            if steps > n:
                return False
    return True


def _find_cycle(heads: np.ndarray) -> list[int] | None:
    """First cycle in a head array (heads[0] unused), as a node list, or None."""
    m = len(heads)
    color = np.zeros(m, dtype=np.int8)
    color[0] = 2
    for start in range(1, m):
        path = []
        node = start
        while color[node] == 0:
            color[node] = 1
            path.append(node)
            node = heads[node]
        if color[node] == 1:
            return path[path.index(node) :]
        for p in path:
            color[p] = 2
    return None


def _cle(s: np.ndarray) -> np.ndarray:
    """Unconstrained maximum arborescence rooted at node 0 (may have several root children)."""
    m = s.shape[0]
    heads = np.zeros(m, dtype=np.int64)
    heads[1:] = np.argmax(s[:, 1:], axis=0)
    cycle = _find_cycle(heads)
    if cycle is None:
        return heads

    in_cycle = np.zeros(m, dtype=bool)
    in_cycle[cycle] = True
    rest = [i for i in range(m) if not in_cycle[i]]  # includes ROOT at position 0
    c = len(rest)  # index of the contracted node
    cyc = np.array(cycle)
    cycle_in = s[heads[cyc], cyc]  # score of each cycle node's current head arc

    sub = np.full((c + 1, c + 1), -np.inf)
    rest_idx = np.array(rest)
    sub[:c, :c] = s[np.ix_(rest_idx, rest_idx)]
    # arcs entering the cycle: best entry point per outside head
    enter = s[np.ix_(rest_idx, cyc)] - cycle_in[None, :]
    enter_arg = np.argmax(enter, axis=1)
    sub[:c, c] = enter[np.arange(c), enter_arg]
    # arcs leaving the cycle: best cycle source per outside dependent
    leave = s[np.ix_(cyc, rest_idx)]
    leave_arg = np.argmax(leave, axis=0)
    sub[c, :c] = leave[leave_arg, np.arange(c)]
    sub[:, 0] = -np.inf
    np.fill_diagonal(sub, -np.inf)

    sub_heads = _cle(sub)

    out = heads.copy()
    for j in range(1, c):
        h = sub_heads[j]
        out[rest[j]] = cycle[leave_arg[j]] if h == c else rest[h]
    u = sub_heads[c]
    out[cycle[enter_arg[u]]] = rest[u]
    return out


def chu_liu_edmonds(scores) -> list[int]:
    """Maximum-score single-root spanning arborescence.

    Each token is tried as the only child of ROOT; the best of these
    unconstrained decodes wins (first one on ties).
    """
    s = _prepare(scores)
    n = s.shape[0] - 1
    best, best_score = None, -np.inf
    for r in range(1, n + 1):
        constrained = s.copy()
        constrained[0, :] = -np.inf
        constrained[0, r] = s[0, r]
        heads = _cle(constrained)[1:]
        total = tree_score(constrained, heads)
        if best is None or total > best_score:
            best, best_score = heads, total
    return [int(h) for h in best]


def greedy_decode(scores) -> list[int]:
    """Per-dependent argmax head; may produce cycles or several roots."""
    s = _prepare(scores)
    return [int(h) for h in np.argmax(s[:, 1:], axis=0)]


@lru_cache(maxsize=None)
def all_single_root_trees(n: int) -> np.ndarray:
    """Every single-root arborescence over n tokens, in lexicographic head order."""
    if n < 1:
        raise ValueError("need at least one token")
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"brute force enumeration limited to n <= {MAX_BRUTE_FORCE}")
    trees = [
        heads
        for heads in itertools.product(range(n + 1), repeat=n)
        if is_single_root_tree(heads)
    ]
    return np.array(trees, dtype=np.int64).reshape(len(trees), n)


def brute_force_best_tree(scores) -> list[int]:
    """Exhaustive search; ties go to the lexicographically smallest head list."""
    s = _prepare(scores)
    n = s.shape[0] - 1
    trees = all_single_root_trees(n)
    totals = s[trees, np.arange(1, n + 1)].sum(axis=1)
    return [int(h) for h in trees[int(np.argmax(totals))]]


def assign_labels(label_scores, heads: Sequence[int]) -> list[int]:
    """label[d] = argmax_l label_scores[l, heads[d], d] (dependent axis is 0-based)."""
    ls = np.asarray(label_scores)
    n = len(heads)
    if ls.shape[2] != n:
        raise ValueError(f"label scores cover {ls.shape[2]} dependents, heads has {n}")
    picked = ls[:, np.asarray(heads, dtype=np.int64), np.arange(n)]  # (L, n)
    return [int(x) for x in np.argmax(picked, axis=0)]
