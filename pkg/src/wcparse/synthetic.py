"""Toy treebanks from parametrised word-order grammars.

Each language gets its own random lexicon and a word-order type; the
grammar covers subjects, objects, obliques, determiners, adjectives,
adpositions and nominal modifiers. Useful for desk-scale experiments
where typologically skewed training samples are needed.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .conllu import Sentence, Token, Treebank

SYLLABLES = [c + v for c in "bdfgklmnprstvz" for v in "aeiou"]
LEXICON_SIZES = {"NOUN": 40, "VERB": 25, "ADJ": 20, "DET": 4, "ADP": 6, "PRON": 6}


@dataclass(frozen=True)
class WordOrder:
    subject_first: bool = True
    verb_object: bool = True  # VO, else OV
    det_before_noun: bool = True
    adj_before_noun: bool = True
    prepositions: bool = True
    nmod_after_noun: bool = True


# English-like versus a head-final, Turkish/Japanese-like order
HEAD_INITIAL = WordOrder()
HEAD_FINAL = WordOrder(True, False, True, True, False, False)


@dataclass
class _Node:
    form: str
    upos: str
    deprel: str
    left: list
    right: list


def make_lexicon(name: str) -> dict[str, list[str]]:
    rng = np.random.default_rng(zlib.crc32(name.encode("utf-8")))
    lex = {}
    used = set()
    for upos, size in LEXICON_SIZES.items():
        words = []
        while len(words) < size:
            n_syl = int(rng.integers(1, 3)) if upos in ("DET", "ADP", "PRON") else int(rng.integers(2, 4))
            w = "".join(rng.choice(SYLLABLES, size=n_syl))
            if w not in used:
                used.add(w)
                words.append(w)
        lex[upos] = words
    return lex


class SyntheticLanguage:
    def __init__(self, name: str, order: WordOrder, lexicon_name: str | None = None):
        self.name = name
        self.order = order
        self.lexicon = make_lexicon(lexicon_name or name)

    def _word(self, upos, rng):
        words = self.lexicon[upos]
        return words[int(rng.integers(len(words)))]

    def _np(self, deprel, rng, depth=0):
        o = self.order
        if depth == 0 and deprel == "nsubj" and rng.random() < 0.2:
            return _Node(self._word("PRON", rng), "PRON", deprel, [], [])
        node = _Node(self._word("NOUN", rng), "NOUN", deprel, [], [])
        if rng.random() < 0.6:
            det = _Node(self._word("DET", rng), "DET", "det", [], [])
            (node.left.insert(0, det) if o.det_before_noun else node.right.append(det))
        if rng.random() < 0.4:
            adj = _Node(self._word("ADJ", rng), "ADJ", "amod", [], [])
            (node.left.append(adj) if o.adj_before_noun else node.right.insert(0, adj))
        if depth < 1 and rng.random() < 0.15:
            pp = self._pp("nmod", rng, depth + 1)
            (node.right.append(pp) if o.nmod_after_noun else node.left.insert(0, pp))
        return node

    def _pp(self, deprel, rng, depth=0):
        node = self._np(deprel, rng, depth)
        case = _Node(self._word("ADP", rng), "ADP", "case", [], [])
        (node.left.insert(0, case) if self.order.prepositions else node.right.append(case))
        return node

    def sentence(self, rng: np.random.Generator, sent_id: str | None = None) -> Sentence:
        o = self.order
        verb = _Node(self._word("VERB", rng), "VERB", "root", [], [])
        subj = self._np("nsubj", rng)
        obj = self._np("obj", rng) if rng.random() < 0.7 else None
        obl = self._pp("obl", rng) if rng.random() < 0.4 else None
        (verb.left if o.subject_first else verb.right).append(subj)
        for dep in (obj, obl):
            if dep is not None:
                (verb.right if o.verb_object else verb.left).append(dep)
        verb.right.append(_Node(".", "PUNCT", "punct", [], []))
        return _linearize(verb, sent_id)

    def treebank(self, n_sentences: int, seed: int, split: str = "train", task_id: str | None = None) -> Treebank:
        rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(self.name.encode())]))
        tid = task_id or self.name
        sents = tuple(self.sentence(rng, f"{tid}-{i + 1}") for i in range(n_sentences))
        return Treebank(tid, sents, split)


def _linearize(root: _Node, sent_id: str | None) -> Sentence:
    order: list[tuple[_Node, _Node | None]] = []

    def walk(node, parent):
        for child in node.left:
            walk(child, node)
        order.append((node, parent))
        for child in node.right:
            walk(child, node)

    walk(root, None)
    position = {id(node): i for i, (node, _) in enumerate(order, start=1)}
    tokens = tuple(
        Token(node.form, node.upos, 0 if parent is None else position[id(parent)], node.deprel)
        for node, parent in order
    )
    return Sentence(tokens, sent_id)


def random_tree(n: int, rng: np.random.Generator) -> list[int]:
    """A uniformly-ordered random recursive tree with a single ROOT child."""
    perm = rng.permutation(n) + 1
    heads = [0] * n
    for i, node in enumerate(perm):
        heads[node - 1] = 0 if i == 0 else int(perm[int(rng.integers(i))])
    return heads


def scramble_heads(treebank: Treebank, seed: int, task_id: str | None = None) -> Treebank:
    """Replace every gold tree by a random one; labels stay attached to their tokens."""
    rng = np.random.default_rng(seed)
    sents = []
    for s in treebank.sentences:
        heads = random_tree(len(s), rng)
        toks = tuple(Token(t.form, t.upos, h, t.deprel) for t, h in zip(s.tokens, heads))
        sents.append(Sentence(toks, s.sent_id))
    return Treebank(task_id or treebank.task_id, tuple(sents), treebank.split)


def skewed_benchmark(
    seed: int = 0,
    majority_shards: int = 4,
    majority_size: int = 300,
    minority_size: int = 60,
    test_size: int = 100,
) -> tuple[list[Treebank], list[Treebank]]:
    """Training shards dominated by one duplicated head-initial language plus
    one head-final outlier; two unseen head-final languages for testing."""
    major = SyntheticLanguage("major", HEAD_INITIAL)
    minor = SyntheticLanguage("minor", HEAD_FINAL)
    train = [major.treebank(majority_size, seed + i, task_id=f"major_{i + 1}") for i in range(majority_shards)]
    train.append(minor.treebank(minority_size, seed + 100))
    test = [
        SyntheticLanguage(name, HEAD_FINAL).treebank(test_size, seed + 200 + i, split="test")
        for i, name in enumerate(("outlier_a", "outlier_b"))
    ]
    return train, test
