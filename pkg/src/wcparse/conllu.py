"""CoNLL-U reading, vocabularies and deterministic per-task batching."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# CoNLL-U column indices
ID, FORM, LEMMA, UPOS, XPOS, FEATS, HEAD, DEPREL, DEPS, MISC = range(10)

SPLITS = ("train", "dev", "test")

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


class ConlluParseError(ValueError):
    """Malformed CoNLL-U line."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TreeValidationError(ValueError):
    """Gold annotation does not form a tree rooted at ROOT."""

    def __init__(self, sent_id: str, message: str):
        super().__init__(f"sentence {sent_id}: {message}")
        self.sent_id = sent_id


@dataclass(frozen=True)
class Token:
    form: str
    upos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    sent_id: str | None = None

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str]:
        return [t.deprel for t in self.tokens]


@dataclass(frozen=True)
class Treebank:
    task_id: str
    sentences: tuple[Sentence, ...]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class Batch:
    task_id: str
    sentences: tuple[Sentence, ...]

    def __len__(self) -> int:
        return len(self.sentences)


def tree_problem(heads: Sequence[int]) -> str | None:
    """Return a description of why ``heads`` is not a ROOT-rooted tree, or None."""
    n = len(heads)
    for i, h in enumerate(heads, start=1):
        if not 0 <= h <= n:
            return f"token {i} has out-of-range head {h}"
        if h == i:
            return f"token {i} is its own head"
    # every token must reach ROOT without revisiting a node
    state = [0] * (n + 1)  # 0 unvisited, 1 on current path, 2 reaches root
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if state[node] == 1:
            return f"cycle through token {node}"
        for p in path:
            state[p] = 2
    return None


def _universal(deprel: str) -> str:
    return deprel.split(":", 1)[0]


def _finish(rows, sent_id, count, task_id, first_line) -> Sentence:
    tokens = tuple(rows)
    problem = tree_problem([t.head for t in tokens])
    if problem is not None:
        name = sent_id if sent_id is not None else f"#{count + 1} (line {first_line})"
        raise TreeValidationError(name, problem)
    return Sentence(tokens, sent_id)


def parse_conllu(text: str, task_id: str, split: str = "train") -> Treebank:
    """Parse CoNLL-U text into a treebank.

    Multiword-token ranges (``1-2``) and empty nodes (``3.1``) are skipped.
    Relation subtypes are truncated to the universal label.
    """
    sentences: list[Sentence] = []
    rows: list[Token] = []
    sent_id = None
    first_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if rows:
                sentences.append(_finish(rows, sent_id, len(sentences), task_id, first_line))
            rows, sent_id = [], None
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            if key.strip() == "sent_id" and not rows:
                sent_id = value.strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(lineno, f"expected 10 tab-separated columns, got {len(cols)}")
        tok_id = cols[ID]
        if "-" in tok_id or "." in tok_id:
            continue
        if not rows:
            first_line = lineno
        try:
            idx = int(tok_id)
        except ValueError:
            raise ConlluParseError(lineno, f"non-integer ID {tok_id!r}") from None
        if idx != len(rows) + 1:
            raise ConlluParseError(lineno, f"expected token ID {len(rows) + 1}, got {idx}")
        try:
            head = int(cols[HEAD])
        except ValueError:
            raise ConlluParseError(lineno, f"non-integer HEAD {cols[HEAD]!r}") from None
        form, upos = cols[FORM], cols[UPOS]
        if not form or not upos or upos == "_":
            raise ConlluParseError(lineno, "empty FORM or UPOS")
        rows.append(Token(form, upos, head, _universal(cols[DEPREL])))
    if rows:
        sentences.append(_finish(rows, sent_id, len(sentences), task_id, first_line))
    return Treebank(task_id, tuple(sentences), split)


def read_conllu(path: str | Path, task_id: str, split: str = "train") -> Treebank:
    return parse_conllu(Path(path).read_text(encoding="utf-8"), task_id, split)


def format_conllu(sentences: Iterable[Sentence]) -> str:
    """Serialize sentences as CoNLL-U (unused columns written as ``_``)."""
    out = []
    for sent in sentences:
        if sent.sent_id is not None:
            out.append(f"# sent_id = {sent.sent_id}")
        for i, t in enumerate(sent.tokens, start=1):
            out.append(f"{i}\t{t.form}\t_\t{t.upos}\t_\t_\t{t.head}\t{t.deprel}\t_\t_")
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def write_conllu(path: str | Path, sentences: Iterable[Sentence]) -> None:
    Path(path).write_text(format_conllu(sentences), encoding="utf-8")


@dataclass
class Vocab:
    """Word, UPOS and relation inventories.

    Words and UPOS tags both reserve ``PAD_ID`` and ``UNK_ID``; relation
    labels have no reserved entries.
    """

    words: list[str] = field(default_factory=lambda: [PAD, UNK])
    upos: list[str] = field(default_factory=lambda: [PAD, UNK])
    deprels: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.word_to_id = {w: i for i, w in enumerate(self.words)}
        self.upos_to_id = {p: i for i, p in enumerate(self.upos)}
        self.deprel_to_id = {d: i for i, d in enumerate(self.deprels)}

    def word_id(self, form: str) -> int:
        return self.word_to_id.get(form.lower(), UNK_ID)

    def upos_id(self, tag: str) -> int:
        return self.upos_to_id.get(tag, UNK_ID)

    def deprel_id(self, label: str) -> int:
        return self.deprel_to_id[_universal(label)]

    def to_dict(self) -> dict:
        return {"words": self.words, "upos": self.upos, "deprels": self.deprels}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(list(d["words"]), list(d["upos"]), list(d["deprels"]))


def build_vocab(treebanks: Sequence[Treebank]) -> Vocab:
    if not treebanks:
        raise ValueError("cannot build a vocabulary from zero treebanks")
    words, upos, deprels = {}, {}, {}
    for tb in treebanks:
        for sent in tb.sentences:
            for t in sent.tokens:
                words.setdefault(t.form.lower(), None)
                upos.setdefault(t.upos, None)
                deprels.setdefault(t.deprel, None)
    for reserved in (PAD, UNK):
        words.pop(reserved, None)
        upos.pop(reserved, None)
    return Vocab([PAD, UNK, *words], [PAD, UNK, *upos], list(deprels))


def make_batches(treebank: Treebank, batch_size: int, seed: int) -> list[Batch]:
    """Shuffle ``treebank`` under ``seed`` and cut it into consecutive batches."""
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    if not treebank.sentences:
        raise ValueError(f"treebank {treebank.task_id!r} is empty")
    order = np.random.default_rng(seed).permutation(len(treebank.sentences))
    sents = [treebank.sentences[i] for i in order]
    return [
        Batch(treebank.task_id, tuple(sents[i : i + batch_size]))
        for i in range(0, len(sents), batch_size)
    ]
