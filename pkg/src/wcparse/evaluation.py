"""Attachment scores, zero-shot evaluation, paired bootstrap and error reduction."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .conllu import Sentence, Treebank, Vocab
from .decode import assign_labels, chu_liu_edmonds
from .model import ParserParams, encode, score_arcs, score_labels


@dataclass(frozen=True)
class ParseTree:
    heads: tuple[int, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.heads)


def parse_sentence(sentence: Sentence, params: ParserParams, vocab: Vocab) -> ParseTree:
    reps = encode(sentence, params, vocab)
    heads = chu_liu_edmonds(score_arcs(reps, params))
    label_ids = assign_labels(score_labels(reps, params), heads)
    return ParseTree(tuple(heads), tuple(vocab.deprels[i] for i in label_ids))


def attachment_scores(gold: Sentence, pred: ParseTree) -> tuple[int, int, int]:
    """(correct heads, correct heads with correct label, tokens). Punctuation counts."""
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} tokens, prediction has {len(pred)}")
    uas = las = 0
    for tok, h, lab in zip(gold.tokens, pred.heads, pred.labels):
        if tok.head == h:
            uas += 1
            if tok.deprel == lab:
                las += 1
    return uas, las, len(gold)


@dataclass(frozen=True)
class TreebankScore:
    uas: float
    las: float
    tokens: int


def macro_average(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        raise ValueError("nothing to average")
    return float(sum(vals) / len(vals))


@dataclass
class EvalReport:
    per_treebank: dict[str, TreebankScore] = field(default_factory=dict)

    @property
    def macro_average_las(self) -> float:
        return macro_average(s.las for s in self.per_treebank.values())

    @property
    def macro_average_uas(self) -> float:
        return macro_average(s.uas for s in self.per_treebank.values())

    @classmethod
    def from_las(cls, las: Mapping[str, float]) -> "EvalReport":
        """Report built from LAS values alone (UAS set equal, token counts unknown)."""
        return cls({k: TreebankScore(float(v), float(v), 0) for k, v in las.items()})

    def las_vector(self, order: Sequence[str]) -> np.ndarray:
        return np.array([self.per_treebank[t].las for t in order])

    def to_json(self) -> str:
        doc = {
            "per_treebank": {
                k: {"UAS": s.uas, "LAS": s.las, "tokens": s.tokens} for k, s in self.per_treebank.items()
            },
            "macro_average_uas": self.macro_average_uas,
            "macro_average_las": self.macro_average_las,
        }
        return json.dumps(doc, indent=2) + "\n"

    def to_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["treebank", "tokens", "UAS", "LAS"])
        for k, s in self.per_treebank.items():
            w.writerow([k, s.tokens, f"{s.uas:.4f}", f"{s.las:.4f}"])
        total = sum(s.tokens for s in self.per_treebank.values())
        w.writerow(["average", total, f"{self.macro_average_uas:.4f}", f"{self.macro_average_las:.4f}"])
        return buf.getvalue()

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(
            {
                k: TreebankScore(float(v["UAS"]), float(v["LAS"]), int(v["tokens"]))
                for k, v in doc["per_treebank"].items()
            }
        )

    @classmethod
    def from_tsv(cls, text: str) -> "EvalReport":
        rows = list(csv.reader(io.StringIO(text), delimiter="\t"))
        if not rows or rows[0][:4] != ["treebank", "tokens", "UAS", "LAS"]:
            raise ValueError("not an evaluation report")
        return cls(
            {r[0]: TreebankScore(float(r[2]), float(r[3]), int(r[1])) for r in rows[1:] if r and r[0] != "average"}
        )


def load_report(path: str | Path) -> EvalReport:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return EvalReport.from_json(text)
    return EvalReport.from_tsv(text)


def evaluate(treebanks: Sequence[Treebank], predict: Callable[[Sentence], ParseTree]) -> EvalReport:
    report = EvalReport()
    for tb in treebanks:
        uas = las = total = 0
        for sent in tb.sentences:
            u, l, n = attachment_scores(sent, predict(sent))
            uas += u
            las += l
            total += n
        if total == 0:
            raise ValueError(f"treebank {tb.task_id!r} has no tokens")
        report.per_treebank[tb.task_id] = TreebankScore(100.0 * uas / total, 100.0 * las / total, total)
    return report


def zero_shot_eval(
    params: ParserParams,
    treebanks: Sequence[Treebank],
    vocab: Vocab,
    train_task_ids: Iterable[str] = (),
) -> EvalReport:
    """Decode every test sentence with CLE and score each treebank."""
    seen = set(train_task_ids) & {tb.task_id for tb in treebanks}
    if seen:
        raise ValueError(f"test treebanks overlap training tasks: {sorted(seen)}")
    return evaluate(treebanks, lambda s: parse_sentence(s, params, vocab))


def bootstrap_test(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    resamples: int = 10_000,
    seed: int = 0,
    chunk: int = 2_000,
) -> float:
    """One-sided paired bootstrap over treebanks for mean(a) > mean(b).

    Returns the fraction of resamples whose mean difference is <= 0.
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score vectors differ in length: {a.size} vs {b.size}")
    if a.ndim != 1 or a.size < 2:
        raise ValueError("need at least two paired scores")
    if resamples < 1:
        raise ValueError("resamples must be positive")
    diff = a - b
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < resamples:
        m = min(chunk, resamples - done)
        idx = rng.integers(0, diff.size, size=(m, diff.size))
        hits += int((diff[idx].mean(axis=1) <= 0).sum())
        done += m
    return hits / resamples


def _round1(x: float) -> float:
    return float(Decimal(repr(round(float(x), 9))).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def relative_error_reduction(base_las: float, ours_las: float, rounded: bool = True) -> tuple[float, float]:
    """(absolute LAS difference, relative error reduction in percent)."""
    for v in (base_las, ours_las):
        if not 0.0 <= v <= 100.0:
            raise ValueError(f"LAS {v} outside [0, 100]")
    if base_las >= 100.0:
        raise ValueError("error reduction undefined for a perfect baseline")
    delta = ours_las - base_las
    rer = 100.0 * delta / (100.0 - base_las)
    if rounded:
        return _round1(delta), _round1(rer)
    return delta, rer


@dataclass
class Comparison:
    treebanks: list[str]
    base: np.ndarray
    ours: np.ndarray
    base_avg: float
    ours_avg: float
    delta: float
    rer: float
    p_value: float

    def to_tsv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, delimiter="\t", lineterminator="\n")
        w.writerow(["treebank", "base", "ours", "delta", "RER"])
        for t, b, o in zip(self.treebanks, self.base, self.ours):
            if b < 100.0:
                d, r = relative_error_reduction(b, o)
                w.writerow([t, f"{b:.1f}", f"{o:.1f}", f"{d:.1f}", f"{r:.1f}"])
            else:
                w.writerow([t, f"{b:.1f}", f"{o:.1f}", f"{_round1(o - b):.1f}", "-"])
        w.writerow(["average", f"{self.base_avg:.1f}", f"{self.ours_avg:.1f}", f"{self.delta:.1f}", f"{self.rer:.1f}"])
        w.writerow(["p_value", f"{self.p_value:.4f}", "", "", ""])
        return buf.getvalue()


class TreebankMismatch(ValueError):
    def __init__(self, only_base: set[str], only_ours: set[str]):
        parts = []
        if only_base:
            parts.append(f"only in first report: {', '.join(sorted(only_base))}")
        if only_ours:
            parts.append(f"only in second report: {', '.join(sorted(only_ours))}")
        super().__init__("; ".join(parts))
        self.only_base = only_base
        self.only_ours = only_ours


def compare_reports(base: EvalReport, ours: EvalReport, resamples: int = 10_000, seed: int = 0) -> Comparison:
    """Per-treebank and macro differences of ``ours`` over ``base`` with a bootstrap p-value."""
    a, b = set(base.per_treebank), set(ours.per_treebank)
    if a != b:
        raise TreebankMismatch(a - b, b - a)
    order = list(base.per_treebank)
    base_v, ours_v = base.las_vector(order), ours.las_vector(order)
    base_avg, ours_avg = base.macro_average_las, ours.macro_average_las
    # reported averages are rounded first, as in published tables
    delta, rer = relative_error_reduction(_round1(base_avg), _round1(ours_avg))
    p = bootstrap_test(ours_v, base_v, resamples, seed) if len(order) >= 2 else float("nan")
    return Comparison(order, base_v, ours_v, base_avg, ours_avg, delta, rer, p)
