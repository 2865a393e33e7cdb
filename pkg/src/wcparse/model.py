"""Biaffine graph-based dependency parser with hand-written gradients.

Tokens are encoded from word and UPOS embeddings with a +/-2 token window
and an affine-tanh layer. Arcs are scored with a biaffine form over head
and dependent projections, labels with a bilinear form at the (head,
dependent) pair. All tasks share a single :class:`ParserParams`.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .conllu import PAD_ID, Batch, Sentence, Vocab

MASK = -1e9

PARAM_NAMES = (
    "word_emb",
    "upos_emb",
    "enc_w",
    "enc_b",
    "root",
    "head_w",
    "head_b",
    "dep_w",
    "dep_b",
    "arc_u",
    "arc_b",
    "lab_w",
    "lab_b",
)


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str, task_id: str | None = None):
        where = f" on task {task_id!r}" if task_id is not None else ""
        super().__init__(f"non-finite gradient for {name}{where}; update aborted")
        self.name = name
        self.task_id = task_id


@dataclass(frozen=True)
class ModelConfig:
    word_dim: int = 64
    upos_dim: int = 16
    hidden_dim: int = 128
    arc_dim: int = 64
    window: int = 2

    @property
    def feature_dim(self) -> int:
        return (2 * self.window + 1) * (self.word_dim + self.upos_dim)


@dataclass
class ParserParams:
    """All trainable tensors. Also used as the container for gradients."""

    word_emb: np.ndarray
    upos_emb: np.ndarray
    enc_w: np.ndarray
    enc_b: np.ndarray
    root: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray
    dep_w: np.ndarray
    dep_b: np.ndarray
    arc_u: np.ndarray
    arc_b: np.ndarray
    lab_w: np.ndarray
    lab_b: np.ndarray

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in PARAM_NAMES:
            yield name, getattr(self, name)

    def zeros_like(self) -> "ParserParams":
        return ParserParams(**{k: np.zeros_like(v) for k, v in self.items()})

    def copy(self) -> "ParserParams":
        return ParserParams(**{k: v.copy() for k, v in self.items()})

    def scale(self, c: float) -> "ParserParams":
        return ParserParams(**{k: v * c for k, v in self.items()})

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for _, v in self.items())

    @property
    def n_labels(self) -> int:
        return self.lab_w.shape[0]


GradientSet = ParserParams


def init_params(
    config: ModelConfig, vocab: Vocab, rng: np.random.Generator, zero: bool = False
) -> ParserParams:
    """Glorot-uniform weights, zero biases. ``zero=True`` gives an all-zero model."""
    c = config
    L = max(len(vocab.deprels), 1)
    shapes = {
        "word_emb": (len(vocab.words), c.word_dim),
        "upos_emb": (len(vocab.upos), c.upos_dim),
        "enc_w": (c.feature_dim, c.hidden_dim),
        "enc_b": (c.hidden_dim,),
        "root": (c.hidden_dim,),
        "head_w": (c.hidden_dim, c.arc_dim),
        "head_b": (c.arc_dim,),
        "dep_w": (c.hidden_dim, c.arc_dim),
        "dep_b": (c.arc_dim,),
        "arc_u": (c.arc_dim, c.arc_dim),
        "arc_b": (c.arc_dim,),
        "lab_w": (L, c.arc_dim, c.arc_dim),
        "lab_b": (L,),
    }
    biases = {"enc_b", "head_b", "dep_b", "arc_b", "lab_b"}
    tensors = {}
    for name in PARAM_NAMES:
        shape = shapes[name]
        if zero or name in biases:
            tensors[name] = np.zeros(shape)
            continue
        fan_in, fan_out = (1, shape[0]) if len(shape) == 1 else shape[-2:]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    return ParserParams(**tensors)


# ----------------------------------------------------------------------------
# forward / backward


def sentence_ids(sentence: Sentence, vocab: Vocab) -> tuple[np.ndarray, np.ndarray]:
    words = np.fromiter((vocab.word_id(t.form) for t in sentence.tokens), dtype=np.int64)
    upos = np.fromiter((vocab.upos_id(t.upos) for t in sentence.tokens), dtype=np.int64)
    return words, upos


def _window_ids(ids: np.ndarray, window: int) -> np.ndarray:
    n = len(ids)
    padded = np.concatenate([np.full(window, PAD_ID), ids, np.full(window, PAD_ID)])
    return np.stack([padded[i : i + n] for i in range(2 * window + 1)], axis=1)


def _window(params: ParserParams) -> int:
    width = params.enc_w.shape[0] // (params.word_emb.shape[1] + params.upos_emb.shape[1])
    return (width - 1) // 2


class _Forward:
    """Cached activations of one sentence."""

    def __init__(self, params: ParserParams, words: np.ndarray, upos: np.ndarray):
        w = _window(params)
        self.wwin = _window_ids(words, w)
        self.pwin = _window_ids(upos, w)
        n = len(words)
        feats = np.concatenate([params.word_emb[self.wwin], params.upos_emb[self.pwin]], axis=2)
        self.x = feats.reshape(n, -1)
        self.h = np.tanh(self.x @ params.enc_w + params.enc_b)
        self.reps = np.vstack([params.root[None, :], self.h])
        self.hh = self.reps @ params.head_w + params.head_b
        self.hd = self.reps @ params.dep_w + params.dep_b
        self.n = n


def _arc_mask(n: int) -> np.ndarray:
    mask = np.eye(n + 1, dtype=bool)
    mask[:, 0] = True
    return mask


def _arc_scores(params: ParserParams, hh: np.ndarray, hd: np.ndarray) -> np.ndarray:
    scores = hh @ params.arc_u @ hd.T + (hh @ params.arc_b)[:, None]
    scores[_arc_mask(len(hh) - 1)] = MASK
    return scores


def encode(sentence: Sentence, params: ParserParams, vocab: Vocab) -> np.ndarray:
    """Return the (n+1) x d_h representation matrix; row 0 is ROOT."""
    if len(sentence) == 0:
        raise ValueError("cannot encode an empty sentence")
    return _Forward(params, *sentence_ids(sentence, vocab)).reps


def score_arcs(reps: np.ndarray, params: ParserParams) -> np.ndarray:
    """Arc score matrix, entry [h, d] scores h -> d; self-arcs and arcs into ROOT masked."""
    hh = reps @ params.head_w + params.head_b
    hd = reps @ params.dep_w + params.dep_b
    return _arc_scores(params, hh, hd)


def score_labels(reps: np.ndarray, params: ParserParams) -> np.ndarray:
    """Label scores of shape L x (n+1) x n for every (head, dependent) pair."""
    hh = reps @ params.head_w + params.head_b
    hd = reps[1:] @ params.dep_w + params.dep_b
    # [l, h, d] = hh[h] . W[l] . hd[d] + b[l]
    return (hh @ params.lab_w) @ hd.T + params.lab_b[:, None, None]


def _log_softmax(z: np.ndarray, axis: int) -> np.ndarray:
    m = z.max(axis=axis, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def _sentence_pass(
    params: ParserParams,
    sentence: Sentence,
    vocab: Vocab,
    grads: ParserParams | None,
) -> tuple[float, int]:
    """Summed token loss of one sentence; accumulates unnormalised grads if given."""
    words, upos = sentence_ids(sentence, vocab)
    heads = np.fromiter((t.head for t in sentence.tokens), dtype=np.int64)
    labels = np.fromiter((vocab.deprel_id(t.deprel) for t in sentence.tokens), dtype=np.int64)
    fw = _Forward(params, words, upos)
    n = fw.n
    deps = np.arange(1, n + 1)

    scores = _arc_scores(params, fw.hh, fw.hd)
    arc_logp = _log_softmax(scores[:, 1:], axis=0)  # (n+1, n), column per dependent
    arc_loss = -arc_logp[heads, deps - 1].sum()

    a = fw.hh[heads]  # gold-head projections (n, d_a)
    b = fw.hd[1:]
    aw = a @ params.lab_w  # (L, n, d_a)
    lab_scores = (aw * b[None]).sum(-1).T + params.lab_b  # (n, L)
    lab_logp = _log_softmax(lab_scores, axis=1)
    lab_loss = -lab_logp[np.arange(n), labels].sum()
    loss = float(arc_loss + lab_loss)
    if grads is None:
        return loss, n

    # arc part
    d_scores = np.zeros_like(scores)
    d_scores[:, 1:] = np.exp(arc_logp)
    d_scores[heads, deps] -= 1.0
    d_scores[_arc_mask(n)] = 0.0
    u = params.arc_u
    row = d_scores.sum(axis=1)
    d_hh = d_scores @ fw.hd @ u.T + np.outer(row, params.arc_b)
    d_hd = d_scores.T @ fw.hh @ u
    grads.arc_u += fw.hh.T @ d_scores @ fw.hd
    grads.arc_b += fw.hh.T @ row

    # label part
    g = np.exp(lab_logp)
    g[np.arange(n), labels] -= 1.0
    gt = g.T[:, :, None]  # (L, n, 1)
    grads.lab_w += (gt * a[None]).transpose(0, 2, 1) @ b
    grads.lab_b += g.sum(axis=0)
    wb = b @ params.lab_w.transpose(0, 2, 1)  # (L, n, d_a)
    np.add.at(d_hh, heads, (gt * wb).sum(axis=0))
    d_hd[1:] += (gt * aw).sum(axis=0)

    # projections
    grads.head_w += fw.reps.T @ d_hh
    grads.head_b += d_hh.sum(axis=0)
    grads.dep_w += fw.reps.T @ d_hd
    grads.dep_b += d_hd.sum(axis=0)
    d_reps = d_hh @ params.head_w.T + d_hd @ params.dep_w.T

    # encoder
    grads.root += d_reps[0]
    d_pre = d_reps[1:] * (1.0 - fw.h**2)
    grads.enc_w += fw.x.T @ d_pre
    grads.enc_b += d_pre.sum(axis=0)
    d_x = (d_pre @ params.enc_w.T).reshape(n, fw.wwin.shape[1], -1)
    dw = params.word_emb.shape[1]
    np.add.at(grads.word_emb, fw.wwin, d_x[:, :, :dw])
    np.add.at(grads.upos_emb, fw.pwin, d_x[:, :, dw:])
    return loss, n


def batch_loss(batch: Batch | Sequence[Sentence], params: ParserParams, vocab: Vocab) -> float:
    """Mean per-token arc + label cross-entropy over the batch."""
    sentences = batch.sentences if isinstance(batch, Batch) else batch
    if not sentences:
        raise ValueError("empty batch")
    total, count = 0.0, 0
    for sent in sentences:
        loss, n = _sentence_pass(params, sent, vocab, None)
        total += loss
        count += n
    return total / count


def batch_gradient(
    batch: Batch | Sequence[Sentence], params: ParserParams, vocab: Vocab
) -> tuple[float, GradientSet]:
    sentences = batch.sentences if isinstance(batch, Batch) else batch
    if not sentences:
        raise ValueError("empty batch")
    grads = params.zeros_like()
    total, count = 0.0, 0
    for sent in sentences:
        loss, n = _sentence_pass(params, sent, vocab, grads)
        total += loss
        count += n
    inv = 1.0 / count
    for _, g in grads.items():
        g *= inv
    return total / count, grads


# ----------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] | None = None
    v: dict[str, np.ndarray] | None = None


def apply_update(
    params: ParserParams,
    grads: GradientSet,
    state: OptimizerState,
    task_id: str | None = None,
) -> tuple[ParserParams, OptimizerState]:
    """One bias-corrected Adam step, in place. Raises before touching anything on NaN/Inf."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise NonFiniteGradientError(name, task_id)
    if state.m is None:
        state.m = {k: np.zeros_like(v) for k, v in params.items()}
        state.v = {k: np.zeros_like(v) for k, v in params.items()}
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = getattr(grads, name)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


# ----------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path: str | Path,
    params: ParserParams,
    vocab: Vocab,
    config: ModelConfig,
    extra: dict | None = None,
) -> None:
    """Write config, vocab and every tensor (little-endian float64) to one .npz file."""
    meta = {"model": asdict(config), "vocab": vocab.to_dict(), "extra": extra or {}}
    arrays = {name: np.ascontiguousarray(v, dtype="<f8") for name, v in params.items()}
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta)), **arrays)


def load_checkpoint(path: str | Path) -> tuple[ParserParams, Vocab, ModelConfig, dict]:
    with np.load(Path(path), allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        params = ParserParams(**{name: data[name].astype(np.float64) for name in PARAM_NAMES})
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in meta["model"].items() if k in known})
    return params, Vocab.from_dict(meta["vocab"]), config, meta.get("extra", {})
