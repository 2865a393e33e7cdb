"""Worst-case-aware automated curriculum over tasks (one task per treebank).

A bandit sampler pushes loss-scored batches into per-task FIFO queues; the
trainer picks one queued batch per step, either the one with the largest
recorded loss (with probability ``phi``) or one drawn proportionally to
the recorded losses; the sampler is then rewarded for the trainer's pick
and penalised for the other tasks it sampled.
"""

from __future__ import annotations

import bisect
import itertools
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .conllu import Batch, Treebank, Vocab, make_batches
from .model import OptimizerState, ParserParams, apply_update, batch_gradient, batch_loss

log = logging.getLogger(__name__)

SAMPLERS = ("curriculum", "uniform", "proportional", "smooth")
BASELINES = ("uniform", "proportional", "smooth")


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, len(probs) - 1)


# ----------------------------------------------------------------------------
# loss summaries and baseline distributions


def normalize_losses(losses: Sequence[float]) -> np.ndarray:
    """Loss vector -> probability vector proportional to the losses."""
    arr = np.asarray(losses, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("need a non-empty loss vector")
    if (arr < 0).any():
        raise ValueError("losses must be non-negative")
    total = arr.sum()
    if not total > 0:
        raise ValueError("all losses are zero; the loss distribution is undefined")
    return arr / total


def lp_summarize(losses: Sequence[float], p: float) -> float:
    """L^p norm of a loss vector; ``p=math.inf`` gives the maximum."""
    if p < 1:
        raise ValueError("p must be >= 1")
    arr = np.asarray(losses, dtype=np.float64)
    if (arr < 0).any():
        raise ValueError("losses must be non-negative")
    if arr.size == 0:
        return 0.0
    if math.isinf(p):
        return float(arr.max())
    return float((arr**p).sum() ** (1.0 / p))


def baseline_distribution(kind: str, sizes: Sequence[float], alpha: float = 0.5) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.float64)
    if sizes.size == 0 or (sizes <= 0).any():
        raise ValueError("treebank sizes must be positive")
    if kind == "uniform":
        return np.full(sizes.size, 1.0 / sizes.size)
    if kind == "proportional":
        return sizes / sizes.sum()
    if kind == "smooth":
        w = sizes**alpha
        return w / w.sum()
    raise ValueError(f"unknown baseline sampler {kind!r}")


# ----------------------------------------------------------------------------
# buffer


@dataclass
class ScoredBatch:
    batch: Batch
    recorded_loss: float
    push_step: int


class Buffer:
    """One bounded FIFO queue of scored batches per task."""

    def __init__(self, n_tasks: int, capacity: int):
        if n_tasks < 1 or capacity < 1:
            raise ValueError("need at least one task and a positive capacity")
        self.capacity = capacity
        self.queues: list[deque[ScoredBatch]] = [deque() for _ in range(n_tasks)]
        self.pushes = [0] * n_tasks
        self.pops = [0] * n_tasks
        self.evictions = [0] * n_tasks

    def __len__(self) -> int:
        return sum(len(q) for q in self.queues)

    @property
    def n_tasks(self) -> int:
        return len(self.queues)

    def push(self, task: int, item: ScoredBatch) -> ScoredBatch | None:
        q = self.queues[task]
        q.append(item)
        self.pushes[task] += 1
        if len(q) > self.capacity:
            self.evictions[task] += 1
            return q.popleft()
        return None

    def pop(self, task: int) -> ScoredBatch:
        self.pops[task] += 1
        return self.queues[task].popleft()

    def front_losses(self) -> np.ndarray:
        """Recorded loss at each queue front; NaN for empty queues."""
        return np.array([q[0].recorded_loss if q else np.nan for q in self.queues])


class Selection(NamedTuple):
    task: int
    scored: ScoredBatch
    p: float
    branch: str  # "max" or "proportional"


def select_training_loss(buffer: Buffer, phi: float, rng: np.random.Generator) -> Selection:
    """Pick and pop the batch the trainer learns from.

    With probability ``phi`` the queue front with the largest recorded loss,
    otherwise a queue front drawn proportionally to the recorded losses.
    Empty queues take no part.
    """
    # plain Python: the loss vectors are tiny and this runs every step
    live = [t for t, q in enumerate(buffer.queues) if q]
    if not live:
        raise ValueError("cannot select from an empty buffer")
    losses = [buffer.queues[t][0].recorded_loss for t in live]
    p = float(rng.random())
    if p < phi:
        top_loss = max(losses)
        top = [t for t, loss in zip(live, losses) if loss == top_loss]
        # exact ties only arise with identical losses; break them at random
        task = top[0] if len(top) == 1 else top[int(rng.integers(len(top)))]
        branch = "max"
    else:
        cdf = list(itertools.accumulate(losses))
        if not cdf[-1] > 0:
            cdf = list(range(1, len(live) + 1))
        i = bisect.bisect_right(cdf, rng.random() * cdf[-1])
        task = live[min(i, len(live) - 1)]
        branch = "proportional"
    return Selection(task, buffer.pop(task), p, branch)


# ----------------------------------------------------------------------------
# sampler policy


@dataclass
class SamplerPolicy:
    """Exponential weights over tasks mixed with uniform exploration."""

    log_weights: np.ndarray
    epsilon: float = 0.1
    eta: float = 0.1

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=np.float64)
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    @classmethod
    def uniform(cls, n_tasks: int, epsilon: float = 0.1, eta: float = 0.1) -> "SamplerPolicy":
        return cls(np.zeros(n_tasks), epsilon, eta)

    def probabilities(self) -> np.ndarray:
        z = self.log_weights - self.log_weights.max()
        w = np.exp(z)
        n = len(w)
        return (1.0 - self.epsilon) * w / w.sum() + self.epsilon / n


def sampler_draw(policy: SamplerPolicy, rng: np.random.Generator) -> int:
    return _categorical(policy.probabilities(), rng)


def update_policy(policy: SamplerPolicy, trainer_chosen: int, round_sampled: Sequence[int]) -> SamplerPolicy:
    """+1 reward to the trainer's task, -1/|others| to every other sampled task."""
    if len(round_sampled) == 0:
        raise ValueError("round_sampled must be non-empty")
    others = sorted(set(int(t) for t in round_sampled) - {trainer_chosen})
    policy.log_weights[trainer_chosen] += policy.eta
    penalty = policy.eta / max(1, len(others))
    for t in others:
        policy.log_weights[t] -= penalty
    return policy


# ----------------------------------------------------------------------------
# task streams and training


class TaskStream:
    """Endless batches of one treebank, reshuffled every epoch."""

    def __init__(self, treebank: Treebank, batch_size: int, seed: int, index: int, max_len: int | None = None):
        sents = tuple(s for s in treebank.sentences if max_len is None or len(s) <= max_len)
        if not sents:
            raise ValueError(f"treebank {treebank.task_id!r} has no sentences of length <= {max_len}")
        self.treebank = Treebank(treebank.task_id, sents, treebank.split)
        self.batch_size = batch_size
        self.seed = seed
        self.index = index
        self.epoch = 0
        self._pending: deque[Batch] = deque()

    def __iter__(self):
        return self

    def __next__(self) -> Batch:
        if not self._pending:
            epoch_seed = np.random.SeedSequence([self.seed, self.index, self.epoch]).generate_state(1)[0]
            self._pending.extend(make_batches(self.treebank, self.batch_size, int(epoch_seed)))
            self.epoch += 1
        return self._pending.popleft()


def push_round(
    policy: SamplerPolicy,
    buffer: Buffer,
    params: ParserParams,
    streams: Sequence[TaskStream],
    k: int,
    rng: np.random.Generator,
    vocab: Vocab,
    step: int = 0,
) -> list[int]:
    """Sample k tasks, score their next batch under ``params`` and queue them."""
    sampled = []
    for _ in range(k):
        task = sampler_draw(policy, rng)
        batch = next(streams[task])
        buffer.push(task, ScoredBatch(batch, batch_loss(batch, params, vocab), step))
        sampled.append(task)
    return sampled


@dataclass(frozen=True)
class CurriculumConfig:
    phi: float = 0.5
    k: int | None = None  # defaults to the number of training tasks
    buffer_capacity: int = 4
    steps: int = 1000
    seed: int = 0
    sampler: str = "curriculum"
    alpha: float = 0.5
    epsilon: float = 0.1
    eta: float = 0.1
    batch_size: int = 32
    max_len: int | None = 60

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}, got {self.sampler!r}")
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError("phi must lie in [0, 1]")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class StepRecord:
    step: int
    sampled: tuple[str, ...]
    trainer_task: str
    loss: float
    l1: float
    linf: float
    p: float | None
    branch: str


HISTORY_HEADER = ("step", "sampler_task", "trainer_task", "loss", "L1_summary", "Linf_summary", "p_drawn", "branch")


def format_history(records: Sequence[StepRecord]) -> str:
    lines = ["\t".join(HISTORY_HEADER)]
    for r in records:
        lines.append(
            "\t".join(
                [
                    str(r.step),
                    ",".join(r.sampled),
                    r.trainer_task,
                    repr(r.loss),
                    repr(r.l1),
                    repr(r.linf),
                    "-" if r.p is None else repr(r.p),
                    r.branch,
                ]
            )
        )
    return "\n".join(lines) + "\n"


def parse_history(text: str) -> list[StepRecord]:
    rows = [line.split("\t") for line in text.splitlines() if line]
    if not rows or tuple(rows[0]) != HISTORY_HEADER:
        raise ValueError("not a training history file")
    return [
        StepRecord(
            int(r[0]),
            tuple(r[1].split(",")) if r[1] else (),
            r[2],
            float(r[3]),
            float(r[4]),
            float(r[5]),
            None if r[6] == "-" else float(r[6]),
            r[7],
        )
        for r in rows[1:]
    ]


@dataclass
class TrainResult:
    params: ParserParams
    optimizer: OptimizerState
    history: list[StepRecord]
    policy: SamplerPolicy | None = None
    buffer: Buffer | None = None
    task_ids: list[str] = field(default_factory=list)


def train_loop(
    config: CurriculumConfig,
    treebanks: Sequence[Treebank],
    params: ParserParams,
    optimizer: OptimizerState,
    vocab: Vocab,
    log_every: int = 0,
) -> TrainResult:
    """Train shared ``params`` on several tasks for ``config.steps`` updates.

    The loss summaries in the history are taken over the most recent loss
    observed for each task so far (pushed or trained on).
    """
    if not treebanks:
        raise ValueError("need at least one training treebank")
    ids = [tb.task_id for tb in treebanks]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate task ids among {ids}")
    n = len(treebanks)
    streams = [TaskStream(tb, config.batch_size, config.seed, i, config.max_len) for i, tb in enumerate(treebanks)]
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    last_loss = np.full(n, np.nan)
    history: list[StepRecord] = []

    def summaries():
        seen = last_loss[~np.isnan(last_loss)]
        return lp_summarize(seen, 1), lp_summarize(seen, math.inf)

    if config.sampler == "curriculum":
        k = config.k if config.k is not None else n
        policy = SamplerPolicy.uniform(n, config.epsilon, config.eta)
        buffer = Buffer(n, config.buffer_capacity)
        for step in range(1, config.steps + 1):
            sampled = push_round(policy, buffer, params, streams, k, rng, vocab, step)
            for queue_task, q in enumerate(buffer.queues):
                if q:
                    last_loss[queue_task] = q[-1].recorded_loss
            sel = select_training_loss(buffer, config.phi, rng)
            loss, grads = batch_gradient(sel.scored.batch, params, vocab)
            apply_update(params, grads, optimizer, ids[sel.task])
            last_loss[sel.task] = loss
            update_policy(policy, sel.task, sampled)
            l1, linf = summaries()
            history.append(StepRecord(step, tuple(ids[t] for t in sampled), ids[sel.task], loss, l1, linf, sel.p, sel.branch))
            if log_every and step % log_every == 0:
                log.info("step %d task %s loss %.4f Linf %.4f", step, ids[sel.task], loss, linf)
        return TrainResult(params, optimizer, history, policy, buffer, ids)

    probs = baseline_distribution(config.sampler, [len(s.treebank) for s in streams], config.alpha)
    for step in range(1, config.steps + 1):
        task = _categorical(probs, rng)
        batch = next(streams[task])
        loss, grads = batch_gradient(batch, params, vocab)
        apply_update(params, grads, optimizer, ids[task])
        last_loss[task] = loss
        l1, linf = summaries()
        history.append(StepRecord(step, (ids[task],), ids[task], loss, l1, linf, None, "-"))
        if log_every and step % log_every == 0:
            log.info("step %d task %s loss %.4f", step, ids[task], loss)
    return TrainResult(params, optimizer, history, None, None, ids)
