import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wcparse.conllu import Token, Treebank, Sentence, build_vocab
from wcparse.evaluation import (
    EvalReport,
    ParseTree,
    TreebankMismatch,
    TreebankScore,
    attachment_scores,
    bootstrap_test,
    compare_reports,
    evaluate,
    load_report,
    relative_error_reduction,
    zero_shot_eval,
)
from wcparse.model import init_params

from conftest import SMALL, sent

SAMPLE_ROWS = [  # base, ours, delta, rer
    (35.2, 36.4, 1.2, 1.9),
    (30.7, 31.4, 0.7, 1.0),
    (30.4, 31.7, 1.3, 1.9),
    (31.3, 32.5, 1.2, 1.7),
    (33.3, 34.8, 1.5, 2.2),
    (32.0, 32.2, 0.2, 0.3),
    (32.2, 33.0, 0.8, 1.2),
    (33.4, 34.1, 0.7, 1.1),
]


def gold_sentence():
    return sent(
        ("the", "DET", 2, "det"),
        ("dog", "NOUN", 3, "nsubj"),
        ("barks", "VERB", 0, "root"),
        (".", "PUNCT", 3, "punct"),
    )


def gold_tree(s):
    return ParseTree(s.heads, s.deprels)


# -- attachment scores --------------------------------------------------------


def test_attachment_example():
    gold = gold_sentence()
    pred = ParseTree((2, 3, 0, 2), ("det", "obj", "root", "punct"))
    uas, las, n = attachment_scores(gold, pred)
    assert (uas, las, n) == (3, 2, 4)
    assert 100 * uas / n == 75.0 and 100 * las / n == 50.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        attachment_scores(gold_sentence(), ParseTree((0,), ("root",)))


LABELS = ["a", "b", "c"]


@st.composite
def gold_and_pred(draw):
    n = draw(st.integers(1, 8))
    heads = [draw(st.integers(0, n)) for _ in range(n)]
    heads = [h if h != i + 1 else 0 for i, h in enumerate(heads)]
    gold_labels = [draw(st.sampled_from(LABELS)) for _ in range(n)]
    pred_heads = [draw(st.integers(0, n)) for _ in range(n)]
    pred_labels = [draw(st.sampled_from(LABELS)) for _ in range(n)]
    return heads, gold_labels, pred_heads, pred_labels


def _sentence(heads, labels):
    # scoring does not need well-formed trees
    return Sentence(tuple(Token(f"w{i}", "X", h, l) for i, (h, l) in enumerate(zip(heads, labels))))


@settings(max_examples=200)
@given(gold_and_pred(), st.randoms(use_true_random=False))
def test_las_le_uas_and_permutation_equivariance(data, rnd):
    heads, glab, pheads, plab = data
    gold = _sentence(heads, glab)
    pred = ParseTree(tuple(pheads), tuple(plab))
    uas, las, n = attachment_scores(gold, pred)
    assert las <= uas <= n
    # relabel token positions consistently in gold and prediction
    perm = list(range(1, len(heads) + 1))
    rnd.shuffle(perm)
    new_pos = {0: 0, **{old: new for new, old in enumerate(perm, start=1)}}
    order = sorted(range(len(heads)), key=lambda i: new_pos[i + 1])
    g2 = _sentence([new_pos[heads[i]] for i in order], [glab[i] for i in order])
    p2 = ParseTree(tuple(new_pos[pheads[i]] for i in order), tuple(plab[i] for i in order))
    assert attachment_scores(g2, p2) == (uas, las, n)


def test_evaluate_gold_predictor_gives_100(toy_treebank):
    report = evaluate([toy_treebank], gold_tree)
    score = report.per_treebank[toy_treebank.task_id]
    assert score.uas == score.las == 100.0
    assert score.tokens == toy_treebank.n_tokens
    assert report.macro_average_las == 100.0


def test_macro_average_is_unweighted():
    s = gold_sentence()
    small = Treebank("small", (s,), "test")
    big = Treebank("big", (s,) * 9, "test")
    wrong = ParseTree((0, 0, 0, 0), ("x",) * 4)  # 1 of 4 heads right, no labels

    def predict(x):
        return wrong if predict.tb == "small" else gold_tree(x)

    report = EvalReport()
    predict.tb = "small"
    report.per_treebank.update(evaluate([small], predict).per_treebank)
    predict.tb = "big"
    report.per_treebank.update(evaluate([big], predict).per_treebank)
    assert report.per_treebank["small"].uas == 25.0
    assert report.macro_average_uas == pytest.approx((25 + 100) / 2)
    assert report.macro_average_las == pytest.approx(50.0)


def test_zero_shot_eval_runs_and_refuses_training_tasks(synth_pair):
    vocab = build_vocab(list(synth_pair))
    params = init_params(SMALL, vocab, np.random.default_rng(0))
    test = Treebank("held", synth_pair[1].sentences[:5], "test")
    report = zero_shot_eval(params, [test], vocab, train_task_ids=[synth_pair[0].task_id])
    s = report.per_treebank["held"]
    assert 0 <= s.las <= s.uas <= 100
    with pytest.raises(ValueError, match="held"):
        zero_shot_eval(params, [test], vocab, train_task_ids=["held"])


# -- report files -------------------------------------------------------------


def _report():
    return EvalReport(
        {"x_a": TreebankScore(61.25, 50.5, 120), "y_b": TreebankScore(40.0, 33.3333, 80)}
    )


def test_report_roundtrip(tmp_path):
    rep = _report()
    assert EvalReport.from_json(rep.to_json()) == rep
    back = EvalReport.from_tsv(rep.to_tsv())
    assert list(back.per_treebank) == ["x_a", "y_b"]
    assert back.per_treebank["y_b"].las == 33.3333
    (tmp_path / "r.json").write_text(rep.to_json())
    (tmp_path / "r.tsv").write_text(rep.to_tsv())
    assert load_report(tmp_path / "r.json") == rep
    assert load_report(tmp_path / "r.tsv").per_treebank["x_a"].tokens == 120


def test_report_average_fields():
    doc = json.loads(_report().to_json())
    assert abs(doc["macro_average_las"] - (50.5 + 33.3333) / 2) < 1e-9
    last = _report().to_tsv().splitlines()[-1].split("\t")
    assert last == ["average", "200", "50.6250", "41.9167"]


# -- bootstrap ----------------------------------------------------------------


def test_bootstrap_identical_scores_never_significant():
    a = [30.0, 40.0, 50.0]
    assert bootstrap_test(a, a, resamples=500) == 1.0


def test_bootstrap_uniform_improvement():
    a = np.array([30.0, 40.0, 50.0, 45.0])
    assert bootstrap_test(a + 2, a, resamples=500) == 0.0


def test_bootstrap_power_for_one_point_shift():
    rng = np.random.default_rng(11)
    rejections = 0
    for i in range(100):
        base = rng.normal(40, 10, 30)
        ours = base + 1.0 + rng.normal(0, 1.0, 30)
        rejections += bootstrap_test(ours, base, resamples=2000, seed=i) < 0.05
    assert rejections >= 95


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=8), st.integers(0, 100))
def test_bootstrap_complementarity(diffs, seed):
    base = np.full(len(diffs), 50.0)
    ours = base + np.round(diffs, 3)
    p1 = bootstrap_test(ours, base, resamples=300, seed=seed)
    p2 = bootstrap_test(base, ours, resamples=300, seed=seed)
    assert p1 + p2 >= 1.0 - 1e-12
    assert 0.0 <= p1 <= 1.0


def test_bootstrap_input_errors():
    with pytest.raises(ValueError):
        bootstrap_test([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        bootstrap_test([1], [1])


# -- relative error reduction -------------------------------------------------


@pytest.mark.parametrize("base,ours,delta,rer", SAMPLE_ROWS)
def test_published_sample_rows(base, ours, delta, rer):
    assert relative_error_reduction(base, ours) == (delta, rer)


def test_rer_identity_and_errors():
    assert relative_error_reduction(42.0, 42.0) == (0.0, 0.0)
    with pytest.raises(ValueError):
        relative_error_reduction(100.0, 99.0)
    with pytest.raises(ValueError):
        relative_error_reduction(50.0, 101.0)


@settings(max_examples=200)
@given(st.floats(0.01, 99.9), st.floats(0, 100))
def test_rer_sign_and_magnitude(base, ours):
    d, r = relative_error_reduction(base, ours, rounded=False)
    assert np.sign(d) == np.sign(r)
    if d > 0:
        assert r >= d


# -- comparison ---------------------------------------------------------------


def test_compare_published_row():
    base = EvalReport.from_las({"a": 35.0, "b": 35.4})
    ours = EvalReport.from_las({"a": 36.0, "b": 36.8})
    cmp = compare_reports(base, ours, resamples=200)
    assert (cmp.delta, cmp.rer) == (1.2, 1.9)
    rows = cmp.to_tsv().splitlines()
    assert rows[0].split("\t") == ["treebank", "base", "ours", "delta", "RER"]
    assert rows[3].split("\t") == ["average", "35.2", "36.4", "1.2", "1.9"]
    assert rows[4].startswith("p_value\t")


def test_compare_swapped_negates_delta():
    a = EvalReport.from_las({"a": 35.0, "b": 35.4, "c": 20.0})
    b = EvalReport.from_las({"a": 36.0, "b": 36.8, "c": 21.0})
    assert compare_reports(b, a, 100).delta == -compare_reports(a, b, 100).delta


def test_compare_mismatch():
    a = EvalReport.from_las({"a": 1.0, "b": 2.0})
    b = EvalReport.from_las({"a": 1.0, "c": 2.0})
    with pytest.raises(TreebankMismatch) as info:
        compare_reports(a, b)
    assert info.value.only_base == {"b"} and info.value.only_ours == {"c"}
