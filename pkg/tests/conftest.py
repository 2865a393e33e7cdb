import numpy as np
import pytest

from wcparse.conllu import Sentence, Token, Treebank, build_vocab, parse_conllu
from wcparse.model import ModelConfig, init_params
from wcparse.synthetic import HEAD_FINAL, HEAD_INITIAL, SyntheticLanguage

SMALL = ModelConfig(word_dim=4, upos_dim=4, hidden_dim=8, arc_dim=6)

HI = "1\tHi\thi\tINTJ\t_\t_\t0\troot\t_\t_\n2\t!\t!\tPUNCT\t_\t_\t1\tpunct\t_\t_\n"


def sent(*rows):
    """Sentence from (form, upos, head, deprel) tuples."""
    return Sentence(tuple(Token(*r) for r in rows))


@pytest.fixture
def toy_treebank():
    text = (
        "# sent_id = s1\n" + HI + "\n"
        "# sent_id = s2\n"
        "1\tthe\t_\tDET\t_\t_\t2\tdet\t_\t_\n"
        "2\tdog\t_\tNOUN\t_\t_\t3\tnsubj\t_\t_\n"
        "3\tbarks\t_\tVERB\t_\t_\t0\troot\t_\t_\n"
        "4\tloudly\t_\tADV\t_\t_\t3\tadvmod\t_\t_\n"
        "5\t.\t_\tPUNCT\t_\t_\t3\tpunct\t_\t_\n"
    )
    return parse_conllu(text, "en_toy")


@pytest.fixture(scope="session")
def synth_pair():
    a = SyntheticLanguage("lang_a", HEAD_INITIAL).treebank(40, seed=1)
    b = SyntheticLanguage("lang_b", HEAD_FINAL).treebank(40, seed=2)
    return a, b


@pytest.fixture
def small_model(synth_pair):
    vocab = build_vocab(list(synth_pair))
    params = init_params(SMALL, vocab, np.random.default_rng(0))
    return params, vocab


def random_treebank(task_id, n_sent, rng, max_len=5):
    from wcparse.synthetic import random_tree

    labels = ["nsubj", "obj", "det"]
    sents = []
    for _ in range(n_sent):
        n = int(rng.integers(1, max_len + 1))
        heads = random_tree(n, rng)
        sents.append(
            sent(*[(f"w{int(rng.integers(6))}", f"P{int(rng.integers(3))}", h, labels[int(rng.integers(3))]) for h in heads])
        )
    return Treebank(task_id, tuple(sents))


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_acceptance_results", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
