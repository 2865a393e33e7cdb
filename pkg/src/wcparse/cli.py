"""Command-line entry point: ``wcparse train|eval|compare|synth``.

Exit codes: 0 success, 1 I/O failure, 2 validation failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, read_sections
from .conllu import ConlluParseError, Treebank, TreeValidationError, build_vocab, read_conllu, write_conllu
from .curriculum import format_history, train_loop
from .evaluation import EvalReport, TreebankMismatch, compare_reports, load_report, zero_shot_eval
from .model import ModelConfig, OptimizerState, init_params, load_checkpoint, save_checkpoint

log = logging.getLogger("wcparse")

EXIT_IO = 1
EXIT_INVALID = 2


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _source_version() -> str:
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).parent,
            capture_output=True,
            text=True,
            timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"wcparse {__version__}" + (f" ({rev})" if rev else "")


def _write_atomic(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_treebanks(items, split: str) -> list[Treebank]:
    out = []
    for task, path in items:
        try:
            out.append(read_conllu(path, task, split))
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from None
        except (ConlluParseError, TreeValidationError) as exc:
            raise CliError(EXIT_INVALID, f"{path}: {exc}") from None
    return out


def _load_run_config(path, overrides) -> RunConfig:
    try:
        return load_config(path, overrides)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc}") from None
    except ConfigError as exc:
        raise CliError(EXIT_INVALID, f"invalid config: {exc}") from None


def _write_report(report: EvalReport, out_dir: Path, stem: str = "report", plot: bool = True) -> dict[str, str]:
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv, js = out_dir / f"{stem}.tsv", out_dir / f"{stem}.json"
    tsv.write_text(report.to_tsv(), encoding="utf-8")
    js.write_text(report.to_json(), encoding="utf-8")
    files = {"tsv": str(tsv), "json": str(js)}
    if plot:
        from .plots import plot_report

        files["figure"] = str(plot_report(report, out_dir / f"{stem}.png"))
    return files


def run_training(cfg: RunConfig, plot: bool = True) -> dict:
    """Train, evaluate on the test list (if any) and write every artifact; returns the manifest."""
    started = datetime.now(timezone.utc).isoformat()
    train = _read_treebanks(cfg.train, "train")
    test = _read_treebanks(cfg.test, "test")
    if not train:
        raise CliError(EXIT_INVALID, "invalid config: train: no training treebanks")
    for tb in train:
        if not tb.sentences:
            raise CliError(EXIT_INVALID, f"invalid config: train.{tb.task_id}: treebank is empty")
    vocab = build_vocab(train)
    params = init_params(cfg.model, vocab, np.random.default_rng(np.random.SeedSequence([cfg.seed, 0])))
    opt = OptimizerState(cfg.optimizer.lr, cfg.optimizer.beta1, cfg.optimizer.beta2, cfg.optimizer.eps)
    result = train_loop(cfg.curriculum, train, params, opt, vocab, log_every=max(1, cfg.curriculum.steps // 10))

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    history_path = out / "history.tsv"
    history_path.write_text(format_history(result.history), encoding="utf-8")
    ckpt = out / "model.npz"
    save_checkpoint(ckpt, result.params, vocab, cfg.model, {"train_task_ids": result.task_ids, "seed": cfg.seed})

    tail = result.history[-min(50, len(result.history)) :]
    metrics: dict = {"steps": len(result.history), "final_loss": float(np.mean([r.loss for r in tail]))}
    files = {"history": str(history_path), "checkpoint": str(ckpt)}
    if plot:
        from .plots import plot_history

        files["history_figure"] = str(plot_history(result.history, result.task_ids, out / "history.png"))
    if test:
        report = zero_shot_eval(result.params, test, vocab, result.task_ids)
        files.update({f"report_{k}": v for k, v in _write_report(report, out, plot=plot).items()})
        metrics["macro_average_las"] = report.macro_average_las
        metrics["macro_average_uas"] = report.macro_average_uas
        metrics["per_treebank_las"] = {k: s.las for k, s in report.per_treebank.items()}

    manifest = {
        "config": cfg.to_dict(),
        "version": _source_version(),
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "metrics": metrics,
        "history": files["history"],
        "checkpoint": files["checkpoint"],
        "files": files,
    }
    _write_atomic(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return manifest


def cmd_train(args) -> int:
    overrides = list(args.set or [])
    for flag, key in (
        ("seed", "run.seed"),
        ("steps", "curriculum.steps"),
        ("phi", "curriculum.phi"),
        ("sampler", "curriculum.sampler"),
        ("output_dir", "run.output_dir"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides.append(f"{key}={value}")
    cfg = _load_run_config(args.config, overrides)
    manifest = run_training(cfg, plot=not args.no_plots)
    m = manifest["metrics"]
    print(f"trained {m['steps']} steps, final loss {m['final_loss']:.4f}")
    if "macro_average_las" in m:
        print(f"zero-shot macro LAS {m['macro_average_las']:.2f}  UAS {m['macro_average_uas']:.2f}")
    print(f"outputs in {cfg.output_dir}")
    return 0


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise CliError(EXIT_IO, f"checkpoint not found: {ckpt}")
    try:
        params, vocab, _, extra = load_checkpoint(ckpt)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(EXIT_IO, f"cannot load checkpoint {ckpt}: {exc}") from None
    try:
        sections = read_sections(args.test_config)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {args.test_config}: {exc}") from None
    base = Path(args.test_config).parent
    items = []
    for task, p in sections.get("test", {}).items():
        path = Path(str(p)).expanduser()
        items.append((task, path if path.is_absolute() else base / path))
    if not items:
        raise CliError(EXIT_INVALID, "invalid config: test: the test list is empty")
    missing = [f"test.{t}" for t, p in items if not p.is_file()]
    if missing:
        raise CliError(EXIT_INVALID, f"invalid config: file not found for {', '.join(missing)}")
    train_ids = extra.get("train_task_ids", [])
    overlap = sorted({t for t, _ in items} & set(train_ids))
    if overlap:
        raise CliError(EXIT_INVALID, f"invalid config: test: task ids seen in training: {', '.join(overlap)}")
    test = _read_treebanks(items, "test")
    report = zero_shot_eval(params, test, vocab, train_ids)
    out = Path(args.out) if args.out else ckpt.parent
    files = _write_report(report, out, stem=args.stem, plot=not args.no_plots)
    print(report.to_tsv(), end="")
    print(f"wrote {files['tsv']} and {files['json']}")
    return 0


def cmd_compare(args) -> int:
    try:
        base, ours = load_report(args.report_a), load_report(args.report_b)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read report: {exc}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_INVALID, f"malformed report: {exc}") from None
    try:
        comparison = compare_reports(base, ours, args.resamples, args.seed)
    except TreebankMismatch as exc:
        raise CliError(EXIT_INVALID, f"reports cover different treebanks: {exc}") from None
    table = comparison.to_tsv()
    print(table, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.tsv").write_text(table, encoding="utf-8")
        if not args.no_plots:
            from .plots import plot_comparison

            plot_comparison(comparison, out / "comparison.png")
    return 0


def cmd_synth(args) -> int:
    """Write a skewed toy benchmark and a ready-to-run config."""
    from .synthetic import skewed_benchmark

    out = Path(args.out)
    (out / "data").mkdir(parents=True, exist_ok=True)
    train, test = skewed_benchmark(args.seed)
    for tb in train + test:
        write_conllu(out / "data" / f"{tb.task_id}-{tb.split}.conllu", tb.sentences)
    d = ModelConfig()
    lines = [
        "[run]",
        "name = skewed-toy",
        f"seed = {args.seed}",
        "output_dir = runs/curriculum",
        "",
        "[train]",
        *(f"{tb.task_id} = data/{tb.task_id}-train.conllu" for tb in train),
        "",
        "[test]",
        *(f"{tb.task_id} = data/{tb.task_id}-test.conllu" for tb in test),
        "",
        "[curriculum]",
        "sampler = curriculum",
        "phi = 0.5",
        "steps = 300",
        "batch_size = 16",
        "",
        "[model]",
        f"word_dim = {d.word_dim}",
        f"upos_dim = {d.upos_dim}",
        f"hidden_dim = {d.hidden_dim}",
        f"arc_dim = {d.arc_dim}",
        "",
    ]
    (out / "run.ini").write_text("\n".join(lines), encoding="utf-8")
    print(f"wrote {len(train)} training and {len(test)} test treebanks plus {out / 'run.ini'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wcparse", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a parser from a run config")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config setting")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--phi", type=float)
    p.add_argument("--sampler")
    p.add_argument("--output-dir", dest="output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="zero-shot evaluation of a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("test_config")
    p.add_argument("--out", help="output directory (default: checkpoint directory)")
    p.add_argument("--stem", default="report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare two evaluation reports (base first)")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--resamples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for comparison.tsv and comparison.png")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="write a synthetic skewed benchmark")
    p.add_argument("out")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
