"""Run configuration: INI files with sections, named training-sample presets.

A config file looks like::

    [run]
    name = rom+eu
    seed = 1
    output_dir = runs/rom_eu
    sample = rom+eu          ; optional preset, resolved against [treebanks]

    [treebanks]              ; pool of task_id = path used by presets
    fr_gsd = data/fr_gsd-train.conllu
    ...

    [train]                  ; explicit task_id = path list (when no preset)
    [test]
    br_keb = data/br_keb-test.conllu

    [curriculum]
    sampler = curriculum
    phi = 0.5

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .curriculum import SAMPLERS, CurriculumConfig
from .model import ModelConfig

# training samples: group structure of typologically homogeneous and skewed
# samples; file paths come from the user's [treebanks] section
ROMANCE = ("fr_gsd", "it_isdt", "pt_gsd", "ro_rrt", "es_ancora")
SAMPLE_PRESETS: dict[str, tuple[str, ...]] = {
    "germanic": (
        "af_afribooms",
        "da_ddt",
        "nl_alpino",
        "en_ewt",
        "de_hdt",
        "got_proiel",
        "is_icepahc",
        "no_bokmaal",
        "sv_talbanken",
    ),
    "slavic": ("cs_pdt", "cu_proiel", "orv_torot", "pl_lfg", "ru_syntagrus", "sr_set", "sk_snk", "uk_iu"),
    "romance": ROMANCE,
    "rom+eu": ROMANCE + ("eu_bdt",),
    "rom+ar": ROMANCE + ("ar_padt",),
    "rom+tr": ROMANCE + ("tr_imst",),
    "rom+zh": ROMANCE + ("zh_gsd",),
    "13lang": (
        "ar_padt",
        "eu_bdt",
        "zh_gsd",
        "en_ewt",
        "fi_tdt",
        "he_htb",
        "hi_hdtb",
        "it_isdt",
        "ja_gsd",
        "ko_gsd",
        "ru_syntagrus",
        "sv_talbanken",
        "tr_imst",
    ),
}


class ConfigError(ValueError):
    """Invalid run configuration; ``field`` names the offending setting."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class RunConfig:
    name: str
    seed: int
    output_dir: Path
    train: list[tuple[str, Path]] = field(default_factory=list)
    test: list[tuple[str, Path]] = field(default_factory=list)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    sample: str | None = None

    def to_dict(self) -> dict[str, Any]:
        """Fully resolved settings in the same section layout as the INI format."""
        cur = asdict(self.curriculum)
        cur.pop("seed")
        run = {"name": self.name, "seed": self.seed, "output_dir": str(self.output_dir)}
        if self.sample is not None:
            run["sample"] = self.sample
        return {
            "run": run,
            "train": {t: str(p) for t, p in self.train},
            "test": {t: str(p) for t, p in self.test},
            "curriculum": cur,
            "model": asdict(self.model),
            "optimizer": asdict(self.optimizer),
        }


_TYPES = {
    "curriculum": {f.name: f.type for f in fields(CurriculumConfig)},
    "model": {f.name: f.type for f in fields(ModelConfig)},
    "optimizer": {f.name: f.type for f in fields(OptimizerConfig)},
}


def _coerce(section: str, key: str, raw: Any) -> Any:
    kind = _TYPES[section].get(key)
    name = f"{section}.{key}"
    if kind is None:
        raise ConfigError(name, "unknown setting")
    if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
        if "None" in str(kind):
            return None
        raise ConfigError(name, "a value is required")
    if kind == "str":
        return str(raw).strip()
    try:
        if "int" in str(kind):
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return float(raw)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot parse {raw!r} as {kind}") from None


def _paths(section: Mapping[str, Any], base: Path) -> list[tuple[str, Path]]:
    out = []
    for task, p in section.items():
        path = Path(str(p)).expanduser()
        out.append((task, path if path.is_absolute() else (base / path)))
    return out


def config_from_dict(sections: Mapping[str, Mapping[str, Any]], base: Path = Path("."), check_files: bool = True) -> RunConfig:
    run = dict(sections.get("run", {}))
    for key in run:
        if key not in ("name", "seed", "output_dir", "sample"):
            raise ConfigError(f"run.{key}", "unknown setting")
    if "seed" not in run or str(run["seed"]).strip() == "":
        raise ConfigError("run.seed", "a seed is mandatory")
    try:
        seed = int(run["seed"])
    except ValueError:
        raise ConfigError("run.seed", f"not an integer: {run['seed']!r}") from None

    sample = run.get("sample") or None
    train = _paths(sections.get("train", {}), base)
    if sample in SAMPLE_PRESETS and not train:
        pool = dict(_paths(sections.get("treebanks", {}), base))
        missing = [t for t in SAMPLE_PRESETS[sample] if t not in pool]
        if missing:
            raise ConfigError("treebanks", f"sample {sample!r} needs files for: {', '.join(missing)}")
        train = [(t, pool[t]) for t in SAMPLE_PRESETS[sample]]
    elif sample is not None and not train:
        raise ConfigError("run.sample", f"unknown sample preset {sample!r}; known: {', '.join(SAMPLE_PRESETS)}")
    test = _paths(sections.get("test", {}), base)

    overlap = sorted({t for t, _ in train} & {t for t, _ in test})
    if overlap:
        raise ConfigError("test", f"task ids used for both training and testing: {', '.join(overlap)}")
    if check_files:
        for section, items in (("train", train), ("test", test)):
            for task, path in items:
                if not path.is_file():
                    raise ConfigError(f"{section}.{task}", f"file not found: {path}")

    cur_raw = dict(sections.get("curriculum", {}))
    sampler = str(cur_raw.get("sampler", "curriculum")).strip()
    if sampler not in SAMPLERS:
        raise ConfigError("curriculum.sampler", f"unknown sampler {sampler!r}; expected one of {', '.join(SAMPLERS)}")
    cur = {k: _coerce("curriculum", k, v) for k, v in cur_raw.items()}
    cur.pop("seed", None)
    if not 0.0 <= cur.get("phi", 0.5) <= 1.0:
        raise ConfigError("curriculum.phi", "phi must lie in [0, 1]")
    try:
        curriculum = CurriculumConfig(seed=seed, **cur)
    except ValueError as exc:
        raise ConfigError("curriculum", str(exc)) from None
    model = ModelConfig(**{k: _coerce("model", k, v) for k, v in sections.get("model", {}).items()})
    optimizer = OptimizerConfig(**{k: _coerce("optimizer", k, v) for k, v in sections.get("optimizer", {}).items()})
    for name, value in asdict(model).items():
        if value < (0 if name == "window" else 1):
            raise ConfigError(f"model.{name}", "out of range")
    if optimizer.lr <= 0:
        raise ConfigError("optimizer.lr", "must be positive")

    out = Path(str(run.get("output_dir", "runs") or "runs")).expanduser()
    return RunConfig(
        name=str(run.get("name", sample or "run")),
        seed=seed,
        output_dir=out if out.is_absolute() else base / out,
        train=train,
        test=test,
        curriculum=curriculum,
        model=model,
        optimizer=optimizer,
        sample=sample,
    )


def read_sections(path: str | Path) -> dict[str, dict[str, Any]]:
    """Raw sections from an INI config or from the ``config`` entry of a run manifest."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        return {k: dict(v) for k, v in doc.get("config", doc).items()}
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # task ids are case-sensitive
    parser.read_string(text, source=str(path))
    return {s: dict(parser[s]) for s in parser.sections()}


def apply_overrides(sections: dict[str, dict[str, Any]], overrides: list[str]) -> dict[str, dict[str, Any]]:
    """Apply ``section.key=value`` overrides."""
    for item in overrides:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(item, "override must look like section.key=value")
        sections.setdefault(section, {})[name] = value.strip()
    return sections


def load_config(path: str | Path, overrides: list[str] | None = None, check_files: bool = True) -> RunConfig:
    path = Path(path)
    sections = apply_overrides(read_sections(path), overrides or [])
    return config_from_dict(sections, path.parent, check_files)
