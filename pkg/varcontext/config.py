"""Run configuration: parameter dataclasses and the sectioned config file.

Config file syntax::

    # comment
    [model]
    embedding_dim = 64
    [train]
    iterations = 4000
    [synth]
    object_count = 4, 8
    [run]
    seed = 7
    preset = desk

Layering: dataclass defaults < preset < file values < CLI overrides <
the ``VC_SEED`` environment variable (seed only).
"""
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple
import logging
import os

from varcontext.compute import scaled_decay_interval
from varcontext.core import ModelParams
from varcontext.data import SynthConfig
from varcontext.errors import ConfigError
from varcontext.utils.config_utils import coerce_value, field_types, python_type_to_string

logger = logging.getLogger(__name__)

SUPERVISION = ("supervised", "unsupervised")
GENERATION_MODES = ("plain", "with_generation", "with_generation_pg")
PRESETS = ("desk", "full")


@dataclass(kw_only=True)
class TrainParams:
    """Optimizer schedule, loss assembly and logging cadence."""
    iterations: int = 4000
    base_lr: float = 0.01
    lr_decay: float = 0.1
    decay_every: Optional[int] = None
    momentum: float = 0.95
    weight_decay: float = 5e-4
    decay_biases: bool = False
    entropy_weight: float = 5e-3
    baseline_decay: float = 0.9
    clip_gradients: bool = True
    clip_norm: float = 10.0
    supervision: str = "supervised"
    generation_mode: str = "plain"
    score_with_generation: bool = False
    split: str = "train"
    checkpoint_every: int = 1000
    log_every: int = 100
    accuracy_window: int = 100
    prefetch: bool = False
    show_progress: bool = True

    @property
    def decay_interval(self) -> int:
        """`decay_every`, or the full-scale 120k-of-160k interval rescaled to `iterations`."""
        if self.decay_every is not None:
            return self.decay_every
        return scaled_decay_interval(self.iterations)

    @property
    def mode_label(self) -> str:
        return f"{self.supervision}+{self.generation_mode}"


@dataclass(kw_only=True)
class RunConfig:
    """Everything one command needs: model, training, world, seed and paths."""
    model: ModelParams = field(default_factory=ModelParams)
    train: TrainParams = field(default_factory=TrainParams)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0
    preset: str = "desk"
    data: Optional[str] = None
    out: Optional[str] = None

    @classmethod
    def from_preset(cls, preset: str = "desk") -> "RunConfig":
        if preset == "desk":
            return cls()
        if preset == "full":
            return cls(model=ModelParams.full_scale(), train=TrainParams(iterations=160_000),
                       preset="full")
        raise ConfigError(f"Unknown preset '{preset}'. Expected one of {PRESETS}")

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Apply flat overrides (``None`` values are ignored) to the right section.

        Keys may be prefixed by section (``train.iterations``) or bare when
        the name is unambiguous.
        """
        config = replace(self, model=replace(self.model), train=replace(self.train), synth=replace(self.synth))
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.rpartition(".")
            target = _locate(config, section, name)
            setattr(target, name, value)
        config.normalize()
        return config

    def normalize(self) -> None:
        """Derive implied flags: any generation mode builds the decoder."""
        if self.train.generation_mode != "plain" or self.train.score_with_generation:
            self.model.generation = True

    def problems(self) -> List[Tuple[Tuple[str, ...], str]]:
        """Every contradictory or out-of-range setting, each with the
        ``section.key`` names it involves."""
        t, m = self.train, self.model
        problems: List[Tuple[Tuple[str, ...], str]] = []
        if t.supervision not in SUPERVISION:
            problems.append((("train.supervision",),
                             f"supervision must be one of {SUPERVISION}, got '{t.supervision}'"))
        if t.generation_mode not in GENERATION_MODES:
            problems.append((("train.generation_mode",),
                             f"generation_mode must be one of {GENERATION_MODES}, got '{t.generation_mode}'"))
        if m.generation and m.head != "vc":
            problems.append((("model.generation", "model.head", "train.generation_mode",
                              "train.score_with_generation"),
                             f"generation needs the vc head; '{m.head}' has no context estimate"))
        if t.score_with_generation and m.wo_reg:
            problems.append((("train.score_with_generation", "model.wo_reg"),
                             "score_with_generation conflicts with wo_reg (wo_reg scores s_theta only)"))
        if t.base_lr <= 0 or t.iterations < 0 or (t.decay_every is not None and t.decay_every < 1):
            problems.append((("train.base_lr", "train.iterations", "train.decay_every"),
                             "base_lr must be > 0, iterations >= 0 and decay_every >= 1"))
        if not 0.0 <= m.dropout < 1.0:
            problems.append((("model.dropout",), f"dropout must lie in [0, 1), got {m.dropout}"))
        if m.max_len < 2:
            problems.append((("model.max_len",), "max_len must be at least 2"))
        if min(m.embedding_dim, m.lstm_hidden, m.decoder_hidden, m.visual_dim) < 1:
            problems.append((("model.embedding_dim", "model.lstm_hidden", "model.decoder_hidden", "model.visual_dim"),
                             "dimensions must be positive"))
        for keys, message in self.synth.problems():
            problems.append((tuple(f"synth.{k}" for k in keys), message))
        return problems

    def validate(self, key_lines: Optional[Dict[str, int]] = None) -> None:
        """Reject contradictory or out-of-range settings.

        Args:
            key_lines: Config file line of each ``section.key`` that was set
                there; problems report the lines of the keys they involve.

        Raises:
            ConfigError: Listing every problem found.
        """
        problems = self.problems()
        if not problems:
            return
        key_lines = key_lines or {}
        lines = sorted({key_lines[k] for keys, _ in problems for k in keys if k in key_lines})
        raise ConfigError("Invalid configuration: " + "; ".join(m for _, m in problems), lines=lines)


_SECTIONS = {"model": "model", "train": "train", "synth": "synth", "run": None}


def _locate(config: RunConfig, section: str, name: str):
    if section:
        if section not in _SECTIONS:
            raise ConfigError(f"Unknown config section '{section}'")
        target = config if _SECTIONS[section] is None else getattr(config, _SECTIONS[section])
        if name not in field_types(type(target)):
            raise ConfigError(f"Unknown key '{name}' in section [{section}]")
        return target
    owners = [getattr(config, s) for s in ("model", "train", "synth") if name in field_types(type(getattr(config, s)))]
    if name in field_types(RunConfig) and name not in ("model", "train", "synth"):
        owners.append(config)
    if len(owners) != 1:
        raise ConfigError(f"Override key '{name}' is unknown or ambiguous")
    return owners[0]


def parse_config_text(text: str) -> Dict[str, List[Tuple[int, str, str]]]:
    """Group ``key = value`` lines by section, keeping line numbers."""
    sections: Dict[str, List[Tuple[int, str, str]]] = {}
    current: Optional[str] = None
    bad: List[int] = []
    messages: List[str] = []
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].split(";", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip().lower()
            if current not in _SECTIONS:
                bad.append(number)
                messages.append(f"line {number}: unknown section [{current}]")
            continue
        if "=" not in stripped:
            bad.append(number)
            messages.append(f"line {number}: expected 'key = value'")
            continue
        if current is None:
            bad.append(number)
            messages.append(f"line {number}: key outside any section")
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        sections.setdefault(current, []).append((number, key, value))
    if bad:
        raise ConfigError("Config file errors:\n  " + "\n  ".join(messages), lines=bad)
    return sections


def load_config(path: Optional[Path] = None, **overrides: Any) -> RunConfig:
    """Read a config file (optional) and apply overrides and ``VC_SEED``."""
    sections: Dict[str, List[Tuple[int, str, str]]] = {}
    if path is not None:
        sections = parse_config_text(Path(path).read_text(encoding="utf-8"))
    preset = "desk"
    for number, key, value in sections.get("run", []):
        if key == "preset":
            preset = value
    config = RunConfig.from_preset(preset)

    bad: List[int] = []
    messages: List[str] = []
    for section, entries in sections.items():
        target = config if _SECTIONS.get(section) is None else getattr(config, _SECTIONS[section])
        types = field_types(type(target))
        for number, key, value in entries:
            if key not in types or key in ("model", "train", "synth"):
                bad.append(number)
                messages.append(f"line {number}: unknown key '{key}' in [{section}]")
                continue
            try:
                setattr(target, key, coerce_value(value, types[key]))
            except ValueError as exc:
                bad.append(number)
                messages.append(f"line {number}: '{key}' expects {python_type_to_string(types[key])} ({exc})")
    if bad:
        raise ConfigError("Config file errors:\n  " + "\n  ".join(messages), lines=bad)

    config.normalize()
    config = config.with_overrides(**overrides)
    env_seed = os.environ.get("VC_SEED")
    if env_seed is not None:
        try:
            config.seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"VC_SEED must be an integer, got '{env_seed}'") from exc
        logger.info("Seed overridden by VC_SEED=%s", env_seed)
    # Lines of keys the file set and no command line flag replaced.
    key_lines = {f"{section}.{key}": number for section, entries in sections.items() for number, key, _ in entries}
    for key, value in overrides.items():
        if value is not None:
            key_lines.pop(key, None)
    config.validate(key_lines)
    return config
