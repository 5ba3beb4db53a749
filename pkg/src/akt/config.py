"""Flat key=value experiment configuration.

One line per `key = value`; `#` starts a comment; unknown keys are rejected
with the nearest valid key named. render_config writes every effective value
back out in schema order, so render(parse(t)) parses to an equal config and
the config hash changes exactly when an effective value changes.
"""

import difflib
import hashlib
from dataclasses import dataclass, fields

from akt.errors import ConfigError
from akt.networks import MLPSpec
from akt.trainer import TrainerConfig

TASKS = ("synth", "idx_pair", "custom")
METHODS = ("akt", "scratch", "static_pseudo", "finetune", "joint")
ALIGNMENTS = ("adversarial", "mse", "none")
TASK_KINDS = ("multiclass", "multilabel")
SYNTH_FAMILIES = ("gaussian", "glyphs")


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    method: str = "akt"
    seed: int = 0
    epochs: int = 100
    batch_size: int = 96
    lr_m: float = 0.01
    lr_g: float = 0.01
    lr_d: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 0.0005
    lambda_s: float = 1.0
    lambda_di: float = 1.0
    lambda_dg: float = 1.0
    d_updates_per_iter: int = 2
    g_updates_per_iter: int = 1
    lr_decay_factor: float = 0.1
    lr_decay_fraction: float = 0.75
    alignment: str = "adversarial"
    warmup_epochs: int = 0
    hidden_dims: tuple = (256, 128)
    feature_tap: int = -1
    task_kind: str = "multiclass"
    disc_hidden_dims: tuple = (64, 32)
    phase1_epochs: int = -1
    source_epochs: int = -1
    synth_family: str = "gaussian"
    synth_dim: int = 16
    synth_target_classes: int = 4
    synth_source_classes: int = 8
    synth_target_per_class: int = 50
    synth_test_per_class: int = 100
    synth_source_per_class: int = 250
    synth_separation: float = 3.0
    synth_noise: float = 1.0
    glyph_jitter: int = 2
    glyph_noise: float = 35.0
    glyph_dropout: float = 0.15
    target_train_images: str = ""
    target_train_labels: str = ""
    target_test_images: str = ""
    target_test_labels: str = ""
    source_images: str = ""
    source_labels: str = ""
    target_limit: int = 0
    source_limit: int = 0
    output_dir: str = "runs/out"

    def trainer_config(self):
        return TrainerConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr_m=self.lr_m,
            lr_g=self.lr_g,
            lr_d=self.lr_d,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            lambda_s=self.lambda_s,
            lambda_di=self.lambda_di,
            lambda_dg=self.lambda_dg,
            d_updates_per_iter=self.d_updates_per_iter,
            g_updates_per_iter=self.g_updates_per_iter,
            lr_decay_factor=self.lr_decay_factor,
            lr_decay_fraction=self.lr_decay_fraction,
            alignment_mode=self.alignment,
            warmup_epochs=self.warmup_epochs,
            seed=self.seed,
        )

    def mlp_spec(self, input_dim, num_classes):
        return MLPSpec(
            input_dim=input_dim,
            num_classes=num_classes,
            hidden_dims=self.hidden_dims,
            task_kind=self.task_kind,
            feature_tap=self.feature_tap,
        )


_CHOICES = {
    "task": TASKS,
    "method": METHODS,
    "alignment": ALIGNMENTS,
    "task_kind": TASK_KINDS,
    "synth_family": SYNTH_FAMILIES,
}

_FIELDS = {f.name: f for f in fields(ExperimentConfig)}
_ORDER = [f.name for f in fields(ExperimentConfig)]


def _type_name(field):
    return field.type if isinstance(field.type, str) else field.type.__name__


def _parse_value(key, text):
    type_name = _type_name(_FIELDS[key])
    try:
        if type_name == "int":
            return int(text)
        if type_name == "float":
            return float(text)
        if type_name == "tuple":
            return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"value for key {key!r} must be a {type_name}, got {text!r}") from None
    if key in _CHOICES and text not in _CHOICES[key]:
        raise ConfigError(
            f"value for key {key!r} must be one of {', '.join(_CHOICES[key])}, got {text!r}"
        )
    return text


def parse_config(text):
    """Parse key = value lines into a validated ExperimentConfig."""
    values = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line.strip()!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELDS:
            near = difflib.get_close_matches(key, _ORDER, n=1)
            hint = f"; nearest valid key is {near[0]!r}" if near else ""
            raise ConfigError(f"line {lineno}: unknown key {key!r}{hint}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _parse_value(key, value)
    if "task" not in values:
        raise ConfigError("missing required key 'task'")
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg.task == "idx_pair":
        required = [
            "target_train_images",
            "target_train_labels",
            "target_test_images",
            "target_test_labels",
        ]
        if cfg.method in ("akt", "static_pseudo", "finetune", "joint"):
            required.append("source_images")
        if cfg.method in ("finetune", "joint"):
            required.append("source_labels")
        for key in required:
            if not getattr(cfg, key):
                raise ConfigError(
                    f"task=idx_pair with method={cfg.method} requires key {key!r}"
                )
    if cfg.task == "synth":
        for key in ("synth_dim", "synth_target_per_class", "synth_test_per_class"):
            if getattr(cfg, key) < 1:
                raise ConfigError(f"{key} must be >= 1, got {getattr(cfg, key)}")
        if cfg.method != "scratch" and cfg.synth_source_per_class < 1:
            raise ConfigError("synth_source_per_class must be >= 1 for methods using source data")
    # Delegate the numeric hyperparameter ranges to TrainerConfig.
    cfg.trainer_config()


def _render_value(value):
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config(cfg):
    """Canonical text with every effective value, in schema order."""
    lines = [f"{name} = {_render_value(getattr(cfg, name))}" for name in _ORDER]
    return "\n".join(lines) + "\n"


def config_hash(cfg):
    """SHA-256 of the canonical rendering."""
    return hashlib.sha256(render_config(cfg).encode("utf-8")).hexdigest()
