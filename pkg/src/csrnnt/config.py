"""Run configuration: presets, JSON config files, and dotted-path overrides.

Two presets exist: "desk", small enough to train on a laptop CPU in minutes,
and "seame-paper", carrying the published experiment settings (4x512 encoder,
2x512 prediction network, 512 joint units, beam 35, lambda 0.2, N=35).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .decoder import DecodeConfig
from .errors import DataError
from .lm import RescoreConfig
from .synth import SynthConfig


@dataclass
class ModelSettings:
    enc_layers: int = 2
    enc_dim: int = 64
    pred_layers: int = 1
    pred_dim: int = 64
    joint_dim: int = 64
    emb_dim: int = 64
    lid_dim: int = 8
    use_language_constraint: bool = True


@dataclass
class TrainSettings:
    epochs: int = 6
    batch_size: int = 4
    seed: int = 42
    learning_rate: float = 0.002
    dropout: float = 0.2


@dataclass
class RunConfig:
    preset: str = "desk"
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainSettings = field(default_factory=TrainSettings)
    decode: DecodeConfig = field(default_factory=DecodeConfig)
    rescore: RescoreConfig = field(default_factory=RescoreConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    bpe_merges: int = 200
    ngram_order: int = 4
    ngram_discount: float = 0.75
    num_dev: int = 100
    num_test: int = 200

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def make_config(preset: str = "desk") -> RunConfig:
    if preset == "desk":
        return RunConfig()
    if preset == "seame-paper":
        return RunConfig(
            preset="seame-paper",
            model=ModelSettings(enc_layers=4, enc_dim=512, pred_layers=2,
                                pred_dim=512, joint_dim=512, emb_dim=512,
                                lid_dim=8),
            train=TrainSettings(epochs=20, batch_size=8, learning_rate=0.001,
                                dropout=0.2),
            decode=DecodeConfig(beam_size=35, lambda_mode="fixed", lam=0.2),
            rescore=RescoreConfig(lm_weight=0.3, length_penalty=0.0, nbest=35),
            bpe_merges=3000,
        )
    raise DataError(f"unknown preset {preset!r}; expected 'desk' or 'seame-paper'")


_SECTIONS = {"model": ModelSettings, "train": TrainSettings,
             "decode": DecodeConfig, "rescore": RescoreConfig,
             "synth": SynthConfig}


def _coerce(current, raw: str):
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise DataError(f"cannot parse boolean from {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


def _apply_tree(config: RunConfig, tree: dict, source: str):
    for key, value in tree.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise DataError(f"{source}: section {key!r} must be an object")
            section = getattr(config, key)
            for sub, subval in value.items():
                if not hasattr(section, sub):
                    raise DataError(f"{source}: unknown key {key}.{sub}")
                setattr(section, sub, subval)
            section.__post_init__() if hasattr(section, "__post_init__") else None
        elif hasattr(config, key):
            setattr(config, key, value)
        else:
            raise DataError(f"{source}: unknown config key {key!r}")


def load_config(path=None, preset: str = None, overrides: list[str] = ()) -> RunConfig:
    """Preset defaults, then file values, then --set overrides, in that order."""
    tree = {}
    if path is not None:
        with open(path, encoding="utf-8") as f:
            try:
                tree = json.load(f)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}: invalid JSON config: {e}") from None
    chosen = preset or tree.get("preset", "desk")
    config = make_config(chosen)
    tree.pop("preset", None)
    _apply_tree(config, tree, str(path))
    for item in overrides:
        if "=" not in item:
            raise DataError(f"--set expects section.key=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        parts = dotted.split(".")
        if len(parts) == 1:
            current = getattr(config, parts[0], None)
            if current is None or parts[0] in _SECTIONS:
                raise DataError(f"--set: unknown scalar key {dotted!r}")
            setattr(config, parts[0], _coerce(current, raw))
        elif len(parts) == 2 and parts[0] in _SECTIONS:
            section = getattr(config, parts[0])
            if not hasattr(section, parts[1]):
                raise DataError(f"--set: unknown key {dotted!r}")
            current = getattr(section, parts[1])
            setattr(section, parts[1], _coerce(current, raw))
            if hasattr(section, "__post_init__"):
                section.__post_init__()
        else:
            raise DataError(f"--set: unknown key {dotted!r}")
    return config
