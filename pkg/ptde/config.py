# Experiment configuration models
# A single JSON document, validated by pydantic before any run starts

from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import orjson
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .exceptions import ConfigError
from .utils import canonical_json, sha256_hex


class Variant(str, Enum):
    """Stage-1 algorithm variants: mixer/learner family x message source."""

    QMIX = "qmix"
    QMIX_UGI = "qmix_ugi"
    QMIX_SGI = "qmix_sgi"
    VDN = "vdn"
    VDN_UGI = "vdn_ugi"
    VDN_SGI = "vdn_sgi"
    AC = "ac"
    AC_UGI = "ac_ugi"
    AC_SGI = "ac_sgi"

    @property
    def family(self) -> str:
        """'qmix', 'vdn' or 'ac'."""
        return self.value.split("_")[0]

    @property
    def message(self) -> str:
        """'none', 'giu' or 'gis'."""
        if self.value.endswith("_ugi"):
            return "giu"
        if self.value.endswith("_sgi"):
            return "gis"
        return "none"

    @property
    def is_actor_critic(self) -> bool:
        return self.family == "ac"

    @property
    def distillable(self) -> bool:
        return self.message == "gis"


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvConfig(_Section):
    name: Literal["secret_slots", "grid_capture"] = Field(default="secret_slots", description="Environment to run")
    n_agents: int = Field(default=3, ge=1, description="Number of agents n")
    n_actions: int = Field(default=5, ge=1, description="Actions per agent |U|")
    episode_limit: Optional[int] = Field(default=None, ge=1, description="Step limit; per-env default when unset")
    gamma: float = Field(default=0.99, ge=0.0, lt=1.0, description="Discount factor")
    noise_dims: int = Field(default=10, ge=0, description="SecretSlots: uniform noise dims appended to the state")
    obs_dim: int = Field(default=4, ge=1, description="SecretSlots: width of the all-zero observation")
    grid_size: int = Field(default=7, ge=3, description="GridCapture: side length of the square grid")

    @model_validator(mode="after")
    def check_env(self) -> "EnvConfig":
        if self.name == "grid_capture" and self.n_actions != 5:
            raise ValueError("grid_capture has exactly 5 actions (stay, up, down, left, right)")
        if self.name == "grid_capture" and self.n_agents > 4:
            raise ValueError("grid_capture allows at most 4 agents; a cell has only 4 neighbours to surround")
        if self.name == "secret_slots" and self.episode_limit not in (None, 1):
            raise ValueError("secret_slots is a single-step game; episode_limit must be 1")
        return self


class NetConfig(_Section):
    d_h: int = Field(default=64, gt=0, description="Agent GRU hidden width")
    d_g: int = Field(default=32, gt=0, description="Width of the per-agent state encoding")
    d_z: int = Field(default=8, gt=0, description="Message width")
    sigma_min: float = Field(default=0.05, gt=0.0, description="Floor on the message standard deviation")
    mix_embed: int = Field(default=32, gt=0, description="QMIX mixing hidden width")
    hyper_hidden: int = Field(default=64, gt=0, description="Hidden width of the per-agent weight generator")
    student_hidden: int = Field(default=64, gt=0, description="Student hidden width")
    critic_hidden: int = Field(default=64, gt=0, description="Centralized critic hidden width")
    sample_at_eval: bool = Field(default=False, description="Sample z at evaluation instead of using the mean")


class LearnerConfig(_Section):
    lr: float = Field(default=5e-4, gt=0.0)
    buffer_size: int = Field(default=5000, gt=0, description="Replay capacity in episodes")
    batch_size: int = Field(default=32, gt=0, description="Minibatch size in episodes")
    target_update_interval: int = Field(default=200, gt=0, description="Episodes between target refreshes")
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_finish: float = Field(default=0.05, ge=0.0, le=1.0)
    epsilon_anneal_steps: int = Field(default=50_000, gt=0, description="Environment steps of linear annealing")
    total_episodes: int = Field(default=30_000, ge=0)
    n_parallel: int = Field(default=8, gt=0, description="Episodes collected per rollout")
    grad_norm_clip: Optional[float] = Field(default=10.0, gt=0.0)
    eval_interval: int = Field(default=1000, gt=0, description="Episodes between metric rows")
    eval_episodes: int = Field(default=200, gt=0)
    clip_ratio: float = Field(default=0.2, gt=0.0)
    gae_lambda: float = Field(default=0.95, ge=0.0, le=1.0)
    entropy_coef: float = Field(default=0.01, ge=0.0)
    value_coef: float = Field(default=0.5, ge=0.0)
    ppo_epochs: int = Field(default=4, gt=0)


class DistillConfig(_Section):
    episodes: int = Field(default=100, gt=0, description="Greedy teacher episodes recorded offline")
    epochs: int = Field(default=20_000, ge=0, description="Minibatch updates of the student")
    max_epochs: int = Field(default=500_000, gt=0, description="Upper bound on epochs")
    batch_size: int = Field(default=256, gt=0)
    lr: float = Field(default=5e-4, gt=0.0)
    holdout_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    eval_every: int = Field(default=100, gt=0, description="Epochs between held-out evaluations")
    patience: int = Field(default=20, gt=0, description="Held-out evaluations without improvement before stopping")

    @model_validator(mode="after")
    def check_epochs(self) -> "DistillConfig":
        if self.epochs > self.max_epochs:
            raise ValueError(f"epochs ({self.epochs}) exceeds max_epochs ({self.max_epochs})")
        return self


class ExperimentConfig(_Section):
    """
    Complete description of one experiment.

    ``stage``, ``seeds``, ``variants`` and ``output_dir`` select which work to do and where;
    every other field influences results and therefore the config hash.
    """

    env: EnvConfig = Field(default_factory=EnvConfig)
    variant: Variant = Variant.QMIX_SGI
    variants: Optional[List[Variant]] = Field(
        default=None, min_length=1, description="Variants the pipeline runs in turn; overrides variant"
    )
    stage: Literal["train1", "train2", "eval"] = "train1"
    nets: NetConfig = Field(default_factory=NetConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    output_dir: str = "runs"

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, value: List[int]) -> List[int]:
        if len(set(value)) != len(value):
            raise ValueError("seeds must be unique")
        if any(s < 0 for s in value):
            raise ValueError("seeds must be non-negative")
        return value

    @field_validator("variants")
    @classmethod
    def validate_variants(cls, value: Optional[List[Variant]]) -> Optional[List[Variant]]:
        if value is not None and len(set(value)) != len(value):
            raise ValueError("variants must be unique")
        return value

    def expand_variants(self) -> List["ExperimentConfig"]:
        """One single-variant config per entry of ``variants``, or just this config."""
        if self.variants is None:
            return [self]
        return [self.with_updates(variant=v.value, variants=None) for v in self.variants]

    def with_updates(self, **changes: Any) -> "ExperimentConfig":
        return parse_config({**self.to_dict(), **changes})

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


HASH_EXCLUDED = {"stage", "seeds", "output_dir", "variants"}


def _format_errors(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        path = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{path}: {item['msg']}")
    return "; ".join(lines)


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a config mapping.

    Raises:
        ConfigError: With one 'field.path: message' entry per violation
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {_format_errors(e)}") from e


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except orjson.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {path}: {e}") from e
    return parse_config(data)


def dump_config(config: ExperimentConfig) -> bytes:
    return orjson.dumps(config.to_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 over every result-relevant field, in canonical JSON."""
    return sha256_hex(canonical_json(config.model_dump(mode="json", exclude=HASH_EXCLUDED)))
