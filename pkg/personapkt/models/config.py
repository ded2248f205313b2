"""
Configuration models for the backbone, prefixes and training jobs.

Every model validates itself in ``__post_init__`` and serializes through orjson so that
configurations can be recorded verbatim in prefix sidecars and run outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from mashumaro.config import BaseConfig
from mashumaro.mixins.orjson import DataClassORJSONMixin

from .types import InitMode, OptimizerRule, Part, StrategyKind


def _require_positive(**values: float) -> None:
    for name, value in values.items():
        if value <= 0:
            raise ValueError(f"{name} must be positive, got {value}")


def _require_non_negative(**values: float) -> None:
    for name, value in values.items():
        if value < 0:
            raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class BackboneConfig(DataClassORJSONMixin):
    """Architecture of the decoder-only backbone."""

    vocab_size: int
    d_model: int = 64
    n_layers: int = 4
    n_heads: int = 4
    d_ffn: int = 256
    max_context: int = 128

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_positive(
            vocab_size=self.vocab_size,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ffn=self.d_ffn,
            max_context=self.max_context,
        )
        if self.d_model % self.n_heads:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})"
            )

    @property
    def head_dim(self) -> int:
        """Width of one attention head."""
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class PrefixConfig(DataClassORJSONMixin):
    """Shape and initialization of a reparametrized prefix."""

    prefix_len: int = 8
    """Number of virtual-token positions L."""
    k_reparam: int = 512
    """Hidden width of the reparametrization MLP."""
    init_std: float = 0.02
    """Standard deviation of the random initialization."""

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_non_negative(prefix_len=self.prefix_len)
        _require_positive(k_reparam=self.k_reparam, init_std=self.init_std)


@dataclass(frozen=True)
class PretrainConfig(DataClassORJSONMixin):
    """Full-model training of the backbone (pretraining and the fine-tuning baseline)."""

    epochs: int = 3
    lr: float = 3e-3
    batch_size: int = 8
    warmup_steps: int = 0
    weight_decay: float = 0.01
    max_grad_norm: float | None = 1.0
    init_std: float = 0.02
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_non_negative(epochs=self.epochs, warmup_steps=self.warmup_steps)
        _require_positive(lr=self.lr, batch_size=self.batch_size, init_std=self.init_std)


@dataclass(frozen=True)
class PersonaTrainConfig(DataClassORJSONMixin):
    """Prefix training with early stopping on a validation split."""

    lr: float = 5e-3
    batch_size: int = 2
    max_epochs: int = 15
    patience: int = 3
    seed: int = 0
    optimizer: OptimizerRule = OptimizerRule.ADAMW
    weight_decay: float = 0.0
    warmup_steps: int = 0
    max_grad_norm: float | None = None

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_positive(lr=self.lr, batch_size=self.batch_size)
        _require_non_negative(
            max_epochs=self.max_epochs, patience=self.patience, warmup_steps=self.warmup_steps
        )

    class Config(BaseConfig):
        """Config for serializing."""

        omit_none = True


@dataclass(frozen=True)
class SourceTrainConfig(PersonaTrainConfig):
    """Source-prefix training for the base and temperature strategies."""

    max_epochs: int = 50
    batch_size: int = 4


@dataclass(frozen=True)
class MixConfig(DataClassORJSONMixin):
    """Temperature-scaled mixing."""

    temperature: float = 10.0

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_positive(temperature=self.temperature)


@dataclass(frozen=True)
class MetaTrainConfig(DataClassORJSONMixin):
    """PPReptile hyperparameters."""

    alpha: float = 1e-4
    """Inner learning rate."""
    beta: float = 3e-5
    """Outer learning rate."""
    k_inner: int = 1
    """Inner optimizer steps per sampled persona."""
    n_personas: int | None = None
    """Personas per meta-iteration; defaults to ``b_out``."""
    b_in: int = 2
    """Dialogues per inner step."""
    b_out: int = 4
    """Outer batch size in personas."""
    inner_optimizer: OptimizerRule = OptimizerRule.SGD
    iterations: int = 200
    eval_every: int = 0
    """Compute Part A validation loss every this many iterations (0 disables)."""
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_positive(alpha=self.alpha, beta=self.beta, b_in=self.b_in, b_out=self.b_out)
        _require_non_negative(
            k_inner=self.k_inner, iterations=self.iterations, eval_every=self.eval_every
        )
        if self.n_personas is not None:
            _require_positive(n_personas=self.n_personas)

    @property
    def n(self) -> int:
        """Effective number of personas per meta-iteration."""
        return self.n_personas if self.n_personas is not None else self.b_out

    class Config(BaseConfig):
        """Config for serializing."""

        omit_none = True


@dataclass(frozen=True)
class SourceStrategy(DataClassORJSONMixin):
    """Source-prefix strategy with its strategy-specific settings."""

    kind: StrategyKind = StrategyKind.BASE
    temperature: float | None = None
    meta: MetaTrainConfig | None = None

    def __post_init__(self) -> None:
        """Validate field values."""
        if self.kind is StrategyKind.TEMPERATURE:
            if self.temperature is None:
                raise ValueError("temperature strategy requires a temperature")
            _require_positive(temperature=self.temperature)
        if self.kind is StrategyKind.PPREPTILE and self.meta is None:
            raise ValueError("ppreptile strategy requires a meta-training config")

    class Config(BaseConfig):
        """Config for serializing."""

        omit_none = True


@dataclass(frozen=True)
class SyntheticSpec(DataClassORJSONMixin):
    """Recipe for a synthetic persona corpus."""

    slots: dict[str, list[str]] = field(
        default_factory=lambda: {
            "color": ["red", "blue", "green", "purple"],
            "pet": ["dog", "cat", "bird", "fish"],
            "hobby": ["hiking", "reading", "cooking", "painting"],
            "food": ["pizza", "pasta", "sushi", "tacos"],
        }
    )
    """Trait slots and their value vocabularies; values must be distinct across slots."""
    personas_a: int = 60
    personas_b: int = 20
    personas_c: int = 10
    regular_dialogues: tuple[int, int] = (6, 10)
    """Inclusive range of dialogues per regular persona."""
    few_shot_dialogues: int = 4
    turns: tuple[int, int] = (4, 8)
    """Inclusive range of turns per dialogue (rounded up to an even count)."""
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate field values."""
        if not self.slots:
            raise ValueError("at least one trait slot is required")
        seen: set[str] = set()
        for slot, values in self.slots.items():
            if not values:
                raise ValueError(f"slot {slot!r} has an empty value vocabulary")
            for value in values:
                if value in seen or " " in value:
                    raise ValueError(f"slot value {value!r} must be a unique single word")
                seen.add(value)
        _require_non_negative(
            personas_a=self.personas_a, personas_b=self.personas_b, personas_c=self.personas_c
        )
        low, high = self.regular_dialogues
        if not 1 <= low <= high:
            raise ValueError(f"invalid regular_dialogues range {self.regular_dialogues}")
        _require_positive(few_shot_dialogues=self.few_shot_dialogues)
        if not 2 <= self.turns[0] <= self.turns[1]:
            raise ValueError(f"invalid turns range {self.turns}")

    @property
    def total_personas(self) -> int:
        """Number of personas to generate."""
        return self.personas_a + self.personas_b + self.personas_c


@dataclass(frozen=True)
class ExperimentConfig(DataClassORJSONMixin):
    """Everything the end-to-end comparison of settings needs besides the seed."""

    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    d_ffn: int = 64
    max_context: int = 96
    prefix: PrefixConfig = field(default_factory=lambda: PrefixConfig(prefix_len=8, k_reparam=64))
    pretrain: PretrainConfig = field(default_factory=lambda: PretrainConfig(epochs=4))
    finetune: PretrainConfig = field(default_factory=lambda: PretrainConfig(epochs=2, lr=1e-3))
    source: SourceTrainConfig = field(default_factory=lambda: SourceTrainConfig(max_epochs=8))
    persona: PersonaTrainConfig = field(
        default_factory=lambda: PersonaTrainConfig(
            lr=3e-2, batch_size=1, max_epochs=12, patience=4, warmup_steps=4
        )
    )
    """One dialogue per step; the patience covers noisy single-dialogue validation losses."""
    temperature: float = 10.0
    meta: MetaTrainConfig = field(
        default_factory=lambda: MetaTrainConfig(alpha=1e-2, beta=0.5, k_inner=5, iterations=80)
    )
    """Desk-tuned PPReptile rates; the published rates assume a far larger backbone."""
    beam: int = 5
    max_len: int = 16
    jobs: int = 1
    curve_personas: int = 5
    """Part B personas whose adaptation curves are compared (0 disables)."""
    curve_threshold: float = 1.0
    """Mean C score an adaptation curve must reach."""

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_positive(temperature=self.temperature, beam=self.beam, max_len=self.max_len)
        _require_non_negative(curve_personas=self.curve_personas)

    def backbone(self, vocab_size: int) -> BackboneConfig:
        """Backbone architecture for a vocabulary."""
        return BackboneConfig(
            vocab_size=vocab_size,
            d_model=self.d_model,
            n_layers=self.n_layers,
            n_heads=self.n_heads,
            d_ffn=self.d_ffn,
            max_context=self.max_context,
        )


@dataclass(frozen=True)
class RunConfig(DataClassORJSONMixin):
    """
    Settings of one command-line invocation.

    Field names are the flag names with dashes turned into underscores. Optional training
    fields left as None fall back to the defaults of the job's own config model.
    """

    corpus: str | None = None
    manifest: str | None = None
    """Split manifest; defaults to the corpus path with a ``.split.json`` suffix."""
    out: str | None = None
    backbone: str | None = None
    store: str | None = None
    report_out: str | None = None
    workdir: str | None = None
    experiment: str | None = None
    """JSON file with an ``ExperimentConfig`` for ``reproduce``."""
    personachat: list[str] = field(default_factory=list)
    personas_a: int | None = None
    personas_b: int | None = None
    personas_c: int | None = None
    n_target: int = 20
    n_source: int | None = None
    few_shot_threshold: int = 6
    layers: int | None = None
    dmodel: int | None = None
    heads: int | None = None
    ffn: int | None = None
    max_context: int | None = None
    backbone_params: int | None = None
    personas: int | None = None
    """Personalized prefixes counted in the store total of ``params``."""
    epochs: int | None = None
    lr: float | None = None
    batch_size: int | None = None
    max_epochs: int | None = None
    patience: int | None = None
    warmup_steps: int | None = None
    strategy: StrategyKind = StrategyKind.BASE
    temperature: float = 10.0
    alpha: float = 1e-4
    beta: float = 3e-5
    k_inner: int = 1
    n_personas: int | None = None
    b_in: int = 2
    b_out: int = 4
    iterations: int = 200
    inner_optimizer: OptimizerRule = OptimizerRule.SGD
    prefix_len: int = 8
    k_reparam: int = 512
    init: InitMode = InitMode.SOURCE
    persona: str | None = None
    all_part: Part | None = None
    part: Part | None = None
    text: str | None = None
    setting: str | None = None
    judge_command: str | None = None
    beam: int = 5
    max_len: int = 24
    jobs: int = 1
    seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2])

    def __post_init__(self) -> None:
        """Validate field values."""
        _require_positive(
            beam=self.beam,
            max_len=self.max_len,
            jobs=self.jobs,
            temperature=self.temperature,
            few_shot_threshold=self.few_shot_threshold,
        )
        _require_non_negative(prefix_len=self.prefix_len, n_target=self.n_target)

    class Config(BaseConfig):
        """Config for serializing."""

        omit_none = True
