"""
Command-line interface for building corpora, backbones and prefixes and evaluating them.

Settings merge in increasing priority: ``RunConfig`` defaults, the ``PKT_SEED``
environment variable (seed only), a flat ``key=value`` file given with ``--config``, then
the flags on the command line. Exit codes: 0 success, 1 usage error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import asyncio
import contextlib
import dataclasses
import logging
import os
import shlex
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn, TypeVar

from personapkt.backbone import (
    BackboneModel,
    beam_decode,
    finetune_backbone,
    load_backbone,
    pretrain_backbone,
    save_backbone,
)
from personapkt.backbone.checkpoint import write_bytes_atomic
from personapkt.data import (
    PersonaDataset,
    build_manifest,
    convert_personachat,
    dataset_statistics,
    generate_synthetic,
    load_corpus,
    load_manifest,
    responses,
    save_corpus,
    save_manifest,
    trait_slots,
)
from personapkt.evaluation import (
    ConsistencyJudge,
    KeywordJudge,
    SubprocessJudge,
    evaluate_setting,
    param_accounting,
)
from personapkt.exceptions import (
    DataError,
    NotFoundError,
    NumericError,
    ShapeError,
    UsageError,
)
from personapkt.experiments import (
    corpus_tokenizer,
    finetune_samples,
    pretraining_dialogues,
    reproduce,
)
from personapkt.models.config import (
    BackboneConfig,
    ExperimentConfig,
    MetaTrainConfig,
    PersonaTrainConfig,
    PrefixConfig,
    PretrainConfig,
    RunConfig,
    SourceStrategy,
    SourceTrainConfig,
    SyntheticSpec,
)
from personapkt.models.corpus import Turn
from personapkt.models.types import InitMode, OptimizerRule, Part, StrategyKind
from personapkt.pipeline import (
    SOURCE_KEY,
    PrefixStore,
    train_personas,
    train_source,
    training_metadata,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SEED_ENV = "PKT_SEED"

_T = TypeVar("_T")


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises ``UsageError`` instead of exiting."""

    def error(self, message: str) -> NoReturn:
        """Report a usage error."""
        raise UsageError(f"{self.prog}: {message}")


def _int_list(value: str) -> list[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        message = f"expected comma-separated integers, got {value!r}"
        raise argparse.ArgumentTypeError(message) from None


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--corpus", help="Corpus JSONL file")
    parser.add_argument("--manifest", help="Split manifest (default: <corpus>.split.json)")


def _add_backbone(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backbone", help="Backbone checkpoint")


def _add_store(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--store", help="Prefix store directory")


def _add_training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lr", type=float, help="Peak learning rate")
    parser.add_argument("--batch-size", type=int, help="Dialogues per batch")
    parser.add_argument("--max-epochs", type=int, help="Epoch budget")
    parser.add_argument("--patience", type=int, help="Non-improving epochs before stopping")
    parser.add_argument("--warmup-steps", type=int, help="Linear warmup steps")
    parser.add_argument("--prefix-len", type=int, help="Virtual tokens per prefix")
    parser.add_argument("--k-reparam", type=int, help="Hidden width of the prefix MLP")


def _add_decoding(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--beam", type=int, help="Beam width (1 decodes greedily)")
    parser.add_argument("--max-len", type=int, help="Maximum response length in tokens")


def _add_dims(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--layers", type=int, help="Transformer layers")
    parser.add_argument("--dmodel", type=int, help="Model width")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    """Top-level parser and the parser of every subcommand."""
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="Flat key=value settings file")
    common.add_argument(
        "--log-level",
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Logging level to use (default INFO)",
    )
    common.add_argument("--seed", type=int, help=f"Random seed (fallback: ${SEED_ENV})")
    common.add_argument("--jobs", type=int, help="Parallel persona jobs")

    parser = _Parser(
        prog="personapkt",
        description="Persona-specific prefixes on a frozen transformer",
        argument_default=argparse.SUPPRESS,
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    commands: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        command = sub.add_parser(
            name, help=help_text, parents=[common], argument_default=argparse.SUPPRESS
        )
        commands[name] = command
        return command

    p = add("gen-corpus", "Generate a synthetic corpus or convert PERSONA-CHAT files")
    p.add_argument("--out", help="Output corpus JSONL file")
    p.add_argument("--personas-a", type=int, help="Regular source personas")
    p.add_argument("--personas-b", type=int, help="Regular target personas")
    p.add_argument("--personas-c", type=int, help="Few-shot personas")
    p.add_argument(
        "--personachat", action="append", help="PERSONA-CHAT file to convert (repeatable)"
    )

    p = add("split", "Assign parts and split every persona's dialogues 8:1:1")
    _add_data(p)
    p.add_argument("--n-target", type=int, help="Regular personas drawn for Part B")
    p.add_argument("--n-source", type=int, help="Minimum Part A size")
    p.add_argument(
        "--few-shot-threshold", type=int, help="Dialogues below which a persona is few-shot"
    )

    p = add("stats", "Print per-part persona and dialogue counts")
    _add_data(p)

    p = add("pretrain", "Train a backbone on Part A training dialogues")
    _add_data(p)
    _add_dims(p)
    p.add_argument("--heads", type=int, help="Attention heads")
    p.add_argument("--ffn", type=int, help="Feed-forward width")
    p.add_argument("--max-context", type=int, help="Context window in tokens")
    p.add_argument("--epochs", type=int, help="Training epochs")
    p.add_argument("--lr", type=float, help="Peak learning rate")
    p.add_argument("--batch-size", type=int, help="Dialogues per batch")
    p.add_argument("--warmup-steps", type=int, help="Linear warmup steps")
    p.add_argument("--out", help="Output checkpoint")

    p = add("finetune", "Persona-agnostic full-model fine-tuning baseline")
    _add_data(p)
    _add_backbone(p)
    p.add_argument("--epochs", type=int, help="Training epochs")
    p.add_argument("--lr", type=float, help="Peak learning rate")
    p.add_argument("--batch-size", type=int, help="Samples per batch")
    p.add_argument("--warmup-steps", type=int, help="Linear warmup steps")
    p.add_argument("--out", help="Output checkpoint")

    p = add("train-source", "Train the source prefix on Part A")
    _add_data(p)
    _add_backbone(p)
    _add_store(p)
    _add_training(p)
    p.add_argument(
        "--strategy",
        type=StrategyKind,
        choices=list(StrategyKind),
        metavar="{base,temperature,ppreptile}",
        help="Source-prefix strategy",
    )
    p.add_argument("--temperature", type=float, help="Mixing temperature T")
    p.add_argument("--alpha", type=float, help="PPReptile inner rate")
    p.add_argument("--beta", type=float, help="PPReptile outer rate")
    p.add_argument("--k-inner", type=int, help="PPReptile inner steps")
    p.add_argument("--n-personas", type=int, help="Personas per PPReptile iteration")
    p.add_argument("--b-in", type=int, help="Dialogues per inner step")
    p.add_argument("--b-out", type=int, help="Outer batch size in personas")
    p.add_argument("--iterations", type=int, help="PPReptile iterations")
    p.add_argument(
        "--inner-optimizer",
        type=OptimizerRule,
        choices=list(OptimizerRule),
        metavar="{sgd,adamw}",
        help="PPReptile inner update rule",
    )

    p = add("train-persona", "Train personalized prefixes")
    _add_data(p)
    _add_backbone(p)
    _add_store(p)
    _add_training(p)
    p.add_argument(
        "--init",
        type=InitMode,
        choices=list(InitMode),
        metavar="{source,random}",
        help="Start from the stored source prefix or from a random prefix",
    )
    p.add_argument("--persona", help="Persona id to train")
    p.add_argument(
        "--all-part",
        type=Part,
        choices=[Part.B, Part.C],
        metavar="{B,C}",
        help="Train every persona of a part",
    )

    p = add("generate", "Decode responses for one persona")
    _add_data(p)
    _add_backbone(p)
    _add_store(p)
    _add_decoding(p)
    p.add_argument("--persona", help="Persona id")
    p.add_argument("--text", help="Partner utterance to respond to (default: test dialogues)")

    p = add("evaluate", "Evaluate a setting on Parts B and C")
    _add_data(p)
    _add_backbone(p)
    _add_store(p)
    _add_decoding(p)
    p.add_argument("--part", type=Part, choices=[Part.B, Part.C], metavar="{B,C}")
    p.add_argument("--setting", help="Setting name recorded in the report")
    p.add_argument("--judge-command", help="External consistency judge program")
    p.add_argument("--report-out", help="Write report JSON lines to this file")

    p = add("params", "Trainable-parameter accounting")
    _add_dims(p)
    _add_backbone(p)
    _add_store(p)
    p.add_argument("--prefix-len", type=int, help="Virtual tokens per prefix")
    p.add_argument("--backbone-params", type=int, help="Backbone parameter count")
    p.add_argument("--personas", type=int, help="Personalized prefixes in the store total")

    p = add("reproduce", "Run every setting over several seeds and print the summary")
    p.add_argument("--workdir", help="Directory for all artifacts")
    p.add_argument("--seeds", type=_int_list, help="Comma-separated seeds")
    p.add_argument("--experiment", help="ExperimentConfig JSON file")
    return parser, commands


def _read_config(path: Path, parser: argparse.ArgumentParser) -> dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise NotFoundError(f"config file not found: {path}") from None
    tokens: list[str] = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{number}: expected key=value, got {line!r}")
        tokens += [f"--{key.strip().replace('_', '-')}", value.strip()]
    try:
        values = vars(parser.parse_args(tokens))
    except UsageError as err:
        raise UsageError(f"{path}: {err}") from err
    values.pop("config", None)
    return values


def parse_args(argv: Sequence[str] | None = None) -> tuple[str, RunConfig, str]:
    """
    Parse the command line into the command, its merged settings and the log level.

    Raises:
        UsageError: On bad flags, bad config keys or invalid values.
    """
    parser, commands = build_parser()
    flags = vars(parser.parse_args(argv))
    command = flags.pop("command")
    config_path = flags.pop("config", None)
    values: dict[str, Any] = {}
    env_seed = os.environ.get(SEED_ENV)
    if env_seed:
        try:
            values["seed"] = int(env_seed)
        except ValueError:
            raise UsageError(f"{SEED_ENV} must be an integer, got {env_seed!r}") from None
    if config_path is not None:
        values.update(_read_config(Path(config_path), commands[command]))
    values.update(flags)
    log_level = values.pop("log_level", "INFO")
    try:
        return command, RunConfig(**values), log_level
    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid settings: {err}") from err


def _require(value: _T | None, flag: str) -> _T:
    if value is None:
        raise UsageError(f"--{flag} is required")
    return value


def _build(factory: Callable[..., _T], **values: Any) -> _T:
    """Construct a config model, turning validation failures into usage errors."""
    try:
        return factory(**{k: v for k, v in values.items() if v is not None})
    except ValueError as err:
        raise UsageError(str(err)) from err


def _manifest_path(config: RunConfig) -> Path:
    if config.manifest is not None:
        return Path(config.manifest)
    return Path(_require(config.corpus, "corpus")).with_suffix(".split.json")


def _dataset(config: RunConfig) -> PersonaDataset:
    dataset = load_corpus(Path(_require(config.corpus, "corpus")))
    return dataset.with_manifest(load_manifest(_manifest_path(config)))


def _backbone(config: RunConfig) -> BackboneModel:
    return load_backbone(Path(_require(config.backbone, "backbone")))


def _store(config: RunConfig, backbone: BackboneModel) -> PrefixStore:
    return PrefixStore(Path(_require(config.store, "store")), backbone.digest)


def _prefix_config(config: RunConfig) -> PrefixConfig:
    return _build(PrefixConfig, prefix_len=config.prefix_len, k_reparam=config.k_reparam)


def _train_config(config: RunConfig, factory: Callable[..., _T]) -> _T:
    return _build(
        factory,
        lr=config.lr,
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        patience=config.patience,
        warmup_steps=config.warmup_steps,
        seed=config.seed,
    )


def _pretrain_config(config: RunConfig) -> PretrainConfig:
    return _build(
        PretrainConfig,
        epochs=config.epochs,
        lr=config.lr,
        batch_size=config.batch_size,
        warmup_steps=config.warmup_steps,
        seed=config.seed,
    )


def _strategy(config: RunConfig) -> SourceStrategy:
    if config.strategy is StrategyKind.TEMPERATURE:
        return _build(SourceStrategy, kind=config.strategy, temperature=config.temperature)
    if config.strategy is StrategyKind.PPREPTILE:
        meta = _build(
            MetaTrainConfig,
            alpha=config.alpha,
            beta=config.beta,
            k_inner=config.k_inner,
            n_personas=config.n_personas,
            b_in=config.b_in,
            b_out=config.b_out,
            inner_optimizer=config.inner_optimizer,
            iterations=config.iterations,
            seed=config.seed,
        )
        return SourceStrategy(config.strategy, meta=meta)
    return SourceStrategy(config.strategy)


def cmd_gen_corpus(config: RunConfig) -> int:
    """Write a synthetic corpus, or convert PERSONA-CHAT files."""
    out = Path(_require(config.out, "out"))
    if config.personachat:
        dataset = convert_personachat(Path(p) for p in config.personachat)
    else:
        spec = _build(
            SyntheticSpec,
            personas_a=config.personas_a,
            personas_b=config.personas_b,
            personas_c=config.personas_c,
            seed=config.seed,
        )
        dataset = generate_synthetic(spec)
    save_corpus(dataset, out)
    print(f"{out}: {len(dataset)} personas")  # noqa: T201
    return EXIT_OK


def _print_statistics(dataset: PersonaDataset) -> None:
    print("part  personas  train  valid  test")  # noqa: T201
    for row in dataset_statistics(dataset):
        print(  # noqa: T201
            f"{row.part.value:<4}  {row.personas:>8}  {row.train:>5}  {row.valid:>5}  {row.test:>4}"
        )


def cmd_split(config: RunConfig) -> int:
    """Write the split manifest next to the corpus."""
    dataset = load_corpus(Path(_require(config.corpus, "corpus")))
    manifest = build_manifest(
        dataset,
        few_shot_threshold=config.few_shot_threshold,
        n_source=config.n_source,
        n_regular_target=config.n_target,
        seed=config.seed,
    )
    path = _manifest_path(config)
    save_manifest(manifest, path)
    logger.info("Wrote split manifest %s", path)
    _print_statistics(dataset.with_manifest(manifest))
    return EXIT_OK


def cmd_stats(config: RunConfig) -> int:
    """Print the dataset statistics table."""
    _print_statistics(_dataset(config))
    return EXIT_OK


def cmd_pretrain(config: RunConfig) -> int:
    """Train a backbone from scratch."""
    out = Path(_require(config.out, "out"))
    dataset = _dataset(config)
    tokenizer = corpus_tokenizer(dataset)
    backbone_config = _build(
        BackboneConfig,
        vocab_size=len(tokenizer),
        d_model=config.dmodel,
        n_layers=config.layers,
        n_heads=config.heads,
        d_ffn=config.ffn,
        max_context=config.max_context,
    )
    model = pretrain_backbone(
        pretraining_dialogues(dataset), tokenizer, backbone_config, _pretrain_config(config)
    )
    save_backbone(model, out)
    print(f"{out}: backbone {model.digest.hex()}, {model.param_count} parameters")  # noqa: T201
    return EXIT_OK


def cmd_finetune(config: RunConfig) -> int:
    """Fine-tune every backbone weight on Part A responses into a new checkpoint."""
    source = Path(_require(config.backbone, "backbone"))
    out = Path(_require(config.out, "out"))
    if out.resolve() == source.resolve():
        raise UsageError("--out must differ from --backbone")
    dataset = _dataset(config)
    backbone = load_backbone(source)
    samples = finetune_samples(backbone, dataset)
    model = finetune_backbone(backbone, samples, _pretrain_config(config))
    save_backbone(model, out)
    print(f"{out}: backbone {model.digest.hex()}, {model.param_count} parameters")  # noqa: T201
    return EXIT_OK


def cmd_train_source(config: RunConfig) -> int:
    """Train the source prefix and store it under the reserved key."""
    dataset = _dataset(config)
    backbone = _backbone(config)
    store = _store(config, backbone)
    strategy = _strategy(config)
    train_config: SourceTrainConfig = _train_config(config, SourceTrainConfig)
    prefix_config = _prefix_config(config)
    trained = train_source(backbone, dataset, strategy, train_config, prefix_config)
    settings = {
        "train": train_config.to_dict(),
        "strategy": strategy.to_dict(),
        "prefix": prefix_config.to_dict(),
    }
    metadata = training_metadata(
        strategy.kind.value, backbone.param_count, trained, settings, config.seed
    )
    written = store.store(SOURCE_KEY, trained.prefix, metadata, trained.history)
    print(  # noqa: T201
        f"{store.root / SOURCE_KEY}: {strategy.kind.value} source prefix, revision "
        f"{written.revision}, {trained.prefix.deployed_count} deployed floats"
    )
    return EXIT_OK


def cmd_train_persona(config: RunConfig) -> int:
    """Train personalized prefixes for one persona or a whole part."""
    if (config.persona is None) == (config.all_part is None):
        raise UsageError("give exactly one of --persona and --all-part")
    dataset = _dataset(config)
    if config.all_part is not None:
        personas = dataset.members(config.all_part)
    else:
        personas = [dataset.persona(_require(config.persona, "persona"))]
    backbone = _backbone(config)
    store = _store(config, backbone)
    if config.init is InitMode.SOURCE:
        init = store.load(SOURCE_KEY)
        label = f"personalized/{store.metadata(SOURCE_KEY).strategy}"
    else:
        init = None
        label = "personalized/random"
    train_config: PersonaTrainConfig = _train_config(config, PersonaTrainConfig)
    prefixes = asyncio.run(
        train_personas(
            backbone,
            init,
            dataset,
            personas,
            train_config,
            _prefix_config(config),
            store,
            label,
            config.jobs,
        )
    )
    print(f"{store.root}: trained {len(prefixes)} prefixes ({label})")  # noqa: T201
    return EXIT_OK


def cmd_generate(config: RunConfig) -> int:
    """Print decoded responses of one persona."""
    persona_id = _require(config.persona, "persona")
    backbone = _backbone(config)
    prefix = None
    if config.store is not None:
        prefix = _store(config, backbone).load(persona_id, with_reparam=False)
    if config.text is not None:
        reply = beam_decode(backbone, prefix, [Turn(1, config.text)], config.beam, config.max_len)
        print(reply)  # noqa: T201
        return EXIT_OK
    dataset = _dataset(config)
    persona = dataset.persona(persona_id)
    for index in dataset.split(persona_id).test:
        for history, target in responses(persona.dialogues[index]):
            reply = beam_decode(backbone, prefix, history, config.beam, config.max_len)
            print(f"{index}:{len(history)}\t{reply}\t{target.text}")  # noqa: T201
    return EXIT_OK


def _judge(
    config: RunConfig, stack: contextlib.ExitStack, dataset: PersonaDataset
) -> ConsistencyJudge:
    if config.judge_command is None:
        slots = trait_slots(dataset)
        if not slots:
            raise UsageError(
                "the corpus descriptions name no 'my favorite <slot> is <value>' traits; "
                "pass --judge-command to score persona consistency"
            )
        return KeywordJudge(slots)
    command = shlex.split(config.judge_command)
    if not command:
        raise UsageError("--judge-command is empty")
    return stack.enter_context(SubprocessJudge(command))


def cmd_evaluate(config: RunConfig) -> int:
    """Evaluate one setting and emit its report JSON lines."""
    dataset = _dataset(config)
    backbone = _backbone(config)
    store = _store(config, backbone) if config.store is not None else None
    setting = config.setting or (store.root.name if store is not None else "no-prefix")
    parts = [config.part] if config.part is not None else [Part.B, Part.C]
    lines: list[bytes] = []
    with contextlib.ExitStack() as stack:
        judge = _judge(config, stack, dataset)
        for part in parts:
            prefixes = None
            if store is not None:
                prefixes = {
                    p.persona_id: store.load(p.persona_id, with_reparam=False)
                    for p in dataset.members(part)
                    if p.persona_id in store
                }
            report = evaluate_setting(
                backbone,
                prefixes,
                dataset,
                part,
                judge,
                setting,
                beam=config.beam,
                max_len=config.max_len,
                jobs=config.jobs,
                seed=config.seed,
            )
            lines.append(report.to_jsonb())
            print(report.to_json())  # noqa: T201
    if config.report_out is not None:
        write_bytes_atomic(Path(config.report_out), b"".join(line + b"\n" for line in lines))
    return EXIT_OK


def cmd_params(config: RunConfig) -> int:
    """Print the trainable-parameter accounting."""
    if config.backbone is not None:
        backbone = _backbone(config)
        n_layers, d_model = backbone.config.n_layers, backbone.config.d_model
        backbone_params = backbone.param_count
    else:
        backbone = None
        n_layers = _require(config.layers, "layers")
        d_model = _require(config.dmodel, "dmodel")
        backbone_params = _require(config.backbone_params, "backbone-params")
    try:
        report = param_accounting(
            n_layers, d_model, config.prefix_len, backbone_params, config.personas
        )
    except ValueError as err:
        raise UsageError(str(err)) from err
    print(report.to_json())  # noqa: T201
    print(  # noqa: T201
        f"deployed {report.deployed} floats per persona, ratio {report.ratio:.6f} "
        f"({100 * report.ratio:.4f}% of {backbone_params} backbone parameters)"
    )
    if config.store is not None:
        if backbone is None:
            raise UsageError("--store needs --backbone")
        store = _store(config, backbone)
        keys = store.keys()
        print(  # noqa: T201
            f"store {store.root}: {len(keys)} prefixes, {store.total_deployed()} deployed floats"
        )
    return EXIT_OK


def cmd_reproduce(config: RunConfig) -> int:
    """Run the comparison of all settings and print the summary table and checks."""
    workdir = Path(_require(config.workdir, "workdir"))
    experiment = ExperimentConfig()
    if config.experiment is not None:
        path = Path(config.experiment)
        try:
            experiment = ExperimentConfig.from_json(path.read_bytes())
        except FileNotFoundError:
            raise NotFoundError(f"experiment file not found: {path}") from None
        except (LookupError, TypeError, ValueError) as err:
            raise UsageError(f"{path}: invalid experiment config: {err}") from err
    experiment = dataclasses.replace(experiment, jobs=config.jobs)
    summary = reproduce(workdir, config.seeds, experiment)
    print(summary.table())  # noqa: T201
    for name, passed in summary.checks().items():
        print(f"{'PASS' if passed else 'FAIL'}  {name}")  # noqa: T201
    return EXIT_OK


COMMANDS: dict[str, Callable[[RunConfig], int]] = {
    "gen-corpus": cmd_gen_corpus,
    "split": cmd_split,
    "stats": cmd_stats,
    "pretrain": cmd_pretrain,
    "finetune": cmd_finetune,
    "train-source": cmd_train_source,
    "train-persona": cmd_train_persona,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "params": cmd_params,
    "reproduce": cmd_reproduce,
}


def _log_os_error(err: OSError) -> None:
    if err.filename is None:
        logger.error("%s", err)
    else:
        logger.error("Cannot access %s: %s", err.filename, err.strerror)


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and map failures to exit codes."""
    try:
        command, config, log_level = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as err:
        logging.basicConfig(level=logging.INFO)
        logger.error("%s", err)
        return EXIT_USAGE
    except DataError as err:
        logging.basicConfig(level=logging.INFO)
        logger.error("%s", err)
        return EXIT_DATA
    except OSError as err:
        logging.basicConfig(level=logging.INFO)
        _log_os_error(err)
        return EXIT_DATA
    logging.basicConfig(level=getattr(logging, log_level))
    try:
        return COMMANDS[command](config)
    except UsageError as err:
        logger.error("%s", err)
        return EXIT_USAGE
    except NumericError as err:
        logger.error("Numeric failure: %s", err)
        return EXIT_NUMERIC
    except (DataError, ShapeError) as err:
        logger.error("%s", err)
        return EXIT_DATA
    except OSError as err:
        _log_os_error(err)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
