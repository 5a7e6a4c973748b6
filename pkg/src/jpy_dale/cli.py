"""DALE Command Line Module.

Subcommands:

- gen-data: Synthetic noisy-label dataset to a directory of PGMs plus ``manifest.json``
- partition: Fuzzy / non-fuzzy masks and patch scores of a dataset split
- train: One training arm (``dale`` or ``baseline``) with metrics, maps and checkpoints
- eval: Metric row of a checkpoint on a split, printed as JSON
- inspect-omega: Confidence maps and meta-gradients at a checkpoint

Every subcommand that writes a directory echoes its configuration and the tool
version there before computing anything. Exit codes: 0 success, 1 usage error,
2 data or validation error.

Example:
    ```
    jpy-dale gen-data --n 200 --hw 32 --blur 3 --noise 0.3 --seed 7 --out data/
    jpy-dale train --config cfg.json --data data/ --mode dale --out runs/a
    jpy-dale eval --ckpt runs/a/checkpoints/t0020.ckpt --data data/ --split test
    ```
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, NoReturn

import numpy as np

from .config import load_run_config, parse_overrides, read_json, tool_version, write_config_echo
from .dale import Dale
from .domain.dataio.formats import mask_to_u8, write_f32, write_pgm
from .domain.dataio.generator import generate_dataset
from .domain.dataio.manifest import read_dataset, write_dataset
from .domain.dataio.models import Dataset, GeneratorConfig
from .domain.segmodel.checkpoint import load_checkpoint
from .domain.trainer.models import RunConfig
from .domain.trainer.services import restore_state
from .enums import Split
from .errors import ConfigError, DaleException, OutputDirectoryNotEmpty, UnknownCommand

logger = logging.getLogger("dale.cli")

LOG_FORMAT = "%(asctime)s level=%(levelname)s logger=%(name)s %(message)s"


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        raise UnknownCommand(message)


def configure_logging(verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))

    root = logging.getLogger("dale")
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.propagate = False


def prepare_out_dir(path: Path, force: bool, resume: bool = False) -> Path:
    """Create ``path``; a non-empty directory needs ``--force`` unless a run is resumed into it.

    Raises:
        OutputDirectoryNotEmpty: If the directory holds files and neither flag allows it
    """
    path = Path(path)
    if path.is_dir() and any(path.iterdir()) and not (force or resume):
        raise OutputDirectoryNotEmpty(str(path))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _run_overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides = parse_overrides(args.set)
    for key in ("mode", "seed", "T", "tau", "alpha", "eta", "K", "lr"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return overrides


def _generator_config(args: argparse.Namespace) -> GeneratorConfig:
    data = read_json(args.config) if args.config is not None else {}
    flags = {
        "n": args.n,
        "n_test": args.n_test,
        "height": args.hw if args.hw is not None else args.height,
        "width": args.hw if args.hw is not None else args.width,
        "blur_sigma": args.blur,
        "noise_rate": args.noise,
        "band": args.band,
        "noise_model": args.noise_model,
        "classes": args.classes,
        "channels": args.channels,
        "texture": args.texture,
        "seed": args.seed,
    }
    data.update({key: value for key, value in flags.items() if value is not None})
    try:
        return GeneratorConfig.from_dict(data)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _load_data(args: argparse.Namespace, config: RunConfig) -> Dataset:
    if args.data is not None:
        return read_dataset(args.data)

    generator = GeneratorConfig(classes=config.classes, seed=config.seed)
    logger.info("no --data given, generating synthetic data seed=%d", config.seed)
    train, test = generate_dataset(generator)
    return Dataset.in_memory(train, test, generator.classes, generator.to_dict())


def _checkpoint_config(path: Path, args: argparse.Namespace) -> RunConfig:
    _, meta = load_checkpoint(path)
    stored = dict(meta.get("config", {}))
    stored.update(parse_overrides(getattr(args, "set", None)))
    try:
        return RunConfig.from_dict(stored)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def cmd_gen_data(args: argparse.Namespace) -> int:
    config = _generator_config(args)
    out = prepare_out_dir(args.out, args.force)
    write_config_echo(out, config.to_dict(), "gen-data")

    train, test = generate_dataset(config)
    write_dataset(out, config, train, test)
    logger.info("gen-data done out=%s train=%d test=%d", out, len(train), len(test))
    return 0


def cmd_partition(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _run_overrides(args))
    out = prepare_out_dir(args.out, args.force)
    write_config_echo(out, config.to_dict(), "partition")

    dataset = read_dataset(args.data)
    samples = dataset.split(Split(args.split))
    regions = Dale(config).partition(samples)

    (out / "masks").mkdir(exist_ok=True)
    report = []
    for i, region in enumerate(regions):
        write_pgm(out / "masks" / f"fuzzy_{i:04d}.pgm", mask_to_u8(region.masks.fuzzy))
        write_pgm(out / "masks" / f"nonfuzzy_{i:04d}.pgm", mask_to_u8(region.masks.nonfuzzy))
        report.append(
            {
                "index": i,
                **region.scores.to_dict(),
                "fuzzy_weight": float(region.masks.fuzzy.sum()),
                "nonfuzzy_weight": float(region.masks.nonfuzzy.sum()),
            }
        )

    (out / "scores.json").write_text(json.dumps({"tau": config.tau, "samples": report}, indent=2) + "\n")
    logger.info("partition done out=%s samples=%d", out, len(regions))
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = load_run_config(args.config, _run_overrides(args))
    out = prepare_out_dir(args.out, args.force, resume=args.resume is not None)
    write_config_echo(out, config.to_dict(), "train")

    dataset = _load_data(args, config)
    dale = Dale(config, out)
    try:
        state = dale.train(dataset, resume=args.resume)
    finally:
        dale.close()

    logger.info("train done mode=%s t=%d steps=%d out=%s", config.mode.value, state.t, state.steps, out)
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    config = _checkpoint_config(args.ckpt, args)
    state = restore_state(args.ckpt, config)
    dataset = read_dataset(args.data)

    row = Dale(config).evaluate(state.params, dataset, Split(args.split))
    print(json.dumps({"t": state.t, "split": args.split, **row.to_dict()}, sort_keys=True))
    return 0


def cmd_inspect_omega(args: argparse.Namespace) -> int:
    config = _checkpoint_config(args.ckpt, args)
    out = prepare_out_dir(args.out, args.force)
    write_config_echo(out, config.to_dict(), "inspect-omega")

    state = restore_state(args.ckpt, config)
    dataset = read_dataset(args.data)
    maps = Dale(config).inspect_omega(state.params, dataset, args.index, state.omegas, t=state.t)

    for sub in ("omega", "grad"):
        (out / sub).mkdir(exist_ok=True)
    for i, conf in maps.items():
        grad_omega = conf.grad_omega if conf.grad_omega is not None else np.zeros(conf.omega.shape)
        scale = float(np.abs(grad_omega).max()) or 1.0

        write_f32(out / "omega" / f"img{i:04d}.dlf1", conf.omega)
        write_pgm(out / "omega" / f"img{i:04d}.pgm", mask_to_u8(conf.omega / conf.omega_max))
        write_f32(out / "grad" / f"img{i:04d}.dlf1", grad_omega)
        # zero meta-gradient maps to mid-grey
        write_pgm(out / "grad" / f"img{i:04d}.pgm", mask_to_u8(0.5 + 0.5 * grad_omega / scale))

    logger.info("inspect-omega done out=%s images=%d", out, len(maps))
    return 0


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON run config")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override one config key")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tau", type=float)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="jpy-dale", description="Alternating learning on fuzzy and non-fuzzy regions")
    parser.add_argument("--verbose", action="store_true", help="Log per-step detail")
    parser.add_argument("--version", action="version", version=f"%(prog)s {tool_version()}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    gen = commands.add_parser("gen-data", help="Generate a synthetic noisy-label dataset")
    gen.add_argument("--config", type=Path, help="JSON generator config")
    gen.add_argument("--n", type=int)
    gen.add_argument("--n-test", dest="n_test", type=int)
    gen.add_argument("--hw", type=int, help="Square image side")
    gen.add_argument("--height", type=int)
    gen.add_argument("--width", type=int)
    gen.add_argument("--blur", type=float)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--band", type=int)
    gen.add_argument("--noise-model", dest="noise_model", choices=["band", "uniform"])
    gen.add_argument("--classes", type=int)
    gen.add_argument("--channels", type=int)
    gen.add_argument("--texture", type=float)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--force", action="store_true")
    gen.set_defaults(handler=cmd_gen_data)

    part = commands.add_parser("partition", help="Write fuzzy / non-fuzzy masks and patch scores")
    _add_run_flags(part)
    part.add_argument("--data", type=Path, required=True)
    part.add_argument("--split", choices=[s.value for s in Split], default=Split.TRAIN.value)
    part.add_argument("--out", type=Path, required=True)
    part.add_argument("--force", action="store_true")
    part.set_defaults(handler=cmd_partition)

    train = commands.add_parser("train", help="Train one arm and log metrics per phase")
    _add_run_flags(train)
    train.add_argument("--mode", choices=["dale", "baseline"])
    train.add_argument("--T", dest="T", type=int)
    train.add_argument("--K", dest="K", type=int)
    train.add_argument("--alpha", type=float)
    train.add_argument("--eta", type=float)
    train.add_argument("--lr", type=float)
    train.add_argument("--data", type=Path, help="Dataset directory; synthetic data from the run seed when omitted")
    train.add_argument("--resume", type=Path, help="Checkpoint to continue from")
    train.add_argument("--out", type=Path, required=True)
    train.add_argument("--force", action="store_true")
    train.set_defaults(handler=cmd_train)

    ev = commands.add_parser("eval", help="Print the metric row of a checkpoint as JSON")
    ev.add_argument("--ckpt", type=Path, required=True)
    ev.add_argument("--data", type=Path, required=True)
    ev.add_argument("--split", choices=[s.value for s in Split], default=Split.TEST.value)
    ev.add_argument("--set", action="append", metavar="KEY=VALUE")
    ev.set_defaults(handler=cmd_eval)

    inspect = commands.add_parser("inspect-omega", help="Write confidence and meta-gradient maps")
    inspect.add_argument("--ckpt", type=Path, required=True)
    inspect.add_argument("--data", type=Path, required=True)
    inspect.add_argument("--index", type=int, action="append", help="Training image index; all when omitted")
    inspect.add_argument("--set", action="append", metavar="KEY=VALUE")
    inspect.add_argument("--out", type=Path, required=True)
    inspect.add_argument("--force", action="store_true")
    inspect.set_defaults(handler=cmd_inspect_omega)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except DaleException as e:
        print(str(e), file=sys.stderr)
        return e.EXIT_CODE

    configure_logging(args.verbose)
    try:
        return int(args.handler(args))
    except DaleException as e:
        logger.error("%s command=%s", e, args.command)
        return e.EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
