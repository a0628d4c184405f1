"""``uldct`` command line: one subcommand per pipeline stage.

Exit codes: 0 success, 1 validation error (bad config, arguments or input
files), 2 runtime failure. The path of the main output is printed as the
last line of stdout.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, ExperimentConfig, load_config
from .engine.checkpoint import CheckpointError

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; here that is a validation error
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _t_list(value: str) -> list[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad T list {value!r}") from exc


def _config(args, **sections) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=getattr(args, "seed", None), **sections)


def cmd_generate(args) -> Path:
    cfg = _config(args)
    return pipeline.generate(cfg, args.out, force=args.force)


def cmd_purify(args) -> Path:
    cfg = _config(args, purify={"t": args.t, "presmooth_sigma": args.presmooth_sigma, "morph": args.morph, "psp_threshold": args.psp_threshold})
    return pipeline.purify_dataset(args.manifest, cfg.purify_settings(), cfg.purify.psp_threshold)


def cmd_crossing(args) -> Path:
    cfg = _config(args, crossing={"split": args.split})
    return pipeline.analyze_crossing(args.manifest, cfg, args.out)


def _train_overrides(args) -> dict:
    return {
        "purify": {"combination": args.combination, "t": getattr(args, "t_param", None)},
        "network": {"frequency_module": getattr(args, "frequency", None)},
        "train": {"epochs": args.epochs, "steps_per_epoch": args.steps_per_epoch},
    }


def cmd_train(args) -> Path:
    cfg = _config(args, **_train_overrides(args))
    return pipeline.run_train(args.manifest, cfg, args.out)


def cmd_sample(args) -> Path:
    if args.input is not None and (args.manifest is not None or args.split is not None):
        raise UsageError("sample: give either --input or a manifest split, not both")
    cfg = _config(args, sample={"num_steps": args.steps, "split": args.split})
    return pipeline.run_sample(args.checkpoint, args.out, cfg.sampler_config(), args.manifest, cfg.sample.split, args.input)


def cmd_evaluate(args) -> Path:
    return pipeline.run_evaluate(args.denoised, args.out)


def cmd_ablate_t(args) -> Path:
    overrides = _train_overrides(args)
    overrides["purify"].pop("t")
    cfg = _config(args, **overrides)
    return pipeline.ablate_t(args.manifest, cfg, args.t_list, args.out)


def cmd_ablate_domain(args) -> Path:
    overrides = _train_overrides(args)
    overrides.pop("network")
    cfg = _config(args, **overrides)
    return pipeline.ablate_domain(args.manifest, cfg, args.out)


def _add_train_flags(p, frequency: bool = True, t_param: bool = True) -> None:
    p.add_argument("--combination", choices=("I", "II", "III"), help="training pairs (default from config: I)")
    if t_param:
        p.add_argument("--t-param", type=float, help="blend parameter T for IP(uLDCT)")
    if frequency:
        p.add_argument("--frequency", type=_on_off, help="frequency modules on/off")
    p.add_argument("--epochs", type=int)
    p.add_argument("--steps-per-epoch", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uldct", description="Image purification and flow-matching denoising for misaligned low-dose CT pairs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, help="experiment YAML (defaults when omitted)")
        p.add_argument("--seed", type=int, help="global seed override")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "build the synthetic paired dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing dataset")

    p = add("purify", cmd_purify, "write common masks and purified images")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--t", type=float)
    p.add_argument("--presmooth-sigma", type=float)
    p.add_argument("--morph", type=_on_off)
    p.add_argument("--psp-threshold", type=float)

    p = add("analyze-crossing", cmd_crossing, "crossing rates of raw and purified pairs")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--split", choices=("train", "val", "test"))

    p = add("train", cmd_train, "train the velocity network")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_train_flags(p)

    p = add("sample", cmd_sample, "denoise a manifest split or one image")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--manifest", type=Path, help="defaults to the manifest recorded in the checkpoint")
    p.add_argument("--split", choices=("train", "val", "test"))
    p.add_argument("--input", type=Path, help="a single .f32 image instead of a split")
    p.add_argument("--steps", type=int, help="Euler steps")

    p = add("evaluate", cmd_evaluate, "score denoised images against IP(NDCT)")
    p.add_argument("--denoised", type=Path, required=True, help="denoised.json written by 'sample'")
    p.add_argument("--out", type=Path, required=True, help="CSV path")

    p = add("ablate-t", cmd_ablate_t, "train and evaluate once per T value")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--t-list", type=_t_list, default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    _add_train_flags(p, t_param=False)

    p = add("ablate-domain", cmd_ablate_domain, "frequency versus image-domain training")
    p.add_argument("--manifest", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    _add_train_flags(p, frequency=False)
    return parser


VALIDATION_ERRORS = (UsageError, ConfigError, CheckpointError, FileExistsError, FileNotFoundError, KeyError, ValueError)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        out = args.func(args)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
