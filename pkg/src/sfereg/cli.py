import argparse
import os
import sys

from dotenv import load_dotenv
from loguru import logger

from sfereg import experiment
from sfereg.config import ExperimentConfig, load_config
from sfereg.errors import SferegError
from sfereg.registration.registry import parse_method

COMMANDS = {
    "phantom": experiment.cmd_phantom,
    "simulate": experiment.cmd_simulate,
    "train": experiment.cmd_train,
    "register": experiment.cmd_register,
    "evaluate": experiment.cmd_evaluate,
    "report": experiment.cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sfereg",
        description="Rigid SPECT/CT mu-map registration with dual squeeze-fusion-excitation networks",
    )
    parser.add_argument("command", choices=sorted(COMMANDS), help="Pipeline step to run")
    parser.add_argument("--config", required=True, help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="Override the master seed")
    parser.add_argument("--jobs", type=int, default=None, help="Worker threads for per-case parallelism")
    parser.add_argument("--desk-scale", action="store_true", help="Shrink the config to 32^3 desk scale")
    parser.add_argument(
        "--method",
        action="append",
        default=None,
        help="Restrict to this method; repeat for several",
    )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.desk_scale:
        cfg = cfg.desk_scale()
    methods = [parse_method(name) for name in args.method] if args.method else None
    return cfg.with_overrides(seed=args.seed, jobs=args.jobs, methods=methods)


def configure_logging() -> None:
    logger.remove()
    logger.add(sys.stderr, level=os.getenv("SFEREG_LOG_LEVEL", "INFO"))


def main(argv: list[str] | None = None) -> None:
    load_dotenv()
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        cfg = resolve_config(args)
        run_dir = experiment.prepare_run_dir(cfg)
        logger.add(run_dir / "sfereg.log", level="DEBUG")
        logger.info(f"{args.command}: run {cfg.run_name} in {run_dir}")
        COMMANDS[args.command](cfg)
    except SferegError as e:
        logger.error(f"{args.command} failed ({type(e).__name__}, exit {e.exit_code}): {e}")
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
