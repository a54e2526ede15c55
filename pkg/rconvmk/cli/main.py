"""
The ``rcmk`` command.

    rcmk <command> [--config FILE] [--set section.key=value ...]
                   [--out DIR] [--seed N] [--workers N] [--no-progress]

Commands: train, eval, attack, corrupt, gradcheck, inspect. Every run writes
``manifest.json`` (resolved config, seed, package version) into ``--out``.
Failures print one line ``rcmk-error[<code>]: <message>`` to stderr and exit
with status 2 (1 for unexpected internal errors).
"""

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from rconvmk import __version__
from rconvmk.config import apply_overrides, configure_logging, emit_config, load_config, settings
from rconvmk.errors import ArgumentError, RConvError
from rconvmk.tasks import (
    RunContext,
    run_attack,
    run_corrupt,
    run_eval,
    run_gradcheck,
    run_inspect,
    run_train,
)

logger = logging.getLogger(__name__)

COMMANDS = {
    "train": "train a model; writes checkpoint.rcmk, loss_curve.csv, metrics.csv",
    "eval": "clean test metrics of model.checkpoint; writes metrics.csv",
    "attack": "robust accuracy under FGSM / FFGSM / PGD; writes attack.csv",
    "corrupt": "corruption error and mCE; writes corruption.csv, ce.csv",
    "gradcheck": "finite-difference check of every layer; writes gradcheck.csv",
    "inspect": "parameter counts and frequency partition; writes inspect.csv, partition.csv",
}

TASKS = {
    "train": run_train,
    "eval": run_eval,
    "attack": run_attack,
    "corrupt": run_corrupt,
    "gradcheck": run_gradcheck,
    "inspect": run_inspect,
}

MANIFEST_FILE = "manifest.json"


class _Parser(argparse.ArgumentParser):
    """Usage errors become ArgumentError so they get the one-line error format."""

    def error(self, message: str):
        raise ArgumentError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rcmk", description="Robust convolution experiments at desk scale.")
    parser.add_argument("--version", action="version", version=f"rcmk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name, help_text in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=None, help="experiment config file (defaults when omitted)")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="override one config value; repeatable")
        p.add_argument("--out", default=None, help=f"output directory (default: $RCMK_OUTPUT_DIR/{name})")
        p.add_argument("--seed", type=int, default=None, help="run seed (default: model.seed)")
        p.add_argument("--workers", type=int, default=None, help="worker threads (default: $RCMK_WORKERS)")
        p.add_argument("--no-progress", action="store_true", help="hide progress bars")
    return parser


def write_manifest(ctx: RunContext, command: str, status: str, stats: Dict[str, Any]) -> Path:
    manifest = {
        "command": command,
        "status": status,
        "seed": ctx.seed,
        "workers": ctx.workers,
        "version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": emit_config(ctx.cfg),
        "warnings": list(ctx.warnings),
        "stats": {k: v for k, v in stats.items() if k != "table"},
    }
    path = ctx.path(MANIFEST_FILE)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _fail(code: str, message: Any) -> None:
    text = " ".join(str(message).split())
    print(f"rcmk-error[{code}]: {text}", file=sys.stderr)


def run(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the command and return the exit status."""
    ctx: Optional[RunContext] = None
    command = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        cfg = apply_overrides(load_config(args.config), args.overrides)
        workers = args.workers if args.workers is not None else settings.WORKERS
        if workers < 1:
            raise ArgumentError(f"--workers must be >= 1, got {workers}")
        ctx = RunContext(
            cfg=cfg,
            out_dir=Path(args.out) if args.out else Path(settings.OUTPUT_DIR) / command,
            seed=args.seed if args.seed is not None else cfg.model.seed,
            workers=workers,
            progress=not args.no_progress,
        )

        stats = TASKS[command](ctx)
        manifest = write_manifest(ctx, command, "success", stats)
        print(stats.get("table", ""))
        print(f"✅ {command} complete: outputs in {ctx.out_dir} (manifest {manifest.name})")
        return 0

    except SystemExit as e:
        # --help / --version
        return int(e.code or 0)
    except RConvError as e:
        _fail(e.code, e)
        status = 2
    except ValidationError as e:
        _fail("config", e)
        status = 2
    except Exception as e:
        logger.debug("internal error", exc_info=True)
        _fail("internal", f"{type(e).__name__}: {e}")
        status = 1

    if ctx is not None:
        try:
            write_manifest(ctx, command, "error", {})
        except OSError:
            logger.warning("could not write manifest to %s", ctx.out_dir)
    return status


def main() -> None:
    configure_logging(settings.LOG_LEVEL)
    sys.exit(run())


if __name__ == "__main__":
    main()
