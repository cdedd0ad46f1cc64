"""``simulate <config.json> [ground|quench|lightcone|verify] [--jobs K] [--out DIR]``.

Exit codes: 0 on success, 2 on a configuration or validation error, 3 on a
numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import TASKS, load_config
from .errors import ConfigError, FitFailureError, MpsError, NumericalFailure

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("mpstdvp")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="simulate", description="MPS time evolution and ground-state runs")
    p.add_argument("args", nargs="+", metavar="ARG",
                   help="config path, optionally preceded or followed by a task (%s)" % "|".join(TASKS))
    p.add_argument("--jobs", type=int, default=1, help="run independent alpha values in K processes")
    p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _split_args(args: list[str]) -> tuple[str, str | None]:
    tasks = [a for a in args if a in TASKS]
    paths = [a for a in args if a not in TASKS]
    if len(paths) != 1 or len(tasks) > 1:
        raise ConfigError("expected one config path and at most one task")
    return paths[0], tasks[0] if tasks else None


def _run_one(cfg, alpha, out_dir):
    from .experiments import run_task

    return run_task(cfg, alpha, out_dir)


def main(argv: list[str] | None = None) -> int:
    opts = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if opts.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        path, task = _split_args(opts.args)
        cfg = load_config(path, task)
        if opts.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        out_dir = opts.out or cfg.out_dir
        alphas = [None] if cfg.task == "verify" else list(cfg.model.alphas)
        if opts.jobs > 1 and len(alphas) > 1:
            with ProcessPoolExecutor(max_workers=opts.jobs) as pool:
                results = list(pool.map(_run_one, [cfg] * len(alphas), alphas, [out_dir] * len(alphas)))
        else:
            results = [_run_one(cfg, a, out_dir) for a in alphas]
    except ConfigError as exc:
        print(f"simulate: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, FitFailureError, ArithmeticError) as exc:
        print(f"simulate: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (MpsError, ValueError) as exc:
        print(f"simulate: invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for res in results:
        print(res if not isinstance(res, (dict, list)) else json.dumps(res))
    if cfg.task == "verify" and not all(r["pass"] for r in results[0]):
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
