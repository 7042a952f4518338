"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime failure. Set
``LEOSEM_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) to control verbosity.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ..env import TRACE_COLUMNS
from ..errors import BadConfig, LeosemError
from ..rl import Trainer, read_checkpoint
from .config import ScenarioConfig, default_config_path
from .experiments import (child_seed, evaluate_policy, run_delay_weight_sweep, run_mode_level_breakdown,
                          run_power_sweep)
from .outputs import emit_outputs, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
LOG_ENV = "LEOSEM_LOG_LEVEL"

log = logging.getLogger("leosem")


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(path: str | None) -> ScenarioConfig:
    return ScenarioConfig.load(path or default_config_path())


def cmd_train(args) -> int:
    cfg = _load(args.config)
    env_cfg = cfg.env_config()
    trainer = Trainer(env_cfg, cfg.trainer_config(algorithm=args.algo), args.seed, cfg.to_ini())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trainer.train(callback=lambda i, s: log.info("update %d mean return %.5f", i, s.mean_return))
    trainer.save(out / "checkpoint.npz")
    trainer.write_log(out / "training_log.csv")
    emit_outputs([], out, cfg, {"seeds": {"train": args.seed}, "algorithm": args.algo,
                                "files": ["checkpoint.npz", "training_log.csv"]})
    print(f"trained {args.algo} for {trainer.update_index} updates -> {out / 'checkpoint.npz'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        meta, _ = read_checkpoint(args.checkpoint)
    except (OSError, KeyError, ValueError) as exc:
        raise BadConfig(f"cannot read checkpoint {args.checkpoint}: {exc}") from exc
    cfg = ScenarioConfig.from_ini(meta["config_text"])
    env_cfg = cfg.env_config()
    trainer = Trainer.load(args.checkpoint, env_cfg)
    seeds = [child_seed(args.seed, "evaluate", i) for i in range(args.episodes)]
    eps = evaluate_policy(trainer.policy, env_cfg, seeds, args.seed, args.greedy)
    rows = [(i, s, e.average_sem) for i, (s, e) in enumerate(zip(seeds, eps))]
    for i, s, v in rows:
        print(f"episode {i} seed {s} average_sem {v:.6f}")
    print(f"mean average_sem {np.mean([r[2] for r in rows]):.6f}")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "evaluation.csv", ("episode", "env_seed", "average_sem"), rows)
        tdir = out / "traces"
        tdir.mkdir(exist_ok=True)
        for i, e in enumerate(eps):
            write_csv(tdir / f"episode{i}.csv", TRACE_COLUMNS, e.trace)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args.config)
    run = run_delay_weight_sweep if args.kind == "delay-weight" else run_power_sweep
    res = run(cfg)
    emit_outputs([res], args.out, cfg)
    for row in res.summary_rows:
        print("{:<16} x={:<8g} mean={:.6f} std={:.6f} n={}".format(*row))
    return EXIT_OK


def cmd_breakdown(args) -> int:
    cfg = _load(args.config)
    res = run_mode_level_breakdown(cfg)
    emit_outputs([res], args.out, cfg)
    for row in res.rows:
        print("level {} latency {:.6f} quality {:.6f} compute {:.6f} sem {:.6f}".format(row[0], *row[4:8]))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="leosem", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a policy and write a checkpoint")
    t.add_argument("--config", help="INI scenario file (default: packaged defaults)")
    t.add_argument("--algo", choices=("grpo", "ppo"), default="grpo")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="roll out a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int, default=5)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--greedy", action="store_true", help="argmax instead of sampling")
    e.add_argument("--out", help="write evaluation.csv and traces here")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="delay-weight or LEO-power sweep")
    s.add_argument("kind", choices=("delay-weight", "power"))
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("breakdown", help="per-level SEM term breakdown for fixed Mode 3")
    b.add_argument("--config")
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_breakdown)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LeosemError, OSError, RuntimeError, ValueError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
