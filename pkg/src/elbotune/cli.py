"""Command line: ``train``, ``diversity``, ``search`` and ``baselines``.

Exit codes: 0 success, 2 configuration error, 1 runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config, write_config

log = logging.getLogger("elbotune")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _apply_train_overrides(cfg: RunConfig, args) -> RunConfig:
    tune = {}
    if args.mode is not None:
        tune["mode"] = args.mode
    fixed = [args.ne, args.nb, args.ntheta]
    if args.xi is not None and any(v is not None for v in fixed):
        raise ConfigError("--xi cannot be combined with --ne/--nb/--ntheta")
    if args.xi is not None:
        tune["xi"] = args.xi
        tune.setdefault("mode", "auto")
    if any(v is not None for v in fixed):
        if any(v is None for v in fixed):
            raise ConfigError("--ne, --nb and --ntheta must be given together")
        tune.update(n_explore=args.ne, n_buffer=args.nb, n_grad=args.ntheta)
        tune.setdefault("mode", "fixed")
    if tune.get("mode") == "auto" and any(v is not None for v in fixed):
        raise ConfigError("autotune.mode: fixed budgets given with --mode auto")
    run = {"out_dir": str(args.out)}
    if args.seed is not None:
        run["seed"] = args.seed
    return cfg.replace(autotune=tune, run=run)


def cmd_train(args) -> int:
    from .rig import run

    cfg = _apply_train_overrides(parse_config(args.config), args)
    res = run(cfg, args.out)
    last = res.metrics[-1]
    print(f"objective {res.objective(cfg.search.objective_window):.4f}  final -elbo {last.neg_beta_elbo:.3f}  "
          f"env steps {last.cum_env_steps}  grad updates {last.cum_grad_updates}  -> {args.out}")
    return EXIT_OK


def cmd_diversity(args) -> int:
    from .diversity import add_then_remove_schedule, run_diversity_experiment, stage_means, write_experiment_csv

    cfg = parse_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.toml")
    schedule = add_then_remove_schedule(epochs_per_stage=args.epochs_per_stage)
    seeds = [cfg.run.seed + i for i in range(args.seeds)]
    if args.epochs_per_stage < 1 or args.seeds < 1 or args.steps_per_epoch < 1:
        raise ConfigError("--epochs-per-stage, --seeds and --steps-per-epoch must be >= 1")
    rows = run_diversity_experiment(
        schedule, cfg.vae_config(), args.epochs_per_stage, seeds,
        steps_per_epoch=args.steps_per_epoch, workers=cfg.search.workers,
    )
    write_experiment_csv(rows, out / "diversity.csv")
    for s in stage_means(rows):
        print(f"stage {s['stage']:2d}  classes {s['class_count']:2d}  -elbo {s['neg_beta_elbo']:8.3f}  "
              f"kl {s['kl_term']:7.3f}  recon {s['recon_nll']:8.3f}")
    return EXIT_OK


def cmd_search(args) -> int:
    from .search import SearchSpace, random_search, write_summary

    cfg = parse_config(args.config)
    trials = args.trials if args.trials is not None else cfg.search.trials
    workers = args.workers if args.workers is not None else cfg.search.workers
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    if workers < 1:
        raise ConfigError("--workers must be >= 1")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.toml")
    results = random_search(SearchSpace.from_config(cfg, args.mode), trials, cfg, cfg.search.seed, workers, out)
    write_summary(out / "search_summary.csv", results, cfg.run.log_wall_clock)
    best = results[0]
    print(f"best {best.label}: objective {best.objective:.4f} params {best.params}")
    return EXIT_OK


def cmd_baselines(args) -> int:
    from .search import run_baselines, write_summary

    cfg = parse_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.toml")
    results = run_baselines(cfg, workers=cfg.search.workers, out_dir=out)
    write_summary(out / "baselines_summary.csv", list(results.values()), cfg.run.log_wall_clock)
    for name, r in results.items():
        print(f"{name:20s} objective {r.objective:.4f}  coverage {r.coverage[-1]:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # argparse exits with 2 on bad usage, the same code as a config error
    p = argparse.ArgumentParser(prog="elbotune", description="ELBO-driven budget tuning for imagined-goal RL")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one training run")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True)
    t.add_argument("--mode", choices=["auto", "fixed"])
    t.add_argument("--xi", type=float)
    t.add_argument("--ne", type=int)
    t.add_argument("--nb", type=int)
    t.add_argument("--ntheta", type=int)
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("diversity", help="ELBO response to an add-then-remove class schedule")
    d.add_argument("--config", required=True)
    d.add_argument("--out", required=True)
    d.add_argument("--epochs-per-stage", type=int, default=20)
    d.add_argument("--seeds", type=int, default=3)
    d.add_argument("--steps-per-epoch", type=int, default=50, help="optimiser steps between evaluations")
    d.set_defaults(func=cmd_diversity)

    s = sub.add_parser("search", help="random search in auto or fixed mode")
    s.add_argument("--config", required=True)
    s.add_argument("--trials", type=int)
    s.add_argument("--mode", choices=["auto", "fixed"], required=True)
    s.add_argument("--workers", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_search)

    b = sub.add_parser("baselines", help="the three starved-budget baselines")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baselines)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface any runtime failure as exit 1
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
