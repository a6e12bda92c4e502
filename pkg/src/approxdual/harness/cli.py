"""Command line: run, demo, validate, oracle."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import scenarios
from .config import ConfigError, ScenarioConfig, builtin_config, load_config
from .emit import EmitError, emit, write_meta, write_table

log = logging.getLogger("approxdual")

EXIT_OK, EXIT_CONFIG, EXIT_BOUND = 0, 2, 3
DEMOS = {"fig1": "fig1", "fig2": "fig2", "fig5": "fig5", "link": "link", "unsync": "unsync_queues"}


def _overrides(args) -> dict:
    return {"steps": args.steps, "seed": args.seed, "out_dir": args.out, "fmt": args.format}


def write_outputs(cfg: ScenarioConfig, result, plots: bool = True) -> list[Path]:
    out = Path(cfg.out_dir)
    ext = "csv" if cfg.fmt == "csv" else "jsonl"
    paths = []
    for name, traj in result.trajectories.items():
        paths.append(emit(traj, cfg.fmt, out / f"{name}.{ext}"))
    for name, table in result.tables.items():
        paths.append(write_table(table, out / f"{name}.{ext}", cfg.fmt))
    meta = {
        "scenario": cfg.scenario, "seed": cfg.seed, "rng": cfg.rng, "steps": cfg.steps,
        "config": cfg.source, "summary": result.summary,
        "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in result.checks],
    }
    for name, traj in result.trajectories.items():
        meta.setdefault("trajectories", {})[name] = traj.meta
    paths.append(write_meta(meta, out / f"{result.name}.meta.json"))
    if plots:
        from .plots import render
        paths.extend(render(result, out, cfg.seed))
    return paths


def _execute(cfg: ScenarioConfig, strict: bool, plots: bool) -> int:
    result = scenarios.run(cfg)
    paths = write_outputs(cfg, result, plots)
    for c in result.checks:
        log.info("%-26s %s  %s", c.name, "ok" if c.ok else "FAILED", c.detail)
    for p in paths:
        print(p)
    if strict and not result.ok:
        failed = ", ".join(c.name for c in result.checks if not c.ok)
        log.error("bound assertion failed: %s", failed)
        return EXIT_BOUND
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    return _execute(cfg, args.strict, not args.no_plots)


def cmd_demo(args) -> int:
    cfg = builtin_config(DEMOS[args.name], **_overrides(args))
    return _execute(cfg, args.strict, not args.no_plots)


def cmd_validate(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    scenarios.validate(cfg)
    print(f"{args.config}: ok ({cfg.scenario}, {cfg.steps} steps)")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    res = scenarios.oracle(cfg, args.oracle_steps, args.oracle_alpha)
    print(json.dumps({k: (v.tolist() if hasattr(v, "tolist") else v) for k, v in res.items()}, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--steps", type=int, help="horizon K")
    common.add_argument("--seed", type=int, help="RNG seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "jsonlines"), help="trajectory format")
    common.add_argument("--strict", action="store_true", help="exit 3 when a bound check fails")
    common.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="approxdual", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run a scenario config")
    r.add_argument("config")
    r.set_defaults(func=cmd_run)
    d = sub.add_parser("demo", parents=[common], help="run a built-in scenario")
    d.add_argument("name", choices=sorted(DEMOS))
    d.set_defaults(func=cmd_demo)
    v = sub.add_parser("validate", parents=[common], help="check a config without running")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    o = sub.add_parser("oracle", parents=[common], help="estimate f* by a long exact dual run")
    o.add_argument("config")
    o.add_argument("--oracle-steps", type=int, default=200_000)
    o.add_argument("--oracle-alpha", type=float, default=1e-3)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmitError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
