"""Command line entry point: ``run``, ``sweep`` and ``verify``."""
from __future__ import annotations

import argparse
import itertools
import json
import sys
from dataclasses import replace
from pathlib import Path

from .agents import AgentConfig, normalize_name
from .harness import EnvConfig, ExperimentConfig, curves_to_csv, export, run_experiment, summarize
from .verify import CHECKS, run_checks

EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2
DEEP_SEA_U_MIN = -0.05


def default_u_min(env_kind: str, estimator: str) -> float:
    if normalize_name(env_kind) == "deep_sea" and normalize_name(estimator).startswith("exact_ube"):
        return DEEP_SEA_U_MIN
    return 0.0


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--env", default="deep-sea", help="deep-sea, n-room or custom-json")
    p.add_argument("--size", type=int, default=10, help="DeepSea side length L")
    p.add_argument("--rooms", type=int, default=None)
    p.add_argument("--room-size", type=int, default=None)
    p.add_argument("--source", default=None, help="MDP JSON file for custom-json")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--repeat", type=int, default=None, help="experience repeat factor")
    p.add_argument("--agent", default="exact-ube")
    p.add_argument("--lambda", dest="risk_gain", type=float, default=1.0)
    p.add_argument("--ensemble", type=int, default=5)
    p.add_argument("--u-min", type=float, default=None)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--max-policy-iters", type=int, default=40)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--seeds", type=int, default=5, help="number of seeds (0..n-1)")
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", default=None, help="output file (stdout when omitted)")


def config_from_args(args) -> ExperimentConfig:
    u_min = args.u_min if args.u_min is not None else default_u_min(args.env, args.agent)
    env = EnvConfig(
        kind=args.env,
        size=args.size,
        rooms=args.rooms,
        room_size=args.room_size,
        horizon=args.horizon,
        repeat=args.repeat,
        source=args.source,
    )
    if env.kind == "custom_json" and (args.source is None or args.horizon is None):
        raise ValueError("custom-json needs --source and --horizon")
    agent = AgentConfig(
        estimator=args.agent,
        risk_gain=args.risk_gain,
        ensemble_size=args.ensemble,
        u_min=u_min,
        gamma=args.gamma,
        max_policy_iters=args.max_policy_iters,
    )
    env.build()  # fail fast on bad geometry
    return ExperimentConfig(
        env=env,
        agent=agent,
        episodes=args.episodes,
        seeds=tuple(range(args.seeds)),
        master_seed=args.master_seed,
        workers=args.workers,
        out=args.out,
        format=args.format,
    )


def _emit(curves, config: ExperimentConfig, out) -> None:
    if out is None:
        if config.format == "csv":
            sys.stdout.write(curves_to_csv(curves))
        else:
            doc = {"config": config.to_dict(), "summary": summarize(curves), "curves": [c.to_dict() for c in curves]}
            sys.stdout.write(json.dumps(doc, indent=1) + "\n")
    else:
        export(curves, out, config.format, config)


def cmd_run(args) -> int:
    try:
        config = config_from_args(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    curves = run_experiment(config)
    _emit(curves, config, config.out)
    s = summarize(curves)
    print(
        f"{config.run_id}: mean total regret {s['mean_total_regret']:.2f} "
        f"(se {s['se_total_regret']:.2f}), learning times {s['learning_times']}",
        file=sys.stderr,
    )
    return EXIT_OK


GRID_KEYS = {
    "agent": ("agent", "estimator"),
    "lambda": ("agent", "risk_gain"),
    "ensemble": ("agent", "ensemble_size"),
    "u_min": ("agent", "u_min"),
    "size": ("env", "size"),
}


def sweep_configs(doc: dict) -> list[ExperimentConfig]:
    """Expand ``{"base": {...}, "grid": {"agent": [...], "size": [...], ...}}`` into configs."""
    base = ExperimentConfig.from_dict(doc.get("base", {}))
    grid = doc.get("grid", {})
    unknown = set(grid) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}; allowed: {sorted(GRID_KEYS)}")
    keys = list(grid)
    configs = []
    for values in itertools.product(*(grid[k] for k in keys)):
        env, agent = base.env, base.agent
        explicit_u_min = False
        for k, v in zip(keys, values):
            part, name = GRID_KEYS[k]
            explicit_u_min |= k == "u_min"
            if part == "env":
                env = replace(env, **{name: v})
            else:
                agent = replace(agent, **{name: v})
        if not explicit_u_min and "u_min" not in doc.get("base", {}).get("agent", {}):
            agent = replace(agent, u_min=default_u_min(env.kind, agent.estimator))
        configs.append(replace(base, env=env, agent=agent))
    return configs


def cmd_sweep(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
        configs = sweep_configs(doc)
        out = args.out or doc.get("out")
        fmt = args.format or doc.get("format", "csv")
        if fmt not in ("csv", "json"):
            raise ValueError("format must be csv or json")
    except (ValueError, OSError, KeyError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    all_curves = []
    for cfg in configs:
        curves = run_experiment(cfg)
        s = summarize(curves)
        print(f"{cfg.run_id}: mean total regret {s['mean_total_regret']:.2f}", file=sys.stderr)
        all_curves.extend(curves)
    if out is None:
        sys.stdout.write(curves_to_csv(all_curves))
    elif fmt == "csv":
        Path(out).write_text(curves_to_csv(all_curves))
    else:
        Path(out).write_text(
            json.dumps(
                {"sweep": doc, "curves": [c.to_dict() for c in all_curves]},
                indent=1,
            )
        )
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.only or list(CHECKS)
    bad = [n for n in names if n not in CHECKS]
    if bad:
        print(f"config error: unknown checks {bad}; available: {list(CHECKS)}", file=sys.stderr)
        return EXIT_CONFIG
    results = run_checks(names)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ube-tabular", description="Tabular uncertainty Bellman equation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment over several seeds")
    _add_run_args(run)
    run.set_defaults(func=cmd_run)
    sweep = sub.add_parser("sweep", help="run a grid of experiments from a JSON file")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--format", choices=("csv", "json"), default=None)
    sweep.set_defaults(func=cmd_sweep)
    verify = sub.add_parser("verify", help="check variance identities against the enumeration oracle")
    verify.add_argument("--only", nargs="*", default=None, help=f"subset of {', '.join(CHECKS)}")
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
