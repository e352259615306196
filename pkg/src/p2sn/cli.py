"""Command line: ``p2sn run | eval | oracle``.

Exit codes: 0 success, 1 configuration error, 2 numeric abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .artifacts import format_value, write_csv
from .config import ConfigError, parse_config
from .evaluation import (
    cournot_aggregate_oracle,
    dist_ising_fixed_point,
    ising_br_iteration,
)
from .games import CournotGame, DistIsingGame, IsingGame, make_game
from .nnet import load_checkpoint

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _load_config(path, args):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = parse_config(text)
    overrides = {}
    if getattr(args, "trials", None) is not None:
        overrides["trials"] = args.trials
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = str(args.out)
    if overrides:
        data = cfg.model_dump()
        data.update(overrides)
        cfg = parse_config(json.dumps(data))
    return cfg


def cmd_run(args) -> int:
    from .experiment import run_experiment

    cfg = _load_config(args.config, args)
    arts = run_experiment(cfg, workers=args.workers)
    for p in arts.paths:
        print(p)
    if not arts.ok:
        print(f"training aborted in trials {arts.manifest['aborted_trials']}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_eval(args) -> int:
    from .experiment import evaluate

    cfg = _load_config(args.config, args)
    game = cfg.build_game()
    try:
        net = load_checkpoint(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot load checkpoint: {exc}") from None
    if (net.player_dim, net.action_dim) != (game.d_I, game.d_A):
        raise ConfigError("checkpoint dimensions do not match the configured game")
    rep = evaluate(cfg, game, net)
    print(f"mean_regret={format_value(rep.mean_regret)} max_regret={format_value(rep.max_regret)}")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        header = [f"player_{k}" for k in range(game.d_I)] + ["regret"]
        path = write_csv(out / "regrets.csv", header, ([*p, r] for p, r in zip(rep.player_points, rep.regrets)))
        print(path)
    return EXIT_OK


def cmd_oracle(args) -> int:
    params = {}
    for kv in args.param or []:
        key, _, value = kv.partition("=")
        try:
            params[key] = float(value)
        except ValueError:
            raise ConfigError(f"bad --param {kv!r}; expected key=number") from None
    try:
        game = make_game(args.game, **params)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if type(game) is CournotGame:
        q = cournot_aggregate_oracle(game)
        price = game.a - game.b * q
        print(f"Q*={format_value(q)} price={format_value(price)}")
        return EXIT_OK
    if isinstance(game, DistIsingGame) and game.d_I == 1:
        prof = dist_ising_fixed_point(game, args.grid)
    elif isinstance(game, IsingGame) and game.d_I == 1:
        prof = ising_br_iteration(game, args.grid)
    else:
        raise ConfigError(f"no oracle for game {args.game!r} (available: dist_ising1d, ising1d, cournot)")
    print(f"# method={prof.method} converged={prof.converged} iterations={prof.iterations}", file=sys.stderr)
    print("player,action")
    for x, a in zip(prof.grid, prof.actions):
        print(f"{format_value(x)},{format_value(a)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p2sn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train all trials of an experiment and write artifacts")
    p.add_argument("config")
    p.add_argument("--out", type=Path)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1, help="parallel trial processes (does not change results)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="regret report for a saved checkpoint")
    p.add_argument("config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="print an independent equilibrium oracle")
    p.add_argument("game")
    p.add_argument("--grid", type=int, default=201)
    p.add_argument("--param", action="append", help="game constant override, key=value")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    from .spsg import NonFiniteError

    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonFiniteError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
