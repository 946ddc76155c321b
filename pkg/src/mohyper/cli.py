"""``mohyper`` command line: train, eval, metrics and oracle.

Exit codes: 0 on success, 2 for usage or configuration errors, 3 when
training stopped on a non-finite value.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np
import yaml

from .core import ConfigError, DomainError, Rng
from .envs import ENV_REGISTRY, ORACLES, env_spec, lqr_oracle, pointmass_front_oracle
from .pareto import (
    FrontCsvError,
    ParetoFront,
    hypervolume,
    hypervolume_mc,
    linear_dominance_filter,
    nondominated_filter,
    read_front_csv,
    sparsity,
    write_front_csv,
)
from .trainer import Checkpoint, CheckpointError, RunConfig, TrainingAborted, evaluate, train

logger = logging.getLogger("mohyper")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
CONFIG_FILE = "config.yaml"


class UsageError(Exception):
    pass


def _floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")], dtype=np.float64)
    except ValueError:
        raise UsageError(f"{what} must be comma-separated numbers, got {text!r}") from None


def load_run_config(path: str) -> RunConfig:
    """Parse a YAML run config; missing keys take their defaults."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return RunConfig.from_dict(doc)


def dump_run_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=False)


def cmd_train(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.trainer.seed = args.seed
    if cfg.env not in ENV_REGISTRY:
        raise ConfigError(f"env.name: unknown environment {cfg.env!r}")
    m = env_spec(cfg.env, cfg.reward_weights).m
    cfg.trainer = cfg.trainer.resolved(cfg.env)
    cfg.trainer.validate(m)
    cfg.eval.validate()
    resolved = dump_run_config(cfg)
    logger.info("resolved config:\n%s", resolved)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, CONFIG_FILE), "w") as fh:
        fh.write(resolved)

    def progress(rec):
        if rec.iteration % cfg.trainer.log_interval == 0:
            logger.info("iteration %d  hypervolume %.6g", rec.iteration, rec.hypervolume)

    try:
        train(cfg.trainer, cfg.env, out_dir=args.out, hypernet_config=cfg.hypernet, reference=cfg.reference,
              deterministic=args.deterministic, threads=args.threads, reward_weights=cfg.reward_weights,
              progress=progress, eval_config=cfg.eval)
    except TrainingAborted as exc:
        print(f"error: training aborted: {exc}; last good checkpoint (iteration "
              f"{exc.checkpoint.iteration}) kept in {args.out}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {os.path.join(args.out, 'checkpoint.json')}")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        ck = Checkpoint.load(args.checkpoint)
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint: {exc}") from None
    W, J = evaluate(ck, env_name=args.env, grid_resolution=args.grid, episodes_per_point=args.episodes,
                    rng=Rng(args.seed), threads=args.threads)
    write_front_csv(args.out, W, J)
    print(f"{len(W)} rows written to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    try:
        _, J = read_front_csv(args.front)
    except OSError as exc:
        raise UsageError(f"cannot read front: {exc}") from None
    m = J.shape[1]
    ref = _floats(args.ref, "--ref")
    if ref.shape != (m,):
        raise UsageError(f"--ref has {len(ref)} entries but the front has {m} objectives")
    nd = nondominated_filter(J)
    convex = linear_dominance_filter(nd) if len(nd) else nd
    front = ParetoFront(nd, ref)
    print(f"points: {len(J)}")
    print(f"nondominated: {len(nd)}")
    print(f"convex: {len(convex)}")
    if len(nd) == 0:
        print("warning: empty front, hypervolume is 0", file=sys.stderr)
        print("hypervolume: 0")
    elif m > 4:
        value, err = hypervolume_mc(front, rng=Rng(args.seed))
        print(f"hypervolume: {value:.17g} +/- {err:.3g}")
    else:
        print(f"hypervolume: {hypervolume(front):.17g}")
    if len(nd) >= 2:
        print(f"sparsity: {sparsity(nd):.17g}")
    else:
        print("sparsity: nan")
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.env not in ENV_REGISTRY:
        raise UsageError(f"unknown environment {args.env!r}")
    kind = ORACLES.get(args.env)
    if kind is None:
        raise UsageError(f"no oracle registered for {args.env}")
    if kind == "lqr":
        if args.w is None:
            raise UsageError("--w is required for mo-lqr1d")
        w = _floats(args.w, "--w")
        kwargs = {} if args.horizon is None else {"horizon": args.horizon}
        value = lqr_oracle(w, **kwargs)
        if w[0] == 0.0:
            print("# w1 = 0: state cost ignored, zero control is optimal", file=sys.stderr)
        print("w_1,w_2,value")
        print(f"{w[0]:.17g},{w[1]:.17g},{value:.17g}")
        return EXIT_OK
    front = pointmass_front_oracle(args.grid, args.horizon)
    print("J_1,J_2")
    for p in front.points:
        print(",".join(f"{x:.17g}" for x in p))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mohyper", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train both hypernetworks")
    p.add_argument("--config", help="YAML run config")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override trainer.seed")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, timing-free logs")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over a simplex grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", type=int, default=10, help="simplex grid resolution")
    p.add_argument("--episodes", type=int, default=10, help="episodes per trade-off")
    p.add_argument("--out", required=True, help="front CSV path")
    p.add_argument("--env", help="expected environment name")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="summarise a front CSV")
    p.add_argument("--front", required=True)
    p.add_argument("--ref", required=True, help='reference point; negative values need the = form, e.g. --ref=-50,-20')
    p.add_argument("--seed", type=int, default=0, help="Monte-Carlo seed for m > 4")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("oracle", help="print a reference optimum")
    p.add_argument("--env", required=True)
    p.add_argument("--w", help='trade-off, e.g. "0.5,0.5"')
    p.add_argument("--horizon", type=int)
    p.add_argument("--grid", type=int, default=41, help="action lattice size for mo-pointmass")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except FrontCsvError as exc:
        print(f"error: {args.front}: {exc}", file=sys.stderr)
    except (UsageError, ConfigError, DomainError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
