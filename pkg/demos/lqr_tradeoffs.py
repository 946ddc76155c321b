"""Train one hypernetwork pair on mo-lqr1d and compare every trade-off with the Riccati optimum.

Run: python demos/lqr_tradeoffs.py [--iterations 300] [--seed 0]
Takes two to three minutes on one core with the defaults.
"""

import argparse

from mohyper.core import Rng
from mohyper.envs import lqr_oracle
from mohyper.trainer import TrainerConfig, evaluate, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    result = train(TrainerConfig(iterations=args.iterations, seed=args.seed), "mo-lqr1d")
    W, J = evaluate(result.checkpoint, grid_resolution=10, episodes_per_point=1000, rng=Rng(7))
    print(f"{'w1':>5} {'w2':>5} {'return':>9} {'oracle':>9} {'rel err':>8}")
    for w, j in zip(W, J):
        value = float(w @ j)
        if w[1] < 0.1 - 1e-12:
            print(f"{w[0]:5.2f} {w[1]:5.2f} {value:9.4f} {'n/a':>9}")
            continue
        oracle = lqr_oracle(w)
        print(f"{w[0]:5.2f} {w[1]:5.2f} {value:9.4f} {oracle:9.4f} {abs(value - oracle) / abs(oracle):8.2%}")


if __name__ == "__main__":
    main()
