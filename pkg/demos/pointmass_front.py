"""Train on mo-pointmass and print the learned Pareto front next to the constant-action oracle.

Run: python demos/pointmass_front.py [--iterations 500] [--seed 0]
Takes about four minutes on one core with the defaults.
"""

import argparse

import numpy as np

from mohyper.core import Rng
from mohyper.envs import PointMassEnv, pointmass_front_oracle
from mohyper.pareto import ParetoFront, hypervolume, nondominated_filter
from mohyper.trainer import TrainerConfig, evaluate, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iterations", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    result = train(TrainerConfig(iterations=args.iterations, seed=args.seed), "mo-pointmass")
    W, J = evaluate(result.checkpoint, grid_resolution=20, episodes_per_point=20, rng=Rng(7))
    ref = np.asarray(PointMassEnv.reference_point)
    learned = nondominated_filter(J)
    oracle = pointmass_front_oracle()
    print(f"{'w1':>5} {'speed':>8} {'energy':>8}")
    for w, j in zip(W, J):
        print(f"{w[0]:5.2f} {j[0]:8.1f} {j[1]:8.1f}")
    print(f"learned front: {len(learned)} points, hypervolume {hypervolume(ParetoFront(learned, ref)):.0f}")
    print(f"oracle front:  {len(oracle.points)} points, hypervolume {hypervolume(oracle):.0f}")


if __name__ == "__main__":
    main()
