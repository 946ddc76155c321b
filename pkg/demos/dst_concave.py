"""Show which deep-sea-treasure outcomes no linear scalarisation can select.

Run: python demos/dst_concave.py   (no training; a few seconds)
"""

from mohyper.envs import dst_front_oracle
from mohyper.pareto import linear_dominance_filter


def main() -> None:
    front = dst_front_oracle().points
    reachable = {tuple(p) for p in linear_dominance_filter(front)}
    print(f"{'treasure':>8} {'time':>6}  reachable by some w")
    for p in front:
        print(f"{p[0]:8.1f} {p[1]:6.0f}  {'yes' if tuple(p) in reachable else 'no'}")


if __name__ == "__main__":
    main()
