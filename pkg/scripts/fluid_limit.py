"""Compare the rescaled Ehrenfest deviation bound with its Gaussian limit as n grows.

Prints the largest relative gap over y in [0.5, 2] both in value and in exponent.
"""
import argparse

from curvctmc.acceptance import fluid_limit_gaps


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--n", type=int, nargs="+", default=[10**2, 10**3, 10**4, 10**5, 10**6])
    args = p.parse_args()
    print(f"{'n':>9} {'value gap':>10} {'exponent gap':>13}")
    for n in args.n:
        _, value_gap, expo_gap = fluid_limit_gaps(n=n, t=args.t)
        print(f"{n:>9d} {value_gap.max():>10.4f} {expo_gap.max():>13.4f}")


if __name__ == "__main__":
    main()
