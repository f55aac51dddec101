"""Run the acceptance checks and print one line per check."""
import argparse
import sys

from curvctmc.acceptance import VerifyContext, run_suite


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paths", type=int, default=None)
    p.add_argument("--scale", type=float, default=1.0, help="multiply analytic bounds")
    args = p.parse_args()
    results = run_suite(VerifyContext(seed=args.seed, n_paths=args.paths,
                                      bound_scale=args.scale))
    for res in results:
        print(res.line())
    return 1 if any(r.status == "fail" for r in results) else 0


if __name__ == "__main__":
    sys.exit(main())
