"""Tabulate every applicable deviation bound for a birth-death chain over a y grid."""
import argparse
import json

import numpy as np

from curvctmc.cli import ExperimentConfig, _chain_params, bound_values

NAMES = ["thm31", "cor36", "cor49", "cor410"]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("config", help="JSON config with a scenario block")
    p.add_argument("--ymax", type=float, default=10.0)
    p.add_argument("--points", type=int, default=20)
    args = p.parse_args()
    with open(args.config) as fh:
        cfg = ExperimentConfig.from_dict(json.load(fh))
    ys = list(np.linspace(args.ymax / args.points, args.ymax, args.points))
    params = _chain_params(cfg)
    columns = {}
    for name in NAMES:
        for variant in ("standard", "bennett"):
            try:
                vals = bound_values(name, ys, params, variant, False, cfg).values
            except Exception as exc:  # not every bound applies to every chain
                print(f"# {name} {variant}: skipped ({exc})")
                break
            columns[f"{name}_{variant}"] = vals
    print("y," + ",".join(columns))
    for i, y in enumerate(ys):
        print(f"{y:.4g}," + ",".join(f"{columns[c][i]:.6g}" for c in columns))


if __name__ == "__main__":
    main()
