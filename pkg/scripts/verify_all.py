"""Identity checks on shipped and random metrics, as a markdown table."""
import argparse
import sys

from finslerlab.calculus import GeometryCache
from finslerlab.metric import load_shipped, sample, shipped_specs
from finslerlab.verify import random_metrics, run_identities, summary_markdown


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--random", type=int, default=5, help="number of random regular metrics")
    ap.add_argument("--ladder", action="store_true")
    args = ap.parse_args()
    specs = [load_shipped(n) for n in shipped_specs()] + random_metrics(args.random, args.seed)
    checks = []
    for spec in specs:
        checks += run_identities(spec, sample(spec, args.samples, args.seed), GeometryCache(), ladder=args.ladder)
    print(summary_markdown(checks), end="")
    return 0 if all(c.ok for c in checks) else 1


if __name__ == "__main__":
    sys.exit(main())
