"""Classification table for every shipped metric, as markdown."""
import argparse

from finslerlab.calculus import GeometryCache
from finslerlab.classify import Thresholds, classify_basic, theorem1_condition
from finslerlab.cli import classification_markdown
from finslerlab.metric import load_shipped, sample, shipped_specs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--samples", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=Thresholds().tau)
    args = ap.parse_args()
    thresholds = Thresholds(tau=args.tol)
    reports, conditions = [], []
    for name in shipped_specs():
        spec = load_shipped(name)
        pts = sample(spec, args.samples, args.seed)
        cache = GeometryCache()
        reports.append(classify_basic(spec, pts, cache, thresholds))
        conditions.append(theorem1_condition(spec, pts, cache, thresholds))
    print(classification_markdown(reports))
    print("| spec | scalar-curvature condition | reason |\n|---|---|---|")
    for c in conditions:
        print(f"| {c.spec} | {c.branch} | {c.reason} |")


if __name__ == "__main__":
    main()
