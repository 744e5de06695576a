"""Command-line front end.

Exit codes: 0 all applicable checks pass, 1 a check failed, 2 bad
configuration or invalid spec, 3 numerical evaluation broke down.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import classify as cls
from . import expr, verify
from .calculus import (
    DEFAULT_ORDER,
    QUANTITIES,
    GeometryCache,
    GeometryError,
    geodesic_trace,
)
from .jet import MAX_ORDER, JetError
from .metric import (
    EvalPoint,
    F_values,
    MetricError,
    MetricSpec,
    SamplingError,
    check_strong_convexity,
    resolve_spec,
    sample,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_EVAL = 0, 1, 2, 3
THREADS_ENV = "FINSLERLAB_THREADS"

# lowest jet order at which each request can be evaluated
MIN_ORDER = {"g": 2, "h": 2, "C": 3, "I": 3, "G": 2, "N": 3, "berwald": 4, "L": 4, "J": 4, "M": 3,
             "Mbar": 4, "sigma": 5, "riemann": 4, "flag": 4, "classify": 5, "verify": 5, "inspect": 2,
             "geodesic": 2}

TENSOR_CHOICES = (*QUANTITIES, "flag")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    command: str
    specs: list[str]
    samples: int = 20
    seed: int = 0
    order: int = DEFAULT_ORDER
    tol: float = cls.TAU
    tol_deg: float = cls.TAU_DEG
    fd_tol: float = 1e-4
    fmt: str = "json"
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self, need: str) -> None:
        for name in ("samples", "order", "tol", "tol_deg", "fd_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"--{name.replace('_', '-')} must be positive")
        if self.order > MAX_ORDER:
            raise ConfigError(f"--order {self.order} exceeds the maximum jet order {MAX_ORDER}")
        if self.order < MIN_ORDER[need]:
            raise ConfigError(f"{need} needs jet order >= {MIN_ORDER[need]} (got --order {self.order})")

    @property
    def thresholds(self) -> cls.Thresholds:
        return cls.Thresholds(tau=self.tol, tau_deg=self.tol_deg)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _map_specs(fn, specs):
    """Apply fn to each spec, optionally in threads; results keep input order."""
    if _threads() == 1 or len(specs) == 1:
        return [fn(s) for s in specs]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        return list(pool.map(fn, specs))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=True) + "\n"


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# inspect

def _homogeneity(spec: MetricSpec, count: int, seed: int) -> dict:
    if spec.kind == "expression":
        rep = expr.validate_homogeneity(spec.F, spec.dim, samples=count, seed=seed, lo=spec.lower, hi=spec.upper)
        return {"passed": rep.passed, "samples": rep.samples, "max_defect": rep.max_defect}
    rng = np.random.default_rng(seed)
    x = rng.uniform(spec.lower, spec.upper, size=(count, spec.dim))
    y = rng.normal(size=(count, spec.dim))
    t = rng.uniform(0.1, 10.0, size=(count, 1))
    f1, ft = F_values(spec, x, y), F_values(spec, x, t * y)
    defect = float(np.max(np.abs(ft - t[:, 0] * f1) / (1 + np.abs(f1))))
    return {"passed": defect <= 1e-9, "samples": count, "max_defect": defect}


def cmd_inspect(cfg: RunConfig) -> tuple[int, list[tuple[str, str]]]:
    outputs = []
    code = EXIT_OK
    for ref in cfg.specs:
        spec = resolve_spec(ref)
        samples = sample(spec, cfg.samples, cfg.seed)
        convex = [check_strong_convexity(spec, p) for p in samples.points]
        report = {
            "spec": spec.describe(),
            "homogeneity": _homogeneity(spec, cfg.samples, cfg.seed),
            "convexity": {
                "passed": all(c.positive_definite for c in convex),
                "points": len(convex),
                "min_eigenvalue": min(c.min_eigenvalue for c in convex),
            },
            "sampling": {"seed": cfg.seed, "count": cfg.samples, "rejections": samples.rejections,
                         "rejection_reasons": samples.rejection_reasons},
        }
        if not (report["homogeneity"]["passed"] and report["convexity"]["passed"]):
            code = EXIT_FAIL
        if cfg.fmt == "markdown":
            text = (f"# {spec.name}\n\n- dim: {spec.dim}\n- kind: {spec.kind}\n"
                    f"- homogeneity: {'pass' if report['homogeneity']['passed'] else 'fail'} "
                    f"(max defect {report['homogeneity']['max_defect']:.2e})\n"
                    f"- convexity: {'pass' if report['convexity']['passed'] else 'fail'} "
                    f"(min eigenvalue {report['convexity']['min_eigenvalue']:.4g})\n"
                    f"- rejections: {samples.rejections} {samples.rejection_reasons}\n")
        elif cfg.fmt == "csv":
            text = _csv([["spec", "dim", "kind", "homogeneity", "convexity", "rejections"],
                         [spec.name, spec.dim, spec.kind, report["homogeneity"]["passed"],
                          report["convexity"]["passed"], samples.rejections]])
        else:
            text = dumps(report)
        outputs.append((f"inspect-{spec.name}", text))
    return code, outputs


# ---------------------------------------------------------------------------
# tensor

def tensor_dumps(spec: MetricSpec, quantity: str, points: list[EvalPoint], order: int, seed: int) -> list[dict]:
    cache = GeometryCache(order)
    rng = np.random.default_rng(seed)
    out = []
    for p in points:
        geom = cache.get(spec, p)
        if quantity == "flag":
            u = rng.normal(size=spec.dim)
            value = geom.flag_curvature(u)
            out.append({"quantity": "flag", "point": p.to_dict(), "rank": 0, "dim": spec.dim,
                        "components": value, "flag": u.tolist(),
                        "norms": {"raw": abs(value), "scale_free": abs(value)}})
            continue
        T = getattr(geom, QUANTITIES[quantity])()
        out.append({"quantity": quantity, "point": p.to_dict(), "rank": T.rank, "dim": T.dim,
                    "variance": T.variance, "components": T.values.tolist(),
                    "norms": {"raw": geom.norm(T), "scale_free": geom.scale_free_norm(T)}})
    return out


def cmd_tensor(cfg: RunConfig) -> tuple[int, list[tuple[str, str]]]:
    quantity = cfg.extra["quantity"]
    spec = resolve_spec(cfg.specs[0])
    if cfg.extra.get("at"):
        points = [EvalPoint.parse(cfg.extra["at"])]
        if points[0].dim != spec.dim:
            raise ConfigError(f"point has dimension {points[0].dim}, metric has {spec.dim}")
    else:
        points = sample(spec, cfg.samples, cfg.seed).points
    dumps_ = tensor_dumps(spec, quantity, points, cfg.order, cfg.seed)
    if cfg.fmt == "csv":
        rows = [["point", "index", "value"]]
        for k, d in enumerate(dumps_):
            arr = np.asarray(d["components"])
            for idx in np.ndindex(arr.shape):
                rows.append([k, ".".join(str(i) for i in idx), repr(float(arr[idx]))])
        text = _csv(rows)
    elif cfg.fmt == "markdown":
        lines = ["| point | raw norm | scale-free norm |", "|---|---|---|"]
        for d in dumps_:
            lines.append(f"| {d['point']} | {d['norms']['raw']:.6e} | {d['norms']['scale_free']:.6e} |")
        text = "\n".join(lines) + "\n"
    else:
        text = dumps(dumps_[0] if cfg.extra.get("at") else dumps_)
    return EXIT_OK, [(f"tensor-{quantity}-{spec.name}", text)]


# ---------------------------------------------------------------------------
# classify

def classification_markdown(reports: list[cls.ClassificationReport]) -> str:
    head = "| spec | " + " | ".join(cls.CLASSES) + " |"
    lines = [head, "|---" * (len(cls.CLASSES) + 1) + "|"]
    for r in reports:
        cells = [f"{'yes' if r.verdicts[c] else 'no'} ({r.residuals[c]:.1e})" for c in cls.CLASSES]
        lines.append(f"| {r.spec} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def cmd_classify(cfg: RunConfig) -> tuple[int, list[tuple[str, str]]]:
    specs = [resolve_spec(s) for s in cfg.specs]

    def run(spec):
        samples = sample(spec, cfg.samples, cfg.seed)
        return cls.classify_basic(spec, samples, GeometryCache(cfg.order), cfg.thresholds)

    reports = _map_specs(run, specs)
    code = EXIT_FAIL if any(r.internal_error for r in reports) else EXIT_OK
    if cfg.fmt == "markdown":
        text = classification_markdown(reports)
    elif cfg.fmt == "csv":
        rows = [["spec", "class", "verdict", "worst_residual"]]
        rows += [[r.spec, c, r.verdicts[c], repr(r.residuals[c])] for r in reports for c in cls.CLASSES]
        text = _csv(rows)
    else:
        text = dumps([r.to_dict() for r in reports])
    return code, [("classify", text)]


# ---------------------------------------------------------------------------
# verify

def cmd_verify(cfg: RunConfig) -> tuple[int, list[tuple[str, str]]]:
    specs = [resolve_spec(s) for s in cfg.specs]
    wanted = cfg.extra.get("identities") or None
    if wanted:
        bad = [i for i in wanted if i not in verify.IDENTITIES]
        if bad:
            raise ConfigError(f"unknown identity {bad[0]!r}; choose from {', '.join(verify.IDENTITIES)}")

    def run(spec):
        samples = sample(spec, cfg.samples, cfg.seed)
        return verify.run_identities(spec, samples, GeometryCache(cfg.order), cfg.thresholds, wanted,
                                     ladder=cfg.extra.get("ladder", False))

    checks = [c for group in _map_specs(run, specs) for c in group]
    code = EXIT_FAIL if any(not c.ok for c in checks) else EXIT_OK
    if cfg.fmt == "markdown":
        text = verify.summary_markdown(checks)
    elif cfg.fmt == "csv":
        rows = [["identity", "spec", "verdict", "worst_residual", "tolerance", "branch"]]
        rows += [[c.identity, c.spec, c.verdict, repr(c.worst_residual), c.tolerance, c.branch] for c in checks]
        text = _csv(rows)
    else:
        text = dumps([c.to_dict(with_points=cfg.extra.get("points", False)) for c in checks])
    return code, [("verify", text)]


# ---------------------------------------------------------------------------
# geodesic

def _vector(text: str, dim: int, flag: str) -> list[float]:
    try:
        v = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc
    if len(v) != dim:
        raise ConfigError(f"{flag} has {len(v)} components, metric has dimension {dim}")
    return v


def cmd_geodesic(cfg: RunConfig) -> tuple[int, list[tuple[str, str]]]:
    spec = resolve_spec(cfg.specs[0])
    x0 = _vector(cfg.extra["x0"], spec.dim, "--x0")
    y0 = _vector(cfg.extra["y0"], spec.dim, "--y0")
    if cfg.extra["steps"] < 1 or not cfg.extra["dt"] > 0:
        raise ConfigError("--steps and --dt must be positive")
    path = geodesic_trace(spec, x0, y0, cfg.extra["steps"], cfg.extra["dt"])
    if cfg.fmt == "json":
        text = dumps({"spec": spec.name, "truncated": path.truncated, "reason": path.reason, "drift": path.drift,
                      "t": path.t.tolist(), "x": path.x.tolist(), "y": path.y.tolist(), "F": path.F.tolist()})
    else:
        text = path.to_csv()
    if path.truncated:
        print(f"path truncated after t = {path.t[-1]:g}: {path.reason}", file=sys.stderr)
    return EXIT_OK, [(f"geodesic-{spec.name}", text)]


# ---------------------------------------------------------------------------
# entry point

COMMANDS = {"inspect": cmd_inspect, "tensor": cmd_tensor, "classify": cmd_classify, "verify": cmd_verify,
            "geodesic": cmd_geodesic}

_EXT = {"json": "json", "csv": "csv", "markdown": "md"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--samples", type=int, default=20, help="sample points per spec (default 20)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--order", type=int, default=DEFAULT_ORDER, help="jet truncation order")
    common.add_argument("--tol", type=float, default=cls.TAU, help="verdict threshold tau")
    common.add_argument("--tol-deg", type=float, default=cls.TAU_DEG, help="degeneracy threshold for ||M||")
    common.add_argument("--fd-tol", type=float, default=1e-4, help="finite-difference error tolerance")
    common.add_argument("--format", dest="fmt", choices=("json", "csv", "markdown"), default=None)
    common.add_argument("--out", help="also write reports and a manifest into this directory")

    parser = argparse.ArgumentParser(prog="finslerlab", description="Numerical Finsler geometry lab.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("inspect", parents=[common], help="spec summary and regularity checks")
    p.add_argument("specs", nargs="+", metavar="SPEC")

    p = sub.add_parser("tensor", parents=[common], help="dump one tensor at given or sampled points")
    p.add_argument("quantity", choices=TENSOR_CHOICES)
    p.add_argument("specs", nargs=1, metavar="SPEC")
    p.add_argument("--at", help="point 'x1,..,xn;y1,..,yn'")

    p = sub.add_parser("classify", parents=[common], help="sample-based classification")
    p.add_argument("specs", nargs="+", metavar="SPEC")

    p = sub.add_parser("verify", parents=[common], help="numerical identity checks")
    p.add_argument("specs", nargs="+", metavar="SPEC")
    p.add_argument("--identity", action="append", dest="identities", metavar="ID",
                   help=f"restrict to these identities ({', '.join(verify.IDENTITIES)})")
    p.add_argument("--ladder", action="store_true", help="include the invariant ladder")
    p.add_argument("--points", action="store_true", help="include per-point records in JSON")

    p = sub.add_parser("geodesic", parents=[common], help="trace a geodesic, CSV output")
    p.add_argument("specs", nargs=1, metavar="SPEC")
    p.add_argument("--x0", required=True)
    p.add_argument("--y0", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--dt", type=float, default=0.01)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = {"specs", "samples", "seed", "order", "tol", "tol_deg", "fd_tol", "fmt", "out", "command"}
    extra = {k: v for k, v in vars(args).items() if k not in base}
    fmt = args.fmt or ("csv" if args.command == "geodesic" else "json")
    return RunConfig(args.command, list(args.specs), args.samples, args.seed, args.order, args.tol, args.tol_deg,
                     args.fd_tol, fmt, args.out, extra)


def write_outputs(cfg: RunConfig, outputs: list[tuple[str, str]], code: int) -> None:
    for _, text in outputs:
        sys.stdout.write(text)
    if not cfg.out:
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for stem, text in outputs:
        name = f"{stem}.{_EXT[cfg.fmt]}"
        (out / name).write_text(text)
        files.append({"file": name, "sha256": hashlib.sha256(text.encode()).hexdigest()})
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {"runs": []}
    cfg_dict = asdict(cfg)
    cfg_dict.pop("out")
    run = {"config": cfg_dict, "exit_code": code, "files": files}
    manifest["runs"] = [r for r in manifest["runs"] if r.get("config") != cfg_dict] + [run]
    manifest_path.write_text(dumps(manifest))


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = config_from_args(args)
    need = cfg.extra.get("quantity", cfg.command)
    try:
        cfg.validate(need)
        code, outputs = COMMANDS[cfg.command](cfg)
    except (ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SamplingError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    except MetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, JetError, cls.ClassificationError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_EVAL
    write_outputs(cfg, outputs, code)
    return code


if __name__ == "__main__":
    sys.exit(main())
