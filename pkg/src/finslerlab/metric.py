"""Metric definitions: loading, evaluation of F, regularity and sampling.

Metric files are TOML documents::

    name = "funk-disk"
    dim = 2
    kind = "randers"            # riemannian | randers | expression
    domain = [[-0.6, 0.6], [-0.6, 0.6]]   # per-axis [min, max]
    notes = "free text"         # optional
    min_eigen_ratio = 1e-3      # optional sampling floor on g's eigenvalue ratio

    [expression]                # kind = "expression"
    F = "sqrt(y1^2 + y2^2)"

    [riemannian]                # kind = "riemannian"; strings in x only
    a = [["1", "0"], ["0", "1 + x1^2"]]

    [randers]                   # kind = "randers"; F = alpha + b_i y^i
    b = ["0.3", "0"]
    [randers.alpha]
    a = [["1", "0"], ["0", "1"]]
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from . import expr
from .jet import Jet, get_table, seed_variables

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

KINDS = ("riemannian", "randers", "expression")


class MetricError(ValueError):
    """Invalid metric definition or a point outside the metric's regular set."""


@dataclass(frozen=True)
class EvalPoint:
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.x) != len(self.y):
            raise MetricError("x and y must have the same length")
        if not any(self.y):
            raise MetricError("y must be a nonzero tangent vector")

    @property
    def dim(self) -> int:
        return len(self.x)

    @classmethod
    def parse(cls, text: str) -> EvalPoint:
        """Parse the command-line form ``"x1,..,xn;y1,..,yn"``."""
        try:
            xs, ys = text.split(";")
            return cls(tuple(float(v) for v in xs.split(",")), tuple(float(v) for v in ys.split(",")))
        except ValueError as exc:
            raise MetricError(f"bad point {text!r}: expected 'x1,..,xn;y1,..,yn'") from exc

    def to_dict(self) -> dict:
        return {"x": list(self.x), "y": list(self.y)}


@dataclass(frozen=True)
class MetricSpec:
    name: str
    dim: int
    kind: str
    domain: tuple[tuple[float, float], ...]
    F: expr.Ast | None = None
    a: tuple[tuple[expr.Ast, ...], ...] | None = None
    b: tuple[expr.Ast, ...] | None = None
    notes: str = ""
    min_eigen_ratio: float = 1e-3
    source: str = field(default="", compare=False, repr=False)

    @property
    def key(self) -> str:
        body = repr((self.name, self.dim, self.kind, self.domain, self.F, self.a, self.b))
        return hashlib.sha256(body.encode()).hexdigest()[:16]

    @property
    def lower(self) -> np.ndarray:
        return np.array([d[0] for d in self.domain])

    @property
    def upper(self) -> np.ndarray:
        return np.array([d[1] for d in self.domain])

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def describe(self) -> dict:
        out = {"name": self.name, "dim": self.dim, "kind": self.kind, "domain": [list(d) for d in self.domain]}
        if self.F is not None:
            out["F"] = expr.to_source(self.F)
        if self.a is not None:
            out["a"] = [[expr.to_source(e) for e in row] for row in self.a]
        if self.b is not None:
            out["b"] = [expr.to_source(e) for e in self.b]
        out["notes"] = self.notes
        return out


# ---------------------------------------------------------------------------
# loading

def _locate(text: str, needle: str) -> tuple[int, int]:
    idx = text.find(needle)
    if idx < 0:
        return 0, 0
    line = text.count("\n", 0, idx) + 1
    col = idx - (text.rfind("\n", 0, idx) + 1) + 1
    return line, col


def _parse_field(src: str, where: str, text: str, dim: int, allow_y: bool) -> expr.Ast:
    if not isinstance(src, str):
        raise MetricError(f"{where}: expected an expression string, got {type(src).__name__}")
    try:
        node = expr.parse(src)
        return expr.validate(node, dim, allow_y=allow_y)
    except expr.ExprError as exc:
        line, col = _locate(text, src)
        # +1 skips the opening quote of the TOML string
        col_err = col + 1 + exc.span.begin if line else 0
        raise MetricError(f"{where}: {exc.message} (line {line}, column {col_err})") from exc


def _parse_matrix(rows, where: str, text: str, dim: int) -> tuple[tuple[expr.Ast, ...], ...]:
    if not isinstance(rows, list) or len(rows) != dim or any(not isinstance(r, list) or len(r) != dim for r in rows):
        raise MetricError(f"{where}: expected a {dim}x{dim} array of strings")
    parsed = [[_parse_field(rows[i][j], f"{where}[{i}][{j}]", text, dim, allow_y=False) for j in range(dim)] for i in range(dim)]
    for i in range(dim):
        for j in range(i):
            if parsed[i][j] != parsed[j][i]:
                raise MetricError(f"{where}: matrix is not symmetric at [{i}][{j}]")
    return tuple(tuple(r) for r in parsed)


def loads_spec(text: str, origin: str = "<string>") -> MetricSpec:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise MetricError(f"{origin}: {exc}") from exc

    def need(key, typ):
        if key not in data:
            raise MetricError(f"{origin}: missing key {key!r}")
        if not isinstance(data[key], typ):
            raise MetricError(f"{origin}: key {key!r} has the wrong type")
        return data[key]

    name = need("name", str)
    dim = need("dim", int)
    if dim < 2:
        raise MetricError(f"{origin}: dim must be >= 2")
    kind = need("kind", str)
    if kind not in KINDS:
        raise MetricError(f"{origin}: kind must be one of {KINDS}, got {kind!r}")
    domain = need("domain", list)
    if len(domain) != dim or any(not isinstance(d, list) or len(d) != 2 for d in domain):
        raise MetricError(f"{origin}: domain must list [min, max] for each of {dim} axes")
    dom = tuple((float(lo), float(hi)) for lo, hi in domain)
    if any(lo >= hi for lo, hi in dom):
        raise MetricError(f"{origin}: every domain interval needs min < max")
    notes = data.get("notes", "")
    ratio = float(data.get("min_eigen_ratio", 1e-3))

    payload = data.get(kind)
    if not isinstance(payload, dict):
        raise MetricError(f"{origin}: missing [{kind}] table")
    where = f"{origin}: {kind}"
    if kind == "expression":
        F = _parse_field(payload.get("F"), f"{where}.F", text, dim, allow_y=True)
        spec = MetricSpec(name, dim, kind, dom, F=F, notes=notes, min_eigen_ratio=ratio, source=text)
    elif kind == "riemannian":
        a = _parse_matrix(payload.get("a"), f"{where}.a", text, dim)
        spec = MetricSpec(name, dim, kind, dom, a=a, notes=notes, min_eigen_ratio=ratio, source=text)
    else:
        alpha = payload.get("alpha")
        if not isinstance(alpha, dict):
            raise MetricError(f"{origin}: missing [randers.alpha] table")
        a = _parse_matrix(alpha.get("a"), f"{where}.alpha.a", text, dim)
        b_src = payload.get("b")
        if not isinstance(b_src, list) or len(b_src) != dim:
            raise MetricError(f"{where}.b: expected {dim} expression strings")
        b = tuple(_parse_field(s, f"{where}.b[{i}]", text, dim, allow_y=False) for i, s in enumerate(b_src))
        spec = MetricSpec(name, dim, kind, dom, a=a, b=b, notes=notes, min_eigen_ratio=ratio, source=text)
        worst = randers_bound(spec)
        if not worst < 1.0:
            raise MetricError(f"{origin}: Randers one-form violates ||beta||_alpha < 1 (max {worst:.6g} on the domain)")
    return spec


def load_spec(path: str | Path) -> MetricSpec:
    path = Path(path)
    return loads_spec(path.read_text(encoding="utf-8"), origin=str(path))


def shipped_specs() -> list[str]:
    root = resources.files("finslerlab") / "specs"
    return sorted(p.name[: -len(".toml")] for p in root.iterdir() if p.name.endswith(".toml"))


def load_shipped(name: str) -> MetricSpec:
    res = resources.files("finslerlab") / "specs" / f"{name}.toml"
    if not res.is_file():
        raise MetricError(f"no shipped metric named {name!r}; known: {', '.join(shipped_specs())}")
    return loads_spec(res.read_text(encoding="utf-8"), origin=f"{name}.toml")


def resolve_spec(ref: str) -> MetricSpec:
    """A file path if it exists, otherwise the stem of a shipped metric."""
    p = Path(ref)
    if p.is_file():
        return load_spec(p)
    stem = p.name[: -len(".toml")] if p.name.endswith(".toml") else p.name
    return load_shipped(stem)


# ---------------------------------------------------------------------------
# evaluation

def _quadratic(a, x_env, ys):
    n = len(ys)
    total = 0.0
    for i in range(n):
        for j in range(i, n):
            aij = expr.evaluate(a[i][j], x_env)
            term = aij * (ys[i] * ys[j])
            total = total + (term if i == j else 2.0 * term)
    return total


def _F_from_env(spec: MetricSpec, env: list):
    n = spec.dim
    ys = env[n:]
    if spec.kind == "expression":
        return expr.evaluate(spec.F, env)
    alpha2 = _quadratic(spec.a, env, ys)
    alpha = alpha2.sqrt() if isinstance(alpha2, Jet) else expr._sqrt(alpha2, expr.SourceSpan(0, 0))
    if spec.kind == "riemannian":
        return alpha
    beta = 0.0
    for i in range(n):
        beta = beta + expr.evaluate(spec.b[i], env) * ys[i]
    return alpha + beta


def F_jet(spec: MetricSpec, p: EvalPoint, order: int) -> Jet:
    if p.dim != spec.dim:
        raise MetricError(f"point dimension {p.dim} != metric dimension {spec.dim}")
    env = seed_variables(p.x, p.y, order)
    try:
        F = _F_from_env(spec, env)
    except expr.ExprError as exc:
        raise MetricError(f"{spec.name}: cannot evaluate F at {p}: {exc}") from exc
    if not isinstance(F, Jet):
        F = Jet.constant(F, get_table(2 * spec.dim, order))
    if not F.value > 0:
        raise MetricError(f"{spec.name}: F = {F.value:.6g} is not positive at {p}")
    return F


def F_values(spec: MetricSpec, x, y) -> np.ndarray:
    """Plain floating-point F for arrays of points, shape (..., n) each."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    env = [x[..., i] for i in range(spec.dim)] + [y[..., i] for i in range(spec.dim)]
    return np.asarray(_F_from_env(spec, env), dtype=float) + np.zeros(x.shape[:-1])


def alpha_matrix(spec: MetricSpec, x) -> np.ndarray:
    """a_ij(x) for riemannian/randers specs (float evaluation)."""
    if spec.a is None:
        raise MetricError(f"{spec.name} has no Riemannian payload")
    x = np.asarray(x, dtype=float)
    env = [x[..., i] for i in range(spec.dim)] * 2
    out = np.empty(x.shape[:-1] + (spec.dim, spec.dim))
    for i in range(spec.dim):
        for j in range(spec.dim):
            out[..., i, j] = expr.evaluate(spec.a[i][j], env)
    return out


def randers_bound(spec: MetricSpec, samples: int = 256, seed: int = 0) -> float:
    """Largest ||beta||_alpha over the domain corners, centre and random points."""
    n = spec.dim
    lo, hi = spec.lower, spec.upper
    corners = np.array(np.meshgrid(*[[l, h] for l, h in zip(lo, hi)], indexing="ij")).reshape(n, -1).T
    rng = np.random.default_rng(seed)
    pts = np.vstack([corners, (lo + hi) / 2, rng.uniform(lo, hi, size=(samples, n))])
    worst = 0.0
    for x in pts:
        try:
            a = alpha_matrix(spec, x)
            env = list(x) * 2
            b = np.array([float(expr.evaluate(e, env)) for e in spec.b])
            worst = max(worst, float(np.sqrt(b @ np.linalg.solve(a, b))))
        except (expr.ExprError, np.linalg.LinAlgError):
            return float("inf")
    return worst


# ---------------------------------------------------------------------------
# regularity and sampling

@dataclass
class ConvexityReport:
    point: EvalPoint
    eigenvalues: list[float]
    min_eigenvalue: float
    cholesky_ok: bool

    @property
    def positive_definite(self) -> bool:
        return self.cholesky_ok and self.min_eigenvalue > 0


def fundamental_matrix(spec: MetricSpec, p: EvalPoint) -> np.ndarray:
    n = spec.dim
    F = F_jet(spec, p, 2)
    F2 = F * F
    g = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            e = [0] * (2 * n)
            e[n + i] += 1
            e[n + j] += 1
            g[i, j] = 0.5 * F2.partial(tuple(e))
    return g


def check_strong_convexity(spec: MetricSpec, p: EvalPoint) -> ConvexityReport:
    g = fundamental_matrix(spec, p)
    eig = np.linalg.eigvalsh(g)
    try:
        np.linalg.cholesky(g)
        ok = True
    except np.linalg.LinAlgError:
        ok = False
    return ConvexityReport(p, eig.tolist(), float(eig[0]), ok)


@dataclass
class SampleSet:
    spec_name: str
    points: list[EvalPoint]
    seed: int
    count: int
    rejections: int = 0
    rejection_reasons: dict = field(default_factory=dict)


class SamplingError(MetricError):
    pass


def is_regular(spec: MetricSpec, p: EvalPoint) -> tuple[bool, str]:
    try:
        rep = check_strong_convexity(spec, p)
    except MetricError as exc:
        return False, "F not positive" if "not positive" in str(exc) else "evaluation failed"
    if not rep.positive_definite:
        return False, "g not positive definite"
    if rep.eigenvalues[0] < spec.min_eigen_ratio * rep.eigenvalues[-1]:
        return False, "g near-degenerate"
    return True, ""


def sample(spec: MetricSpec, count: int, seed: int) -> SampleSet:
    """Deterministic regular sample points of the slit tangent bundle over the domain."""
    if count < 1:
        raise SamplingError("count must be >= 1")
    rng = np.random.default_rng(seed)
    n = spec.dim
    lo, hi = spec.lower, spec.upper
    points: list[EvalPoint] = []
    reasons: dict[str, int] = {}
    attempts = 0
    max_attempts = 10 * count
    while len(points) < count:
        if attempts >= max_attempts:
            raise SamplingError(
                f"{spec.name}: rejection rate above 90% after {attempts} attempts ({reasons})"
            )
        attempts += 1
        x = rng.uniform(lo, hi)
        d = rng.normal(size=n)
        y = d / np.linalg.norm(d) * rng.uniform(0.5, 2.0)
        p = EvalPoint(tuple(x), tuple(y))
        ok, why = is_regular(spec, p)
        if ok:
            points.append(p)
        else:
            reasons[why] = reasons.get(why, 0) + 1
    return SampleSet(spec.name, points, seed, count, attempts - count, dict(sorted(reasons.items())))


def riemannian_as_expression(spec: MetricSpec) -> MetricSpec:
    """Re-encode a riemannian spec as an expression spec (same F)."""
    if spec.kind != "riemannian":
        raise MetricError("only riemannian specs can be re-encoded")
    n = spec.dim
    terms = []
    for i in range(n):
        for j in range(i, n):
            coef = f"({expr.to_source(spec.a[i][j])})"
            mono = f"y{i + 1}*y{j + 1}"
            terms.append(f"{coef}*{mono}" if i == j else f"2*{coef}*{mono}")
    F = expr.parse(f"sqrt({' + '.join(terms)})")
    return MetricSpec(spec.name + "-expr", n, "expression", spec.domain, F=F, notes=spec.notes,
                      min_eigen_ratio=spec.min_eigen_ratio)


def make_expression_spec(name: str, F: str, dim: int, domain: Sequence[Sequence[float]] | None = None,
                         min_eigen_ratio: float = 1e-3) -> MetricSpec:
    domain = domain or [(-1.0, 1.0)] * dim
    node = expr.validate(expr.parse(F), dim)
    return MetricSpec(name, dim, "expression", tuple((float(a), float(b)) for a, b in domain), F=node,
                      min_eigen_ratio=min_eigen_ratio)
