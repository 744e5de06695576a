"""Sample-based metric classification and generalized P-reducible data.

Verdicts mean "numerically true at every sampled point": each class has a
scale-free residual (0-homogeneous in y) whose worst value over the sample
set is compared with a threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calculus import DEFAULT_ORDER, Geometry, GeometryCache, GeometryError, geodesic_flow
from .jet import JetError
from .metric import EvalPoint, MetricError, MetricSpec, SampleSet

TAU = 1e-7
TAU_DEG = 1e-6
FLOW_STEP = 1e-3
MAX_FAILURE_RATE = 0.2

CLASSES = (
    "riemannian",
    "c_reducible",
    "p_reducible",
    "gen_p_reducible",
    "berwald",
    "landsberg",
    "weakly_landsberg",
    "stretch",
    "scalar_flag_curvature",
)

# premise => conclusion, checked on every report
IMPLICATIONS = (
    ("riemannian", "c_reducible"),
    ("c_reducible", "p_reducible"),
    ("c_reducible", "gen_p_reducible"),
    ("p_reducible", "gen_p_reducible"),
    ("berwald", "landsberg"),
    ("landsberg", "weakly_landsberg"),
    ("landsberg", "stretch"),
)

EVAL_ERRORS = (MetricError, GeometryError, JetError, ArithmeticError, np.linalg.LinAlgError)


class ClassificationError(RuntimeError):
    pass


@dataclass(frozen=True)
class Thresholds:
    tau: float = TAU
    tau_deg: float = TAU_DEG
    flow_step: float = FLOW_STEP

    def to_dict(self) -> dict:
        return {"tau": self.tau, "tau_deg": self.tau_deg, "flow_step": self.flow_step}


def point_measures(geom: Geometry) -> dict[str, float]:
    """Scale-free magnitudes of the class-defining tensors at one point."""
    K, fit_residual = geom.scalar_curvature_fit()
    return {
        "riemannian": geom.scale_free_norm(geom.cartan()),
        "c_reducible": geom.scale_free_norm(geom.matsumoto()),
        "p_reducible": geom.scale_free_norm(geom.pbar()),
        "berwald": geom.scale_free_norm(geom.berwald_curvature()),
        "landsberg": geom.scale_free_norm(geom.landsberg()),
        "weakly_landsberg": geom.scale_free_norm(geom.mean_landsberg()),
        "stretch": geom.scale_free_norm(geom.stretch()),
        "scalar_flag_curvature": fit_residual,
        "K": K,
    }


# ---------------------------------------------------------------------------
# flow derivatives

def flow_rate(cache: GeometryCache, spec: MetricSpec, p: EvalPoint,
              fn: Callable[[Geometry], np.ndarray | float | None], h: float = FLOW_STEP):
    """d/dt fn(phi_t(p)) at t = 0, central difference along the geodesic flow."""
    fp = fn(cache.get(spec, geodesic_flow(spec, p, h)))
    fm = fn(cache.get(spec, geodesic_flow(spec, p, -h)))
    if fp is None or fm is None:
        return None
    return (np.asarray(fp) - np.asarray(fm)) / (2.0 * h)


def flow_transport(cache: GeometryCache, spec: MetricSpec, p: EvalPoint,
                   fn: Callable[[Geometry], np.ndarray], h: float = FLOW_STEP) -> np.ndarray | None:
    """T_{..|s} y^s of an all-lower tensor from its rate along the flow.

    Along a geodesic the Berwald transport equals dT/dt minus one N-term per slot.
    """
    rate = flow_rate(cache, spec, p, fn, h)
    if rate is None:
        return None
    geom = cache.get(spec, p)
    T = np.asarray(fn(geom))
    N = np.asarray(geom.N_field.value)
    out = np.array(rate, dtype=float)
    for slot in range(T.ndim):
        out -= np.moveaxis(np.tensordot(T, N, axes=([slot], [0])), -1, slot)
    return out


# ---------------------------------------------------------------------------
# generalized P-reducible fit

@dataclass
class GPFit:
    point: EvalPoint
    lam: float | None
    a: list[float]
    residual: float
    m_norm: float
    degenerate: bool
    a_dot_y: float
    lam_prime: float | None = None
    a_prime: list[float] | None = None

    def to_dict(self) -> dict:
        return {
            "point": self.point.to_dict(),
            "lambda": self.lam,
            "a": self.a,
            "residual": self.residual,
            "M_norm": self.m_norm,
            "degenerate": self.degenerate,
            "a_dot_y": self.a_dot_y,
            "lambda_prime": self.lam_prime,
            "a_prime": self.a_prime,
        }


def _lambda(geom: Geometry, tau_deg: float) -> float | None:
    M, Mbar = geom.matsumoto(), geom.pbar()
    if geom.scale_free_norm(M) <= tau_deg:
        return None
    return geom.inner(Mbar, M) / geom.inner(M, M)


def _a_vector(geom: Geometry, lam: float | None) -> np.ndarray:
    n = geom.n
    J = np.asarray(geom.J_field.value)
    I = np.asarray(geom.I_field.value)
    return (J - (lam or 0.0) * I) / (n + 1)


def fit_point(geom: Geometry, thresholds: Thresholds = Thresholds()) -> GPFit:
    """Least-squares lambda with Mbar ~ lambda M, and a_i from the trace relation."""
    M, Mbar = geom.matsumoto(), geom.pbar()
    m_norm = geom.scale_free_norm(M)
    lam = _lambda(geom, thresholds.tau_deg)
    if lam is None:
        residual = geom.scale_free_norm(Mbar)
    else:
        residual = geom.norm_values(Mbar.values - lam * M.values, "lll")
    a = _a_vector(geom, lam)
    # a_i is 0-homogeneous; a.y is compared against F
    a_dot_y = float(abs(a @ geom.y) / geom.F)
    return GPFit(geom.point, lam, a.tolist(), residual, m_norm, lam is None, a_dot_y)


def fit_gp_data(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                thresholds: Thresholds = Thresholds(), with_flow: bool = False) -> list[GPFit]:
    """Per-point (lambda, a_i, residual); optionally lambda' and a'_i along the flow."""
    cache = GeometryCache() if cache is None else cache
    fits = []
    for p in samples.points:
        fit = fit_point(cache.get(spec, p), thresholds)
        if with_flow and not fit.degenerate:
            attach_flow_derivatives(cache, spec, fit, thresholds)
        fits.append(fit)
    return fits


def attach_flow_derivatives(cache: GeometryCache, spec: MetricSpec, fit: GPFit,
                            thresholds: Thresholds = Thresholds()) -> GPFit:
    h = thresholds.flow_step
    fit.lam_prime = flow_rate(cache, spec, fit.point, lambda g: _lambda(g, thresholds.tau_deg), h)
    if fit.lam_prime is not None:
        fit.lam_prime = float(fit.lam_prime)

        def a_field(g: Geometry) -> np.ndarray:
            return _a_vector(g, _lambda(g, thresholds.tau_deg))

        ap = flow_transport(cache, spec, fit.point, a_field, h)
        fit.a_prime = None if ap is None else ap.tolist()
    return fit


# ---------------------------------------------------------------------------
# classification

@dataclass
class ClassificationReport:
    spec: str
    points: int
    failures: int
    verdicts: dict[str, bool]
    residuals: dict[str, float]
    thresholds: Thresholds
    fits: list[GPFit] = field(default_factory=list)
    K: list[float] = field(default_factory=list)
    implication_violations: list[str] = field(default_factory=list)
    failure_messages: list[str] = field(default_factory=list)

    @property
    def internal_error(self) -> bool:
        return bool(self.implication_violations)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "points": self.points,
            "failures": self.failures,
            "failure_messages": self.failure_messages,
            "thresholds": self.thresholds.to_dict(),
            "verdicts": {c: self.verdicts[c] for c in CLASSES},
            "worst_residuals": {c: self.residuals[c] for c in CLASSES},
            "implication_violations": self.implication_violations,
            "internal_error": self.internal_error,
            "K": self.K,
            "fits": [f.to_dict() for f in self.fits],
        }


def _evaluate_points(spec, samples, cache):
    good, errors = [], []
    for p in samples.points:
        try:
            geom = cache.get(spec, p)
            good.append((p, point_measures(geom)))
        except EVAL_ERRORS as exc:
            errors.append(f"{p.to_dict()}: {exc}")
    total = len(samples.points)
    if total and len(errors) > MAX_FAILURE_RATE * total:
        raise ClassificationError(
            f"{spec.name}: {len(errors)} of {total} points failed to evaluate; first: {errors[0]}"
        )
    return good, errors


def classify_basic(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                   thresholds: Thresholds = Thresholds(), order: int = DEFAULT_ORDER) -> ClassificationReport:
    cache = GeometryCache(order) if cache is None else cache
    good, errors = _evaluate_points(spec, samples, cache)
    residuals = {c: 0.0 for c in CLASSES}
    Ks = []
    for _, m in good:
        for c in CLASSES:
            if c in m:
                residuals[c] = max(residuals[c], m[c])
        Ks.append(m["K"])
    fits = [fit_point(cache.get(spec, p), thresholds) for p, _ in good]
    residuals["gen_p_reducible"] = max((f.residual for f in fits), default=0.0)
    verdicts = {c: residuals[c] <= thresholds.tau for c in CLASSES}
    violations = [f"{a} => {b}" for a, b in IMPLICATIONS if verdicts[a] and not verdicts[b]]
    for f in fits:
        if f.a_dot_y > 1e-9 * max(1.0, float(np.linalg.norm(f.a))):
            violations.append(f"a_i y^i = {f.a_dot_y:.3e} at {f.point.to_dict()}")
    return ClassificationReport(spec.name, len(good), len(errors), verdicts, residuals, thresholds,
                                fits, Ks, violations, errors)


# ---------------------------------------------------------------------------
# scalar-curvature obstruction (lambda' + lambda^2 + K F^2) M = 0

MIN_NONDEGENERATE = 5


@dataclass
class ConditionPoint:
    point: EvalPoint
    lam: float | None
    lam_prime: float | None
    K: float
    F: float
    v: float | None
    M_norm: float
    product: float

    def to_dict(self) -> dict:
        return {"point": self.point.to_dict(), "lambda": self.lam, "lambda_prime": self.lam_prime,
                "K": self.K, "F": self.F, "v": self.v, "M_norm": self.M_norm, "product": self.product}


@dataclass
class ConditionReport:
    spec: str
    evaluable: bool
    branch: str
    reason: str
    points: list[ConditionPoint]
    scalar_flag_curvature: bool

    def to_dict(self) -> dict:
        return {"spec": self.spec, "evaluable": self.evaluable, "branch": self.branch, "reason": self.reason,
                "scalar_flag_curvature": self.scalar_flag_curvature,
                "points": [p.to_dict() for p in self.points]}


def theorem1_condition(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                       thresholds: Thresholds = Thresholds()) -> ConditionReport:
    """v = lambda' + lambda^2 + K F^2 per point and the product ||v M|| F."""
    cache = GeometryCache() if cache is None else cache
    rows = []
    scalar_ok = True
    for p in samples.points:
        geom = cache.get(spec, p)
        K, res = geom.scalar_curvature_fit()
        scalar_ok &= res <= thresholds.tau
        fit = fit_point(geom, thresholds)
        if not fit.degenerate:
            attach_flow_derivatives(cache, spec, fit, thresholds)
        F = geom.F
        if fit.lam is None or fit.lam_prime is None:
            v = None
            product = fit.m_norm if fit.m_norm > thresholds.tau_deg else 0.0
        else:
            v = fit.lam_prime + fit.lam**2 + K * F**2
            # v is 2-homogeneous; divide by F^2 to keep the product scale-free
            product = abs(v) / F**2 * fit.m_norm
        rows.append(ConditionPoint(p, fit.lam, fit.lam_prime, K, F, v, fit.m_norm, product))
    nondeg = [r for r in rows if r.v is not None]
    if not scalar_ok:
        return ConditionReport(spec.name, False, "not-applicable",
                               "metric is not of scalar flag curvature on the sample", rows, False)
    if len(nondeg) < MIN_NONDEGENERATE:
        if all(r.M_norm <= thresholds.tau_deg for r in rows):
            return ConditionReport(spec.name, False, "conclusion",
                                   "M = 0 at every point: product vanishes regardless of v", rows, True)
        return ConditionReport(spec.name, False, "insufficient",
                               f"only {len(nondeg)} non-degenerate points (< {MIN_NONDEGENERATE})", rows, True)
    scale = max(abs(r.v) / r.F**2 for r in nondeg)
    if scale <= 1e-6:
        branch, reason = "hypothesis-fails", "lambda' + lambda^2 + K F^2 = 0: hypothesis not met"
    elif all(r.M_norm <= thresholds.tau_deg for r in nondeg):
        branch, reason = "conclusion", "v != 0 and M = 0"
    else:
        branch, reason = "violation", "v != 0 but M != 0"
    return ConditionReport(spec.name, True, branch, reason, rows, True)
