"""Numerical identity harness.

Each identity is evaluated pointwise as two independently computed sides.
A point passes when the relative residual

    ||lhs - rhs|| / (||lhs|| + ||rhs|| + 1e-30)

is within tolerance, or when both sides are zero at the scale-free level
(reported as the "0=0" branch so trivial passes stay visible).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .calculus import Geometry, GeometryCache
from .classify import (
    EVAL_ERRORS,
    Thresholds,
    attach_flow_derivatives,
    fit_point,
    flow_transport,
)
from .jet import Jet, einsum
from .metric import EvalPoint, MetricSpec, SampleSet, make_expression_spec
from .oracle import FDOracle

EPS = 1e-30
ZERO_TOL = 1e-9

TOL_MOEQ = 1e-6
TOL_SCALAR = 1e-5
TOL_TRANSPORT = 1e-7
TOL_P_ALGEBRA = 1e-8
TOL_STRETCH = 1e-6
TOL_S5 = 1e-5
TOL_LEMQ = 1e-7
TOL_LADDER_JET = 1e-9
TOL_LADDER_FD = 1e-4

ALL = "all metrics"
SCALAR = "scalar flag curvature"
GEN_P = "generalized P-reducible"
STRETCH = "stretch"
GEN_P_STRETCH = "generalized P-reducible and stretch"


@dataclass
class PointRecord:
    point: EvalPoint
    residual: float
    lhs_scale: float
    rhs_scale: float
    branch: str
    note: str = ""

    def to_dict(self) -> dict:
        return {"point": self.point.to_dict(), "residual": self.residual, "lhs_scale": self.lhs_scale,
                "rhs_scale": self.rhs_scale, "branch": self.branch, "note": self.note}


@dataclass
class IdentityCheck:
    identity: str
    spec: str
    applicability: str
    applicable: bool
    tolerance: float
    verdict: str                       # pass | fail | skipped | degenerate
    worst_residual: float = 0.0
    lhs_scale: float = 0.0
    rhs_scale: float = 0.0
    branch: str = ""
    reason: str = ""
    excluded: int = 0
    records: list[PointRecord] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        """False only for a genuine violation."""
        return self.verdict != "fail"

    def to_dict(self, with_points: bool = True) -> dict:
        out = {
            "identity": self.identity,
            "spec": self.spec,
            "applicability": self.applicability,
            "applicable": self.applicable,
            "tolerance": self.tolerance,
            "verdict": self.verdict,
            "worst_residual": self.worst_residual,
            "lhs_scale": self.lhs_scale,
            "rhs_scale": self.rhs_scale,
            "branch": self.branch,
            "reason": self.reason,
            "excluded": self.excluded,
        }
        if with_points:
            out["points"] = [r.to_dict() for r in self.records]
        return out


def skipped(identity: str, spec: str, applicability: str, tol: float, reason: str) -> IdentityCheck:
    return IdentityCheck(identity, spec, applicability, False, tol, "skipped", reason=reason)


def compare(geom: Geometry, lhs: np.ndarray, rhs: np.ndarray, variance: str, degree: int,
            zero_tol: float = ZERO_TOL) -> PointRecord:
    """Relative residual of two tensors of the given variance and homogeneity degree."""
    nl = geom.norm_values(lhs, variance)
    nr = geom.norm_values(rhs, variance)
    nd = geom.norm_values(np.asarray(lhs) - np.asarray(rhs), variance)
    scale = geom.F ** (-degree)
    sl, sr = nl * scale, nr * scale
    branch = "0=0" if max(sl, sr) <= zero_tol else "nontrivial"
    return PointRecord(geom.point, nd / (nl + nr + EPS), sl, sr, branch)


def aggregate(identity: str, spec: str, applicability: str, tol: float,
              records: Sequence[PointRecord], excluded: int = 0, reason: str = "") -> IdentityCheck:
    nontrivial = [r for r in records if r.branch == "nontrivial"]
    worst = max((r.residual for r in nontrivial), default=0.0)
    verdict = "pass" if worst <= tol else "fail"
    if not records:
        branch = "vacuous"
        reason = reason or "no evaluable points"
    else:
        branch = "nontrivial" if nontrivial else "0=0"
    return IdentityCheck(identity, spec, applicability, True, tol, verdict, worst,
                         max((r.lhs_scale for r in records), default=0.0),
                         max((r.rhs_scale for r in records), default=0.0),
                         branch, reason, excluded, list(records))


def _pointwise(spec: MetricSpec, samples: SampleSet, cache: GeometryCache,
               fn: Callable[[Geometry], list[PointRecord]], ids: Sequence[str],
               applicability: Sequence[str], tols: Sequence[float]) -> list[IdentityCheck]:
    per_id: list[list[PointRecord]] = [[] for _ in ids]
    for p in samples.points:
        recs = fn(cache.get(spec, p))
        for bucket, rec in zip(per_id, recs):
            if rec is not None:
                bucket.append(rec)
    return [aggregate(i, spec.name, a, t, r) for i, a, t, r in zip(ids, applicability, tols, per_id)]


def _sym3(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    return np.einsum("i,jk->ijk", v, h) + np.einsum("j,ik->ijk", v, h) + np.einsum("k,ij->ijk", v, h)


# ---------------------------------------------------------------------------
# universal identities relating Landsberg and Riemann curvature

def _moeq_records(geom: Geometry) -> list[PointRecord]:
    y = geom.y
    g = geom.g0
    C = np.asarray(geom.C_field.value)
    I = np.asarray(geom.I_field.value)
    R = np.asarray(geom.R_field.value)
    Rd = np.asarray(geom.Rdot_field.value)         # [m, k, j] = dR^m_k / dy^j
    Lt = np.einsum("ijkm,m->ijk", np.asarray(geom.Lcov_field.value), y)
    lhs1 = Lt + np.einsum("ijm,mk->ijk", C, R)
    rhs1 = (-np.einsum("im,mkj->ijk", g, Rd) / 3 - np.einsum("jm,mki->ijk", g, Rd) / 3
            - np.einsum("im,mjk->ijk", g, Rd) / 6 - np.einsum("jm,mik->ijk", g, Rd) / 6)
    lhs2 = np.asarray(geom.transport(geom.J_field).value) + I @ R
    rhs2 = -(2 * np.einsum("mkm->k", Rd) + np.einsum("mmk->k", Rd)) / 3
    return [compare(geom, lhs1, rhs1, "lll", 1), compare(geom, lhs2, rhs2, "l", 1)]


def check_moeq(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
               tol: float = TOL_MOEQ) -> list[IdentityCheck]:
    """Transport of L (resp. J) against y-derivatives of the Riemann curvature."""
    cache = GeometryCache() if cache is None else cache
    return _pointwise(spec, samples, cache, _moeq_records, ("Moeq1", "Moeq2"), (ALL, ALL), (tol, tol))


# ---------------------------------------------------------------------------
# scalar flag curvature chain

def scalar_curvature_applies(spec: MetricSpec, samples: SampleSet, cache: GeometryCache,
                             tau: float) -> tuple[bool, str]:
    if spec.dim == 2:
        return True, "n = 2: every metric has scalar flag curvature"
    worst = max(cache.get(spec, p).scalar_curvature_fit()[1] for p in samples.points)
    if worst <= tau:
        return True, f"scalar curvature fit residual {worst:.2e} <= {tau:.0e}"
    return False, f"not of scalar flag curvature: fit residual {worst:.2e} > {tau:.0e}"


def _scalar_records(geom: Geometry, h_flow: float, cache: GeometryCache) -> list[PointRecord]:
    n = geom.n
    y, g, F2 = geom.y, geom.g0, geom.F ** 2
    ylow = g @ y
    h = np.asarray(geom.h_field.value)
    K = float(geom.K_field.value)
    Kd = np.asarray(geom.Kdot_field.value)
    C = np.asarray(geom.C_field.value)
    I = np.asarray(geom.I_field.value)
    R = np.asarray(geom.R_field.value)
    Rd = np.asarray(geom.Rdot_field.value)
    h_mixed = np.eye(n) - np.outer(y, ylow) / F2
    rec = []
    # R^i_k = K F^2 h^i_k
    rec.append(compare(geom, R, K * F2 * h_mixed, "ul", 2))
    # its y-derivative, [i, k, l]
    rhs = (np.einsum("l,ik->ikl", Kd, F2 * h_mixed)
           + K * (2 * np.einsum("l,ik->ikl", ylow, np.eye(n))
                  - np.einsum("il,k->ikl", np.eye(n), ylow)
                  - np.einsum("i,kl->ikl", y, g)))
    rec.append(compare(geom, Rd, rhs, "ull", 1))
    Lt = np.einsum("ijkm,m->ijk", np.asarray(geom.Lcov_field.value), y)
    rec.append(compare(geom, Lt, -F2 / 3 * (_sym3(Kd, h) + 3 * K * C), "lll", 1))
    Jt = np.asarray(geom.transport(geom.J_field).value)
    rec.append(compare(geom, Jt, -F2 / 3 * ((n + 1) * Kd + 3 * K * I), "l", 1))
    # second transport of M from the flow derivative of Mbar
    M2 = flow_transport(cache, geom.spec, geom.point, lambda gm: np.asarray(gm.Mbar_field.value), h_flow)
    M = np.asarray(geom.M_field.value)
    r = compare(geom, M2, -K * F2 * M, "lll", 1)
    jet_M2 = np.asarray(geom.transport(geom.Mbar_field).value)
    r.note = f"flow vs jet second transport: {geom.norm_values(M2 - jet_M2, 'lll') / geom.F:.2e}"
    rec.append(r)
    return rec


SCALAR_IDS = ("Kikiso1", "MKdiff", "AZeq1", "AZeq2", "Sijk")


def check_scalar_chain(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                       thresholds: Thresholds = Thresholds(), tol: float = TOL_SCALAR) -> list[IdentityCheck]:
    cache = GeometryCache() if cache is None else cache
    ok, why = scalar_curvature_applies(spec, samples, cache, thresholds.tau)
    if not ok:
        return [skipped(i, spec.name, SCALAR, tol, why) for i in SCALAR_IDS]
    checks = _pointwise(spec, samples, cache, lambda gm: _scalar_records(gm, thresholds.flow_step, cache),
                        SCALAR_IDS, (SCALAR,) * 5, (tol,) * 5)
    for c in checks:
        c.reason = why
    return checks


# ---------------------------------------------------------------------------
# generalized P-reducible chain

def _mbar_transport_record(geom: Geometry) -> PointRecord:
    Mt = np.asarray(geom.transport(geom.M_field).value)
    return compare(geom, np.asarray(geom.Mbar_field.value), Mt, "lll", 0)


def check_p_chain(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                  thresholds: Thresholds = Thresholds(), tol_transport: float = TOL_TRANSPORT,
                  tol_algebra: float = TOL_P_ALGEBRA) -> list[IdentityCheck]:
    """Mbar = M_{|s} y^s, then the two equivalent forms of the reducibility fit and the J trace."""
    cache = GeometryCache() if cache is None else cache
    transport = []
    p2p6: list[PointRecord] = []
    p3: list[PointRecord] = []
    excluded = 0
    for p in samples.points:
        geom = cache.get(spec, p)
        transport.append(_mbar_transport_record(geom))
        fit = fit_point(geom, thresholds)
        if fit.degenerate:
            excluded += 1
            continue
        n, lam, a = geom.n, fit.lam, np.asarray(fit.a)
        h = np.asarray(geom.h_field.value)
        L = np.asarray(geom.L_field.value)
        C = np.asarray(geom.C_field.value)
        r_p2 = geom.norm_values(L - lam * C - _sym3(a, h), "lll")
        diff = abs(r_p2 - fit.residual)
        scale = max(geom.norm_values(L, "lll"), geom.scale_free_norm(geom.pbar()))
        p2p6.append(PointRecord(p, diff, r_p2, fit.residual, "nontrivial" if scale > ZERO_TOL else "0=0",
                                "absolute difference of the two residual forms"))
        J = np.asarray(geom.J_field.value)
        I = np.asarray(geom.I_field.value)
        p3.append(compare(geom, J, lam * I + (n + 1) * a, "l", 0))
    reason = f"{excluded} degenerate-M points excluded" if excluded else ""
    out = [aggregate("MbarTransport", spec.name, ALL, tol_transport, transport)]
    out.append(aggregate("P2P6", spec.name, GEN_P, tol_algebra, p2p6, excluded, reason))
    out.append(aggregate("P3", spec.name, GEN_P, tol_algebra, p3, excluded, reason))
    return out


# ---------------------------------------------------------------------------
# stretch chain

def check_stretch_chain(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                        thresholds: Thresholds = Thresholds(), tol_s2: float = TOL_STRETCH,
                        tol_s5: float = TOL_S5) -> list[IdentityCheck]:
    """Sigma y vs transport of L; C-reducibility conclusion; transported reducibility relation."""
    cache = GeometryCache() if cache is None else cache
    s2, m_rec, s5 = [], [], []
    sigma_worst = fit_worst = 0.0
    fits = []
    for p in samples.points:
        geom = cache.get(spec, p)
        y = geom.y
        sig_y = np.einsum("ijkl,l->ijk", np.asarray(geom.sigma_field.value), y)
        Lt = np.einsum("ijkm,m->ijk", np.asarray(geom.Lcov_field.value), y)
        s2.append(compare(geom, sig_y, 2 * Lt, "lll", 1))
        sigma_worst = max(sigma_worst, geom.scale_free_norm(geom.stretch()))
        fit = fit_point(geom, thresholds)
        fit_worst = max(fit_worst, fit.residual)
        fits.append((geom, fit))
    out = [aggregate("S2", spec.name, ALL, tol_s2, s2)]
    is_stretch = sigma_worst <= thresholds.tau
    is_gp = fit_worst <= thresholds.tau
    hyp = (f"stretch residual {sigma_worst:.2e}, generalized P-reducible residual {fit_worst:.2e} "
           f"(tau {thresholds.tau:.0e})")
    if not (is_stretch and is_gp):
        why = "hypotheses not met: " + hyp
        worst_m = max(geom.scale_free_norm(geom.matsumoto()) for geom, _ in fits)
        if worst_m <= thresholds.tau:
            # the final display can still be checked; it just is not a consequence here
            recs = [PointRecord(geom.point, geom.scale_free_norm(geom.matsumoto()), fit.m_norm, 0.0, "0=0")
                    for geom, fit in fits]
            out.append(IdentityCheck("S8", spec.name, GEN_P_STRETCH, False, thresholds.tau, "pass", worst_m,
                                     worst_m, 0.0, "conclusion", f"M = 0 at every sample; {why}", 0, recs))
        else:
            out.append(skipped("S8", spec.name, GEN_P_STRETCH, thresholds.tau, why))
        out.append(skipped("S5", spec.name, GEN_P_STRETCH, tol_s5, why))
        return out

    # transported relation with flow-differenced lambda', a'
    excluded = 0
    denominators = []
    for geom, fit in fits:
        if fit.degenerate:
            excluded += 1
            continue
        attach_flow_derivatives(cache, spec, fit, thresholds)
        if fit.lam_prime is None or fit.a_prime is None:
            excluded += 1
            continue
        lam, a, ap = fit.lam, np.asarray(fit.a), np.asarray(fit.a_prime)
        h = np.asarray(geom.h_field.value)
        C = np.asarray(geom.C_field.value)
        Lt = np.einsum("ijkm,m->ijk", np.asarray(geom.Lcov_field.value), geom.y)
        rhs = (fit.lam_prime + lam**2) * C + _sym3(lam * a + ap, h)
        s5.append(compare(geom, Lt, rhs, "lll", 1))
        denominators.append(abs(fit.lam_prime + lam**2) / geom.F**2)
    reason = f"{excluded} degenerate-M points excluded" if excluded else ""
    out_s5 = aggregate("S5", spec.name, GEN_P_STRETCH, tol_s5, s5, excluded, reason)

    # conclusion: M = 0
    worst_m = max(geom.scale_free_norm(geom.matsumoto()) for geom, _ in fits)
    for geom, fit in fits:
        m_rec.append(PointRecord(geom.point, geom.scale_free_norm(geom.matsumoto()), fit.m_norm, 0.0,
                                 "nontrivial" if fit.m_norm > ZERO_TOL else "0=0"))
    check = IdentityCheck("S8", spec.name, GEN_P_STRETCH, True, thresholds.tau, "pass", worst_m,
                          worst_m, 0.0, "", hyp, 0, m_rec)
    if worst_m <= thresholds.tau:
        check.branch = "conclusion"
        check.reason = "M = 0 at every sample; " + hyp
    elif denominators and max(denominators) <= thresholds.tau_deg:
        check.verdict = "degenerate"
        check.branch = "degenerate-denominator"
        check.reason = (f"M != 0 (worst {worst_m:.2e}) but lambda' + lambda^2 = 0 at every point "
                        f"(max {max(denominators):.1e}): the proof divides by this quantity, so the "
                        "conclusion is not forced")
    else:
        check.verdict = "fail"
        check.branch = "violation"
        check.reason = f"M != 0 (worst {worst_m:.2e}) with lambda' + lambda^2 != 0"
    out.extend([check, out_s5])
    return out


# ---------------------------------------------------------------------------
# decomposition of the commutator of covariant derivatives of L

def _lemq_record(geom: Geometry) -> PointRecord:
    Lc = np.asarray(geom.Lcov_field.value)             # [i, j, k, l] = L_{ijk|l}
    L = np.asarray(geom.L_field.value)
    sigma = np.asarray(geom.sigma_field.value)
    # L^s_{jl} with the first index raised
    Lup = np.einsum("sm,mjl->sjl", geom.ginv0, L)
    D = np.einsum("ijlk->ijkl", Lc) - Lc               # [i, j, k, l] = L_{ijl|k} - L_{ijk|l}
    P = np.einsum("isk,sjl->ijkl", L, Lup) - np.einsum("isl,sjk->ijkl", L, Lup)
    Q = D + P
    Qs = (Q + Q.transpose(1, 0, 2, 3)) / 2
    Qa = (Q - Q.transpose(1, 0, 2, 3)) / 2
    parts = [compare(geom, Qs, D, "llll", 0), compare(geom, Qa, P, "llll", 0),
             compare(geom, Qs, -sigma / 2, "llll", 0)]
    anti = geom.norm_values(P + P.transpose(1, 0, 2, 3), "llll") / (geom.norm_values(P, "llll") + EPS)
    worst = max(parts, key=lambda r: r.residual if r.branch == "nontrivial" else 0.0)
    branch = "nontrivial" if any(r.branch == "nontrivial" for r in parts) else "0=0"
    return PointRecord(geom.point, worst.residual if branch == "nontrivial" else 0.0,
                       max(r.lhs_scale for r in parts), max(r.rhs_scale for r in parts), branch,
                       "sym/antisym/stretch residuals " + ", ".join(f"{r.residual:.1e}" for r in parts)
                       + f"; quadratic part antisymmetry defect {anti:.1e}")


def check_lemQ(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
               tol: float = TOL_LEMQ) -> IdentityCheck:
    """Symmetric part is the derivative part (= -Sigma/2), antisymmetric part the quadratic one.

    All (k, l) pairs are checked at once.
    """
    cache = GeometryCache() if cache is None else cache
    return _pointwise(spec, samples, cache, lambda gm: [_lemq_record(gm)], ("LemQ",), (ALL,), (tol,))[0]


# ---------------------------------------------------------------------------
# invariant ladder (homogeneity, y-kill, traces, symmetries, connection)

def _ladder_item(geom: Geometry, defect, variance: str, degree: int, ref: float) -> float:
    """Scale-free absolute defect measured against max(1, ref)."""
    return geom.norm_values(np.asarray(defect), variance) * geom.F ** (-degree) / max(1.0, ref)


def _sym_defect(geom: Geometry, T: np.ndarray, variance: str, degree: int) -> float:
    """Worst scale-free defect under slot permutations."""
    ref = geom.norm_values(T, variance) * geom.F ** (-degree)
    return max(_ladder_item(geom, T - T.transpose(perm), variance, degree, ref)
               for perm in itertools.permutations(range(T.ndim)))


def _tensor_ladder(geom: Geometry, n: int, y, g, ginv, F2, t: dict) -> dict[str, float]:
    """Items common to the jet and finite-difference paths; ``t`` maps names to arrays."""
    sf = lambda T, var, deg: geom.norm_values(T, var) * geom.F ** (-deg)  # noqa: E731
    items = {}
    for name, var, deg in (("h", "ll", 0), ("C", "lll", -1), ("L", "lll", 0), ("M", "lll", -1),
                           ("Mbar", "lll", 0)):
        T = t[name]
        kill = np.tensordot(T, y, axes=([T.ndim - 1], [0]))
        items[f"ykill:{name}"] = _ladder_item(geom, kill, var[:-1], deg + 1, sf(T, var, deg))
    for name, deg in (("I", -1), ("J", 0)):
        items[f"ykill:{name}"] = abs(float(t[name] @ y)) * geom.F ** (-deg - 1) / max(1.0, sf(t[name], "l", deg))
    items["trace:h"] = abs(float(np.einsum("ij,ij->", ginv, t["h"])) - (n - 1))
    for src, tgt, deg in (("C", "I", -1), ("L", "J", 0), ("M", None, -1), ("Mbar", None, 0)):
        tr = np.einsum("jk,ijk->i", ginv, t[src])
        target = t[tgt] if tgt else np.zeros(n)
        items[f"trace:{src}"] = _ladder_item(geom, tr - target, "l", deg, sf(t[src], "lll", deg))
    for name, var, deg in (("g", "ll", 0), ("h", "ll", 0), ("C", "lll", -1), ("L", "lll", 0), ("M", "lll", -1),
                           ("Mbar", "lll", 0)):
        items[f"symmetry:{name}"] = _sym_defect(geom, t[name], var, deg)
    items["euler:gyy"] = abs(float(y @ g @ y) - F2) / F2
    items["connection:Ny"] = _ladder_item(geom, t["N"] @ y - 2 * t["G"], "u", 2, sf(t["G"], "u", 2))
    items["connection:By"] = _ladder_item(geom, t["berwald"] @ y - t["N"], "ul", 1, sf(t["N"], "ul", 1))
    return items


def ladder_jet(geom: Geometry) -> dict[str, float]:
    n, y = geom.n, geom.y
    names = {"g": geom.g_field, "h": geom.h_field, "C": geom.C_field, "I": geom.I_field, "L": geom.L_field,
             "J": geom.J_field, "M": geom.M_field, "Mbar": geom.Mbar_field, "G": geom.G_field,
             "N": geom.N_field, "berwald": geom.berwald_field}
    t = {k: np.asarray(v.value) for k, v in names.items()}
    items = _tensor_ladder(geom, n, y, geom.g0, geom.ginv0, geom.F ** 2, t)

    def euler(field: Jet, degree: int, variance: str):
        s = "ijk"[:len(field.shape)]
        d = einsum(f"{s}m,m->{s}", geom.dy(field), geom.y_field)
        defect = np.asarray(d.value) - degree * np.asarray(field.value)
        return _ladder_item(geom, defect, variance, degree, geom.norm_values(np.asarray(field.value), variance)
                            * geom.F ** (-degree))

    items["euler:F2"] = abs(float(einsum("m,m->", geom.dy(geom.F2), geom.y_field).value) - 2 * geom.F ** 2) \
        / geom.F ** 2
    items["euler:g"] = euler(geom.g_field, 0, "ll")
    items["euler:C"] = euler(geom.C_field, -1, "lll")
    sig = np.asarray(geom.sigma_field.value)
    items["symmetry:sigma"] = _ladder_item(geom, sig + sig.transpose(0, 1, 3, 2), "llll", 0,
                                           geom.norm_values(sig, "llll"))
    gcov = np.einsum("ijl,l->ij", np.asarray(geom.hcov(geom.g_field).value), y)
    items["metric:g|y"] = _ladder_item(geom, gcov, "ll", 1, 1.0)
    return items


def ladder_fd(spec: MetricSpec, p: EvalPoint, cache: GeometryCache) -> dict[str, float]:
    """Same ladder on the finite-difference pipeline (norms use the jet metric at the point)."""
    geom = cache.get(spec, p)
    t = FDOracle(spec, p).compute()
    n = spec.dim
    y = np.asarray(p.y)
    return _tensor_ladder(geom, n, y, t["g"], t["ginv"], float(t["F"]) ** 2, t)


def check_ladder(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                 path: str = "jet", tol: float | None = None) -> list[IdentityCheck]:
    """One check per ladder item; residuals are absolute and scale-free."""
    cache = GeometryCache() if cache is None else cache
    if tol is None:
        tol = TOL_LADDER_JET if path == "jet" else TOL_LADDER_FD
    per: dict[str, list[PointRecord]] = {}
    for p in samples.points:
        items = ladder_jet(cache.get(spec, p)) if path == "jet" else ladder_fd(spec, p, cache)
        for k, v in items.items():
            per.setdefault(k, []).append(PointRecord(p, v, v, 0.0, "nontrivial"))
    out = []
    for k in sorted(per):
        out.append(aggregate(f"ladder/{path}/{k}", spec.name, ALL, tol, per[k]))
    return out


# ---------------------------------------------------------------------------
# random regular test metrics

def random_metric(seed: int, dim: int) -> MetricSpec:
    """Perturbed Riemannian norm plus a quartic term and a small linear form.

    F = (alpha^4 + eps * sum_i w_i(x) y_i^4)^(1/4) + beta; with the small
    coefficients drawn here the result is strongly convex on [-1, 1]^n and
    is neither Riemannian nor Randers when eps > 0.
    """
    rng = np.random.default_rng(seed)

    def c(lo=0.05, hi=0.3):
        return f"{rng.uniform(lo, hi):.3f}"

    v = [f"x{i + 1}" for i in range(dim)]
    w = [f"y{i + 1}" for i in range(dim)]
    diag = " + ".join(f"(1 + {c()}*{v[(i + 1) % dim]}^2)*{w[i]}^2" for i in range(dim))
    off = f"{c()}*{v[0]}*{w[0]}*{w[1]}"
    alpha2 = f"({diag} + {off})"
    quartic = " + ".join(f"(1 + {c()}*{v[i]}^2)*{w[i]}^4" for i in range(dim))
    eps = c(0.2, 0.5)
    beta = " + ".join(f"{c(0.02, 0.1)}*{v[(i + 2) % dim]}*{w[i]}" for i in range(dim))
    F = f"({alpha2}^2 + {eps}*({quartic}))^(1/4) + {beta}"
    return make_expression_spec(f"random-{dim}d-{seed}", F, dim)


def random_metrics(count: int = 5, seed: int = 0) -> list[MetricSpec]:
    return [random_metric(seed + k, 2 + (k % 2)) for k in range(count)]


# ---------------------------------------------------------------------------
# orchestration and reports

FAMILIES = {
    "moeq": check_moeq,
    "scalar": check_scalar_chain,
    "p": check_p_chain,
    "stretch": check_stretch_chain,
    "lemq": check_lemQ,
}

IDENTITIES = ("Moeq1", "Moeq2", *SCALAR_IDS, "MbarTransport", "P2P6", "P3", "S2", "S8", "S5", "LemQ")

_FAMILY_OF = {"Moeq1": "moeq", "Moeq2": "moeq", **{i: "scalar" for i in SCALAR_IDS},
              "MbarTransport": "p", "P2P6": "p", "P3": "p", "S2": "stretch", "S8": "stretch", "S5": "stretch",
              "LemQ": "lemq"}


def run_identities(spec: MetricSpec, samples: SampleSet, cache: GeometryCache | None = None,
                   thresholds: Thresholds = Thresholds(), identities: Iterable[str] | None = None,
                   ladder: bool = False) -> list[IdentityCheck]:
    """Every requested identity on one spec; order follows :data:`IDENTITIES`."""
    cache = GeometryCache() if cache is None else cache
    wanted = list(IDENTITIES) if identities is None else list(identities)
    unknown = [i for i in wanted if i not in _FAMILY_OF]
    if unknown:
        raise KeyError(f"unknown identities {unknown}; choose from {list(IDENTITIES)}")
    results: dict[str, IdentityCheck] = {}
    for fam in dict.fromkeys(_FAMILY_OF[i] for i in wanted):
        fn = FAMILIES[fam]
        if fam in ("scalar", "p", "stretch"):
            got = fn(spec, samples, cache, thresholds)
        else:
            got = fn(spec, samples, cache)
        for chk in got if isinstance(got, list) else [got]:
            results[chk.identity] = chk
    out = [results[i] for i in IDENTITIES if i in wanted]
    if ladder:
        out.extend(check_ladder(spec, samples, cache))
    return out


def summary_markdown(checks: Sequence[IdentityCheck]) -> str:
    lines = ["| identity | spec | verdict | worst residual | tolerance | lhs scale | rhs scale | branch | notes |",
             "|---|---|---|---|---|---|---|---|---|"]
    for c in checks:
        lines.append(f"| {c.identity} | {c.spec} | {c.verdict} | {c.worst_residual:.2e} | {c.tolerance:.0e} | "
                     f"{c.lhs_scale:.2e} | {c.rhs_scale:.2e} | {c.branch} | {c.reason} |")
    return "\n".join(lines) + "\n"

