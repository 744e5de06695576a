"""Finsler tensor pipeline evaluated from a single high-order jet of F.

Every quantity is first built as a *jet field*: a :class:`Jet` array whose
components still carry their Taylor expansion in (x, y) around the point.
That keeps x- and y-derivatives of derived tensors available, so horizontal
covariant derivatives (Berwald connection) are computed without re-seeding:

    T_{i..|l} = dT/dx^l - N^m_l dT/dy^m - sum_a T_{..m..} G^m_{i_a l}

Each derivative costs one order of truncation.  With the default order 6
the stretch tensor and y-derivatives of the Riemann curvature keep order 1.
Index conventions: components of ``N[i, j]`` are N^i_j, ``berwald[i, j, k]``
is G^i_jk, ``R[i, k]`` is R^i_k, and all covariant tensors are stored with
lower indices in slot order.
"""

from __future__ import annotations

import functools
import string
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .jet import Jet, JetError, einsum
from .metric import EvalPoint, MetricError, MetricSpec, F_jet

DEFAULT_ORDER = 6


class GeometryError(ArithmeticError):
    pass


class DegenerateFlagError(GeometryError):
    pass


@dataclass
class Tensor:
    """Tensor components at one point.

    ``variance`` has one character per slot, ``"u"`` upper or ``"l"`` lower.
    ``degree`` is the positive homogeneity degree in y, used to build
    scale-free norms.
    """

    name: str
    values: np.ndarray
    variance: str
    degree: int
    symmetry: tuple[tuple[int, ...], ...] = ()
    antisymmetry: tuple[tuple[int, int], ...] = ()

    @property
    def rank(self) -> int:
        return self.values.ndim

    @property
    def dim(self) -> int:
        return self.values.shape[0] if self.values.ndim else 0

    def symmetry_defect(self) -> float:
        """Largest violation of the declared (anti)symmetries, relative to max(max |T|, 1)."""
        scale = max(float(np.abs(self.values).max(initial=0.0)), 1.0)
        worst = 0.0
        for group in self.symmetry:
            for a, b in zip(group, group[1:]):
                worst = max(worst, float(np.abs(self.values - np.swapaxes(self.values, a, b)).max()))
        for a, b in self.antisymmetry:
            worst = max(worst, float(np.abs(self.values + np.swapaxes(self.values, a, b)).max()))
        return worst / scale


def _letters(r: int, skip: str = "") -> str:
    pool = [c for c in string.ascii_lowercase if c not in skip]
    return "".join(pool[:r])


def _sym3(v: Jet, h: Jet) -> Jet:
    """v_i h_jk + v_j h_ik + v_k h_ij."""
    return einsum("i,jk->ijk", v, h) + einsum("j,ik->ijk", v, h) + einsum("k,ij->ijk", v, h)


class Geometry:
    """Per-point cache of every quantity derived from F at ``point``.

    Jet fields are memoised on first use, so requesting tensors in any order
    costs each computation once.
    """

    def __init__(self, spec: MetricSpec, point: EvalPoint, order: int = DEFAULT_ORDER):
        if point.dim != spec.dim:
            raise MetricError("point and metric dimensions differ")
        self.spec = spec
        self.point = point
        self.order = order
        self.n = spec.dim
        self.F_field = F_jet(spec, point, order)
        self.table = self.F_field.table

    # -- jet helpers ------------------------------------------------------
    def dx(self, T: Jet) -> Jet:
        return T.grad(range(self.n))

    def dy(self, T: Jet) -> Jet:
        return T.grad(range(self.n, 2 * self.n))

    def _need(self, T: Jet, depth: int, what: str) -> None:
        if T.order < depth:
            raise GeometryError(
                f"jet order {self.order} is too low for {what}; raise the order (default {DEFAULT_ORDER})"
            )

    @functools.cached_property
    def F2(self) -> Jet:
        return self.F_field * self.F_field

    @functools.cached_property
    def F(self) -> float:
        return float(self.F_field.value)

    @functools.cached_property
    def y_field(self) -> Jet:
        return Jet.stack([Jet.variable(self.n + i, self.point.y[i], self.table) for i in range(self.n)])

    @functools.cached_property
    def y(self) -> np.ndarray:
        return np.array(self.point.y)

    @functools.cached_property
    def g_field(self) -> Jet:
        self._need(self.F2, 2, "the fundamental tensor")
        return self.dy(self.dy(self.F2)) * 0.5

    @functools.cached_property
    def g0(self) -> np.ndarray:
        return self.g_field.value

    @functools.cached_property
    def _lu(self):
        try:
            lu = scipy.linalg.lu_factor(self.g0, check_finite=True)
        except (ValueError, scipy.linalg.LinAlgError) as exc:
            raise GeometryError(f"fundamental tensor is singular at {self.point}") from exc
        if np.any(np.abs(np.diag(lu[0])) < 1e-14 * np.abs(self.g0).max()):
            raise GeometryError(f"fundamental tensor is singular at {self.point}")
        return lu

    @functools.cached_property
    def ginv0(self) -> np.ndarray:
        inv = scipy.linalg.lu_solve(self._lu, np.eye(self.n))
        return 0.5 * (inv + inv.T)

    @functools.cached_property
    def condition_number(self) -> float:
        return float(np.linalg.norm(self.g0, 2) * np.linalg.norm(self.ginv0, 2))

    @functools.cached_property
    def ginv_field(self) -> Jet:
        # g = g0 + E with E nilpotent, so the Neumann series terminates at the jet order
        g = self.g_field
        E = g - self.g0
        A0 = self.ginv0
        B = -einsum("ij,jk->ik", A0, E)
        total = Jet.constant(A0, self.table, g.order)
        term = total
        for _ in range(g.order):
            term = einsum("ij,jk->ik", B, term)
            total = total + term
        return total

    @functools.cached_property
    def ylow_field(self) -> Jet:
        return self.dy(self.F2) * 0.5

    @functools.cached_property
    def h_field(self) -> Jet:
        yl = self.ylow_field
        return self.g_field - einsum("i,j->ij", yl, yl) * self.F2.reciprocal()

    @functools.cached_property
    def C_field(self) -> Jet:
        self._need(self.g_field, 1, "the Cartan torsion")
        return self.dy(self.g_field) * 0.5

    @functools.cached_property
    def I_field(self) -> Jet:
        return einsum("jk,ijk->i", self.ginv_field, self.C_field)

    @functools.cached_property
    def G_field(self) -> Jet:
        dF2y = self.dy(self.F2)                    # [l]
        mixed = self.dx(dF2y)                      # [l, k] = d2F2/dy^l dx^k
        inner = einsum("lk,k->l", mixed, self.y_field) - self.dx(self.F2)
        return einsum("il,l->i", self.ginv_field, inner) * 0.25

    @functools.cached_property
    def N_field(self) -> Jet:
        self._need(self.G_field, 1, "the nonlinear connection")
        return self.dy(self.G_field)

    @functools.cached_property
    def berwald_field(self) -> Jet:
        self._need(self.N_field, 1, "the Berwald connection")
        return self.dy(self.N_field)

    def hcov(self, T: Jet) -> Jet:
        """Horizontal covariant derivative of an all-lower jet field (new last slot)."""
        self._need(T, 1, "a horizontal covariant derivative")
        r = len(T.shape)
        s = _letters(r, skip="lm")
        N, Gb = self.N_field, self.berwald_field
        out = self.dx(T) - einsum(f"ml,{s}m->{s}l", N, self.dy(T))
        for a in range(r):
            src = s[:a] + "m" + s[a + 1:]
            out = out - einsum(f"{src},m{s[a]}l->{s}l", T, Gb)
        return out

    def transport(self, T: Jet) -> Jet:
        """T_{..|s} y^s."""
        r = len(T.shape)
        s = _letters(r, skip="t")
        return einsum(f"{s}t,t->{s}", self.hcov(T), self.y_field)

    @functools.cached_property
    def L_field(self) -> Jet:
        return self.transport(self.C_field)

    @functools.cached_property
    def J_field(self) -> Jet:
        return einsum("jk,ijk->i", self.ginv_field, self.L_field)

    @functools.cached_property
    def M_field(self) -> Jet:
        return self.C_field - _sym3(self.I_field, self.h_field) * (1.0 / (self.n + 1))

    @functools.cached_property
    def Mbar_field(self) -> Jet:
        return self.L_field - _sym3(self.J_field, self.h_field) * (1.0 / (self.n + 1))

    @functools.cached_property
    def Lcov_field(self) -> Jet:
        return self.hcov(self.L_field)

    @functools.cached_property
    def sigma_field(self) -> Jet:
        Lc = self.Lcov_field
        return (Lc - Lc.transpose(0, 1, 3, 2)) * 2.0

    @functools.cached_property
    def R_field(self) -> Jet:
        G, N, Gb = self.G_field, self.N_field, self.berwald_field
        dGx = self.dx(G)                          # [i, k] = dG^i/dx^k
        dGxy = self.dy(dGx)                       # [i, j, k] = d2G^i/dx^j dy^k
        return (
            dGx * 2.0
            - einsum("j,ijk->ik", self.y_field, dGxy)
            + einsum("j,ijk->ik", G, Gb) * 2.0
            - einsum("ij,jk->ik", N, N)
        )

    @functools.cached_property
    def Rdot_field(self) -> Jet:
        """R^i_{k.j} = dR^i_k / dy^j, indexed [i, k, j]."""
        self._need(self.R_field, 1, "y-derivatives of the Riemann curvature")
        return self.dy(self.R_field)

    @functools.cached_property
    def K_field(self) -> Jet:
        trace = Jet(np.einsum("iiZ->Z", self.R_field.coeffs), self.R_field.order, self.table)
        return trace * (self.F2 * (self.n - 1)).reciprocal()

    @functools.cached_property
    def Kdot_field(self) -> Jet:
        self._need(self.K_field, 1, "y-derivatives of the scalar curvature")
        return self.dy(self.K_field)

    @functools.cached_property
    def berwald3_field(self) -> Jet:
        self._need(self.berwald_field, 1, "third y-derivatives of the spray")
        return self.dy(self.berwald_field)

    # -- tensors ----------------------------------------------------------
    def _tensor(self, name, field: Jet, variance, degree, symmetry=(), antisymmetry=()) -> Tensor:
        return Tensor(name, np.asarray(field.value, dtype=float), variance, degree, symmetry, antisymmetry)

    def fundamental_tensor(self) -> Tensor:
        return self._tensor("g", self.g_field, "ll", 0, ((0, 1),))

    def inverse_metric(self) -> Tensor:
        return Tensor("ginv", self.ginv0.copy(), "uu", 0, ((0, 1),))

    def y_lower(self) -> np.ndarray:
        return np.asarray(self.ylow_field.value)

    def angular_metric(self) -> Tensor:
        return self._tensor("h", self.h_field, "ll", 0, ((0, 1),))

    def angular_metric_hessian(self) -> Tensor:
        """h_ij computed as F * d2F/dy^i dy^j (the alternative formula)."""
        F = self.F_field
        return Tensor("h", F.value * np.asarray(self.dy(self.dy(F)).value), "ll", 0, ((0, 1),))

    def cartan(self) -> Tensor:
        return self._tensor("C", self.C_field, "lll", -1, ((0, 1, 2),))

    def mean_cartan(self) -> Tensor:
        return self._tensor("I", self.I_field, "l", -1)

    def spray(self) -> Tensor:
        return self._tensor("G", self.G_field, "u", 2)

    def nonlinear_connection(self) -> Tensor:
        return self._tensor("N", self.N_field, "ul", 1)

    def berwald_connection(self) -> Tensor:
        return self._tensor("berwald", self.berwald_field, "ull", 0, ((1, 2),))

    def berwald_curvature(self) -> Tensor:
        """d3G^i/dy^j dy^k dy^l; vanishes exactly for Berwald metrics."""
        return self._tensor("B", self.berwald3_field, "ulll", -1, ((1, 2, 3),))

    def landsberg(self) -> Tensor:
        return self._tensor("L", self.L_field, "lll", 0, ((0, 1, 2),))

    def mean_landsberg(self) -> Tensor:
        return self._tensor("J", self.J_field, "l", 0)

    def matsumoto(self) -> Tensor:
        return self._tensor("M", self.M_field, "lll", -1, ((0, 1, 2),))

    def pbar(self) -> Tensor:
        return self._tensor("Mbar", self.Mbar_field, "lll", 0, ((0, 1, 2),))

    def stretch(self) -> Tensor:
        return self._tensor("sigma", self.sigma_field, "llll", 0, ((0, 1),), ((2, 3),))

    def riemann(self) -> Tensor:
        return self._tensor("R", self.R_field, "ul", 2)

    def riemann_ydot(self) -> Tensor:
        return self._tensor("Rdot", self.Rdot_field, "ull", 1)

    def h_covariant_derivative(self, name: str) -> Tensor:
        """Covariant derivative of a named all-lower tensor of this pipeline."""
        fields = {"g": (self.g_field, 0), "h": (self.h_field, 0), "C": (self.C_field, -1),
                  "I": (self.I_field, -1), "L": (self.L_field, 0), "J": (self.J_field, 0),
                  "M": (self.M_field, -1), "Mbar": (self.Mbar_field, 0), "F": (self.F_field, 1),
                  "y_lower": (self.ylow_field, 1)}
        if name not in fields:
            raise KeyError(f"no covariant derivative for {name!r}; choose from {sorted(fields)}")
        f, deg = fields[name]
        cov = self.hcov(f)
        return self._tensor(f"{name}|", cov, "l" * len(cov.shape), deg)

    def transport_of(self, name: str) -> Tensor:
        """T_{..|s} y^s for a named all-lower tensor."""
        fields = {"C": (self.C_field, -1), "I": (self.I_field, -1), "L": (self.L_field, 0),
                  "J": (self.J_field, 0), "M": (self.M_field, -1), "Mbar": (self.Mbar_field, 0),
                  "h": (self.h_field, 0), "g": (self.g_field, 0)}
        f, deg = fields[name]
        return self._tensor(f"{name}'", self.transport(f), "l" * len(f.shape), deg + 1)

    # -- curvature scalars -----------------------------------------------
    def flag_curvature(self, u) -> float:
        g = self.g0
        y = self.y
        u = np.asarray(u, dtype=float)
        yy = y @ g @ y
        u_perp = u - (y @ g @ u) / yy * y
        uu = u @ g @ u
        if not uu > 0 or (u_perp @ g @ u_perp) < (1e-8) ** 2 * uu:
            raise DegenerateFlagError("flag is degenerate: u is parallel to y")
        R = np.asarray(self.R_field.value)
        num = u_perp @ g @ (R @ u_perp)
        den = yy * (u_perp @ g @ u_perp) - (y @ g @ u_perp) ** 2
        return float(num / den)

    def scalar_curvature_fit(self) -> tuple[float, float]:
        """(K, residual) with K = tr R / ((n-1) F^2) and the defect of R = K F^2 h.

        The residual divides by F^2 (1 + |K|), so it does not change under y -> t y.
        """
        K = float(self.K_field.value)
        F2 = self.F ** 2
        R_low = self.g0 @ np.asarray(self.R_field.value)
        diff = R_low - K * F2 * np.asarray(self.h_field.value)
        return K, self.norm_values(diff, "ll") / (F2 * (1.0 + abs(K)))

    # -- norms ------------------------------------------------------------
    def lower_all(self, values: np.ndarray, variance: str) -> np.ndarray:
        out = np.asarray(values, dtype=float)
        for slot, v in enumerate(variance):
            if v == "u":
                out = np.moveaxis(np.tensordot(self.g0, out, axes=([1], [slot])), 0, slot)
        return out

    def norm_values(self, values: np.ndarray, variance: str) -> float:
        """sqrt of the full g-contraction of T with itself."""
        low = self.lower_all(values, variance)
        raised = low
        for slot in range(low.ndim):
            raised = np.moveaxis(np.tensordot(self.ginv0, raised, axes=([1], [slot])), 0, slot)
        val = float(np.sum(low * raised))
        return float(np.sqrt(max(val, 0.0)))

    def norm(self, T: Tensor) -> float:
        return self.norm_values(T.values, T.variance)

    def scale_free_norm(self, T: Tensor) -> float:
        """||T|| * F^(-degree): invariant under y -> t y."""
        return self.norm(T) * self.F ** (-T.degree)

    def inner(self, A: Tensor, B: Tensor) -> float:
        a = self.lower_all(A.values, A.variance)
        b = self.lower_all(B.values, B.variance)
        for slot in range(b.ndim):
            b = np.moveaxis(np.tensordot(self.ginv0, b, axes=([1], [slot])), 0, slot)
        return float(np.sum(a * b))


class GeometryCache:
    """Shares :class:`Geometry` objects between checks on the same points."""

    def __init__(self, order: int = DEFAULT_ORDER):
        self.order = order
        self._store: dict[tuple, Geometry] = {}

    def get(self, spec: MetricSpec, point: EvalPoint) -> Geometry:
        key = (spec.key, point.x, point.y, self.order)
        geom = self._store.get(key)
        if geom is None:
            geom = Geometry(spec, point, self.order)
            self._store[key] = geom
        return geom

    def __len__(self) -> int:
        return len(self._store)


def tensor(spec: MetricSpec, p: EvalPoint, quantity: str, order: int = DEFAULT_ORDER) -> Tensor:
    """One-shot evaluation of a named quantity."""
    geom = Geometry(spec, p, order)
    return getattr(geom, QUANTITIES[quantity])()


QUANTITIES = {
    "g": "fundamental_tensor",
    "h": "angular_metric",
    "C": "cartan",
    "I": "mean_cartan",
    "G": "spray",
    "N": "nonlinear_connection",
    "berwald": "berwald_connection",
    "L": "landsberg",
    "J": "mean_landsberg",
    "M": "matsumoto",
    "Mbar": "pbar",
    "sigma": "stretch",
    "riemann": "riemann",
}


# ---------------------------------------------------------------------------
# geodesics

def spray_at(spec: MetricSpec, x, y) -> np.ndarray:
    geom = Geometry(spec, EvalPoint(tuple(x), tuple(y)), order=2)
    return np.asarray(geom.G_field.value)


def _rk4_step(spec, x, y, dt):
    def rhs(xx, yy):
        return yy, -2.0 * spray_at(spec, xx, yy)

    k1x, k1y = rhs(x, y)
    k2x, k2y = rhs(x + 0.5 * dt * k1x, y + 0.5 * dt * k1y)
    k3x, k3y = rhs(x + 0.5 * dt * k2x, y + 0.5 * dt * k2y)
    k4x, k4y = rhs(x + dt * k3x, y + dt * k3y)
    return (x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
            y + dt / 6 * (k1y + 2 * k2y + 2 * k3y + k4y))


def geodesic_flow(spec: MetricSpec, p: EvalPoint, t: float, substeps: int = 2) -> EvalPoint:
    """Image of (x, y) under the geodesic flow for time t (RK4, fixed step)."""
    x = np.array(p.x)
    y = np.array(p.y)
    dt = t / substeps
    for _ in range(substeps):
        x, y = _rk4_step(spec, x, y, dt)
    return EvalPoint(tuple(x), tuple(y))


@dataclass
class GeodesicPath:
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    F: np.ndarray
    truncated: bool = False
    reason: str = ""

    @property
    def drift(self) -> float:
        return float(np.abs(self.F - self.F[0]).max() / self.F[0])

    def to_csv(self) -> str:
        n = self.x.shape[1]
        head = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"y{i + 1}" for i in range(n)] + ["F"]
        lines = [",".join(head)]
        for k in range(len(self.t)):
            row = [self.t[k], *self.x[k], *self.y[k], self.F[k]]
            lines.append(",".join(f"{v:.12g}" for v in row))
        return "\n".join(lines) + "\n"


def geodesic_trace(spec: MetricSpec, x0, y0, steps: int, dt: float) -> GeodesicPath:
    """Fixed-step RK4 integration of x'' + 2 G(x, x') = 0."""
    from .metric import F_values

    x = np.asarray(x0, dtype=float)
    y = np.asarray(y0, dtype=float)
    if not spec.contains(x):
        raise MetricError(f"start point {x.tolist()} lies outside the domain of {spec.name}")
    EvalPoint(tuple(x), tuple(y))  # rejects y = 0
    xs, ys, ts = [x], [y], [0.0]
    truncated, reason = False, ""
    for k in range(steps):
        try:
            x, y = _rk4_step(spec, x, y, dt)
        except (MetricError, JetError, GeometryError) as exc:
            truncated, reason = True, f"evaluation failed: {exc}"
            break
        if not spec.contains(x):
            truncated, reason = True, "path left the domain box"
            break
        xs.append(x)
        ys.append(y)
        ts.append((k + 1) * dt)
    X, Y = np.array(xs), np.array(ys)
    return GeodesicPath(np.array(ts), X, Y, F_values(spec, X, Y), truncated, reason)
