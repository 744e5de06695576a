"""Jet-free reference computations.

Two independent routes used to cross-check the jet pipeline:

* ``FDOracle`` recomputes g, h, C, I, G, N, Berwald connection, L, J, M,
  M-bar and the Riemann curvature from plain float evaluations of F using
  central differences with Richardson extrapolation.  Direct partials of F^2
  are combined by hand-derived chain rules; only N-derivatives are nested.
* ``ChristoffelOracle`` works on the Riemannian matrix a_ij(x) alone:
  Christoffel symbols, spray, Riemann tensor and sectional curvature.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .metric import EvalPoint, MetricSpec, F_values, alpha_matrix

# central second-order stencils: offsets and weights for the k-th derivative
_STENCILS = {
    0: (np.array([0.0]), np.array([1.0])),
    1: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    2: (np.array([-1.0, 0.0, 1.0]), np.array([1.0, -2.0, 1.0])),
    3: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([-0.5, 1.0, -1.0, 0.5])),
    4: (np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), np.array([1.0, -4.0, 6.0, -4.0, 1.0])),
}


class FDAccuracyWarning(UserWarning):
    pass


def _richardson(estimates: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate h^2, h^4, ... from estimates at h, h/2, h/4, ...

    Returns the extrapolated value and the last correction as error estimate.
    """
    table = [np.asarray(e, dtype=float) for e in estimates]
    err = np.zeros_like(table[0])
    power = 4.0
    while len(table) > 1:
        nxt = [(power * table[i + 1] - table[i]) / (power - 1.0) for i in range(len(table) - 1)]
        err = np.abs(nxt[-1] - table[-1])
        table = nxt
        power *= 4.0
    return table[0], err


def fd_partial(f: Callable[[np.ndarray], np.ndarray], z: np.ndarray, alpha, h: float = 0.05,
               levels: int = 3) -> tuple[float, float]:
    """Mixed partial d^alpha f at z by tensor-product central differences.

    ``f`` maps an array of points (..., m) to values (...).  Returns
    (value, error estimate).
    """
    z = np.asarray(z, dtype=float)
    active = [(v, k) for v, k in enumerate(alpha) if k]
    if not active:
        return float(f(z[None])[0]), 0.0
    grids = [_STENCILS[k] for _, k in active]
    offs = np.array(list(itertools.product(*[g[0] for g in grids])))
    wts = np.prod(np.array(list(itertools.product(*[g[1] for g in grids]))), axis=1)
    total = sum(k for _, k in active)
    estimates = []
    for lev in range(levels):
        step = h / 2**lev
        pts = np.repeat(z[None], len(offs), axis=0)
        for c, (v, _) in enumerate(active):
            pts[:, v] += step * offs[:, c]
        estimates.append(np.dot(wts, f(pts)) / step**total)
    val, err = _richardson(estimates)
    return float(val), float(err)


def fd_jacobian(func: Callable[[np.ndarray], np.ndarray], z: np.ndarray, variables, h: float = 0.01,
                levels: int = 3) -> tuple[np.ndarray, float]:
    """Derivatives of a tensor-valued function along coordinate directions.

    The new axis is appended last.  ``func`` takes a single point.
    """
    z = np.asarray(z, dtype=float)
    cols, worst = [], 0.0
    for v in variables:
        estimates = []
        for lev in range(levels):
            step = h / 2**lev
            zp, zm = z.copy(), z.copy()
            zp[v] += step
            zm[v] -= step
            estimates.append((np.asarray(func(zp)) - np.asarray(func(zm))) / (2 * step))
        val, err = _richardson(estimates)
        cols.append(val)
        worst = max(worst, float(np.max(err, initial=0.0)))
    return np.stack(cols, axis=-1), worst


@dataclass
class FDResult:
    values: np.ndarray
    error: float


class FDOracle:
    """Finite-difference recomputation of the pipeline at one point."""

    QUANTITIES = ("g", "h", "C", "I", "G", "N", "berwald", "L", "J", "M", "Mbar", "riemann")

    def __init__(self, spec: MetricSpec, point: EvalPoint, h: float = 0.05, outer_h: float = 0.01,
                 tolerance: float | None = None):
        self.spec = spec
        self.n = spec.dim
        self.z = np.concatenate([point.x, point.y]).astype(float)
        self.h = h
        self.outer_h = outer_h
        self.tolerance = tolerance
        self.max_error = 0.0

    # F^2 as a function of stacked (x, y) points
    def _F2(self, pts: np.ndarray) -> np.ndarray:
        n = self.n
        return F_values(self.spec, pts[..., :n], pts[..., n:]) ** 2

    def _d(self, z, *variables) -> float:
        alpha = [0] * (2 * self.n)
        for v in variables:
            alpha[v] += 1
        val, err = fd_partial(self._F2, z, alpha, self.h)
        self.max_error = max(self.max_error, err / max(1.0, abs(val)))
        return val

    def _tensor(self, z, xs: int, ys: int, scale: float) -> np.ndarray:
        """Symmetric-in-y partials d^(xs+ys) F^2 / dx^.. dy^.. (x slots first)."""
        n = self.n
        out = np.empty((n,) * (xs + ys))
        cache: dict = {}
        for idx in itertools.product(range(n), repeat=xs + ys):
            key = tuple(sorted(idx[:xs])) + ("|",) + tuple(sorted(idx[xs:]))
            if key not in cache:
                vars_ = list(idx[:xs]) + [n + i for i in idx[xs:]]
                cache[key] = scale * self._d(z, *vars_)
            out[idx] = cache[key]
        return out

    # -- building blocks at arbitrary z --------------------------------
    def _basic(self, z):
        n = self.n
        y = z[n:]
        g = self._tensor(z, 0, 2, 0.5)
        ginv = np.linalg.inv(g)
        C = self._tensor(z, 0, 3, 0.25)
        dxF2 = self._tensor(z, 1, 0, 1.0)                  # [l]
        dxdy = self._tensor(z, 1, 1, 1.0)                  # [k, l] = d2F2/dx^k dy^l
        phi = dxdy.T @ y - dxF2                             # phi_l
        G = 0.25 * ginv @ phi
        return g, ginv, C, dxF2, dxdy, phi, G

    def _G_at(self, z) -> np.ndarray:
        return self._basic(z)[-1]

    def _N_at(self, z) -> np.ndarray:
        """N^i_j by the chain rule on direct partials of F^2."""
        n = self.n
        y = z[n:]
        g, ginv, C, dxF2, dxdy, phi, G = self._basic(z)
        dxdyy = self._tensor(z, 1, 2, 1.0)                 # [k, l, j]
        # d phi_l / dy^j
        dphi = np.einsum("klj,k->lj", dxdyy, y) + dxdy.T - dxdy
        # d g^{il} / dy^j = -2 g^{ia} C_abj g^{bl}
        dginv = -2.0 * np.einsum("ia,abj,bl->ilj", ginv, C, ginv)
        return 0.25 * (np.einsum("ilj,l->ij", dginv, phi) + ginv @ dphi)

    def _C_at(self, z) -> np.ndarray:
        return self._tensor(z, 0, 3, 0.25)

    # -- public quantities ----------------------------------------------
    def compute(self) -> dict[str, np.ndarray]:
        n = self.n
        z = self.z
        y = z[n:]
        g, ginv, C, dxF2, dxdy, phi, G = self._basic(z)
        F2 = float(self._F2(z[None])[0])
        ylow = g @ y
        h = g - np.outer(ylow, ylow) / F2
        I = np.einsum("jk,ijk->i", ginv, C)
        N = self._N_at(z)
        yvars = range(n, 2 * n)
        xvars = range(n)
        berwald, e1 = fd_jacobian(self._N_at, z, yvars, self.outer_h)
        dNx, e2 = fd_jacobian(self._N_at, z, xvars, self.outer_h)     # [i, k, j] = d N^i_k / dx^j
        dGx, e3 = fd_jacobian(self._G_at, z, xvars, self.outer_h)     # [i, k]
        # dC/dx^s and dC/dy^m from direct fourth partials
        dCx = self._tensor(z, 1, 3, 0.25)                              # [s, i, j, k]
        dCy = self._tensor(z, 0, 4, 0.25)                              # [m, i, j, k]
        L = (np.einsum("s,sijk->ijk", y, dCx) - 2.0 * np.einsum("m,mijk->ijk", G, dCy)
             - np.einsum("mjk,mi->ijk", C, N) - np.einsum("imk,mj->ijk", C, N) - np.einsum("ijm,mk->ijk", C, N))
        J = np.einsum("jk,ijk->i", ginv, L)

        def sym3(v):
            return np.einsum("i,jk->ijk", v, h) + np.einsum("j,ik->ijk", v, h) + np.einsum("k,ij->ijk", v, h)

        M = C - sym3(I) / (n + 1)
        Mbar = L - sym3(J) / (n + 1)
        R = (2.0 * dGx - np.einsum("j,ikj->ik", y, dNx) + 2.0 * np.einsum("j,ijk->ik", G, berwald)
             - N @ N)
        self.max_error = max(self.max_error, e1, e2, e3)
        if self.tolerance is not None and self.max_error > self.tolerance:
            warnings.warn(
                f"finite-difference error estimate {self.max_error:.2e} exceeds tolerance {self.tolerance:.2e}",
                FDAccuracyWarning, stacklevel=2,
            )
        return {"g": g, "h": h, "C": C, "I": I, "G": G, "N": N, "berwald": berwald, "L": L, "J": J,
                "M": M, "Mbar": Mbar, "riemann": R, "ginv": ginv, "F": np.sqrt(F2)}


def fd_oracle(spec: MetricSpec, p: EvalPoint, quantity: str, h: float = 0.05,
              tolerance: float | None = None) -> FDResult:
    """One quantity from the jet-free pipeline, with its FD error estimate."""
    if quantity not in FDOracle.QUANTITIES:
        raise KeyError(f"unknown FD quantity {quantity!r}; choose from {FDOracle.QUANTITIES}")
    orc = FDOracle(spec, p, h=h, tolerance=tolerance)
    vals = orc.compute()
    return FDResult(vals[quantity], orc.max_error)


class ChristoffelOracle:
    """Riemannian quantities of a_ij(x) by finite differences."""

    def __init__(self, spec: MetricSpec, h: float = 0.01):
        if spec.kind != "riemannian":
            raise ValueError(f"{spec.name}: Christoffel oracle needs a riemannian spec")
        self.spec = spec
        self.n = spec.dim
        self.h = h

    def metric(self, x) -> np.ndarray:
        return alpha_matrix(self.spec, np.asarray(x, dtype=float))

    def christoffel(self, x) -> np.ndarray:
        """Gamma^i_jk, indexed [i, j, k]."""
        x = np.asarray(x, dtype=float)
        a = self.metric(x)
        da, _ = fd_jacobian(self.metric, x, range(self.n), self.h)   # [i, j, k] = d a_ij / dx^k
        ainv = np.linalg.inv(a)
        # lower[l, j, k] = 1/2 (d_j a_lk + d_k a_lj - d_l a_jk)
        lower = 0.5 * (da.transpose(0, 2, 1) + da - da.transpose(2, 0, 1))
        return np.einsum("il,ljk->ijk", ainv, lower)

    def spray(self, x, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return 0.5 * np.einsum("ijk,j,k->i", self.christoffel(x), y, y)

    def riemann_tensor(self, x) -> np.ndarray:
        """R^i_jkl with R(X, Y)Z = R^i_jkl Z^j X^k Y^l."""
        x = np.asarray(x, dtype=float)
        Gam = self.christoffel(x)
        dGam, _ = fd_jacobian(self.christoffel, x, range(self.n), self.h)   # [i, j, k, m] = d_m Gamma^i_jk
        term1 = np.einsum("iljk->ijkl", dGam)        # d_k Gamma^i_lj
        term2 = np.einsum("ikjl->ijkl", dGam)        # d_l Gamma^i_kj
        quad1 = np.einsum("ikm,mlj->ijkl", Gam, Gam)
        quad2 = np.einsum("ilm,mkj->ijkl", Gam, Gam)
        return term1 - term2 + quad1 - quad2

    def sectional_curvature(self, x, u, v) -> float:
        a = self.metric(x)
        R = self.riemann_tensor(x)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        Ruvv = np.einsum("ijkl,j,k,l->i", R, v, u, v)
        num = u @ a @ Ruvv
        den = (u @ a @ u) * (v @ a @ v) - (u @ a @ v) ** 2
        return float(num / den)

    def riemann_curvature_map(self, x, y) -> np.ndarray:
        """R^i_k = R^i_jkl y^j y^l, the Riemannian case of the Finsler map."""
        y = np.asarray(y, dtype=float)
        return np.einsum("ijkl,j,l->ik", self.riemann_tensor(x), y, y)
