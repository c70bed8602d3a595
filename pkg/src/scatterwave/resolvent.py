"""Free and perturbed resolvents of H = -Lap + V and D = -div (1 + V) grad.

Point sources are handled by a Nystrom discretisation of the
Lippmann-Schwinger equation.  The unknown is the density
``rho = V G(., y)`` on the inner half of the box; the singular free part
``G0(. - y)`` is never sampled, only its regular remainder.  Grid sources
(GridField right-hand sides) use the periodic multiplier model.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter
from scipy.sparse.linalg import LinearOperator, bicgstab, gmres

from . import kernels
from .fields import (CUBE_INV_R, LATTICE_INV_R, BoxGrid, GridField, apply_multiplier,
                     sample, spectral_divergence, spectral_gradient, spectral_laplacian)
from .potentials import DivergenceFormPotential

SINGULAR_WEIGHTS = {
    # h^2 * weight / (4 pi) replaces h^3 / (4 pi |0|) at the coincident node
    "lattice": -LATTICE_INV_R,
    "cell": CUBE_INV_R,
}


class SolverError(RuntimeError):
    """Krylov solve failed; ``history`` holds the residual norms seen."""

    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


@dataclass(frozen=True)
class SpectralPoint:
    """Wavenumber k in the upper half plane; z = k^2."""

    k: complex
    rect: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "k", complex(self.k))
        if not self.k.imag > 0:
            raise ValueError(f"Im k must be positive, got k={self.k}")
        if self.rect is not None and not self.in_rectangle(*self.rect):
            raise ValueError(f"k={self.k} is outside the rectangle {self.rect}")

    @property
    def z(self) -> complex:
        return self.k * self.k

    def in_rectangle(self, a: float, b: float, h: float) -> bool:
        return a < self.k.real < b and 0 < self.k.imag < h

    def reflected(self) -> "SpectralPoint":
        """-conj(k), which has z -> conj(z)."""
        return SpectralPoint(-self.k.conjugate())

    @classmethod
    def coerce(cls, k) -> "SpectralPoint":
        return k if isinstance(k, cls) else cls(k)


def free_green(x, y, k):
    """exp(ik|x-y|) / (4 pi |x-y|), vectorised over leading axes."""
    k = SpectralPoint.coerce(k).k
    d = np.sqrt(np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2, axis=-1))
    if np.any(d == 0):
        raise ValueError("free_green is singular at x = y")
    return np.exp(1j * k * d) / (4 * np.pi * d)


def free_green_grad(x, y, k):
    """Gradient in x of the free Green's function, shape (..., 3)."""
    k = SpectralPoint.coerce(k).k
    dv = np.asarray(x, float) - np.asarray(y, float)
    d = np.sqrt(np.sum(dv ** 2, axis=-1))
    if np.any(d == 0):
        raise ValueError("free_green is singular at x = y")
    fac = np.exp(1j * k * d) * (1j * k * d - 1) / (4 * np.pi * d ** 3)
    return fac[..., None] * dv


def check_margin(grid: BoxGrid, k: SpectralPoint, margin_tol: float | None):
    if margin_tol is None:
        return
    leak = math.exp(-k.k.imag * grid.L / 4)
    if leak >= margin_tol:
        raise ValueError(f"box too small for Im k={k.k.imag:g}: exp(-Im k L/4)={leak:.3g} "
                         f">= {margin_tol:g}")


def free_symbol(grid: BoxGrid, z: complex) -> np.ndarray:
    return 1.0 / (4 * np.pi ** 2 * grid.freq_norm2() - z)


def apply_free_resolvent(f: GridField, k, margin_tol: float | None = 1e-2) -> GridField:
    """u with uhat = fhat / (4 pi^2 |xi|^2 - z) on the periodic box."""
    k = SpectralPoint.coerce(k)
    check_margin(f.grid, k, margin_tol)
    u = apply_multiplier(f, free_symbol(f.grid, k.z))
    return u.with_data(u.data, name=(f.name + "_R0") if f.name else "R0f")


# ------------------------------------------------------------------ Krylov

def _krylov(matvec, rhs, tol, maxiter, method, x0=None):
    n = rhs.size
    op = LinearOperator((n, n), matvec=matvec, dtype=complex)
    hist = []
    bnorm = np.linalg.norm(rhs) or 1.0

    if method == "gmres":
        def cb(res):
            hist.append(float(res))
        sol, info = gmres(op, rhs, x0=x0, rtol=tol, atol=0.0, restart=50,
                          maxiter=maxiter, callback=cb, callback_type="pr_norm")
    elif method == "bicgstab":
        def cb(xk):
            hist.append(float("nan"))
        sol, info = bicgstab(op, rhs, x0=x0, rtol=tol, atol=0.0, maxiter=maxiter, callback=cb)
    else:
        raise ValueError(f"unknown Krylov method {method!r}")
    res = float(np.linalg.norm(rhs - op @ sol) / bnorm)
    if info != 0 or not np.isfinite(res) or res > 10 * tol:
        raise SolverError(f"{method} did not converge (info={info}, residual={res:.3g})", hist)
    return sol, res, {"method": method, "iterations": len(hist) if hist else None,
                      "residual_history": hist}


# ------------------------------------------------------------- Nystrom core

class NystromKernel:
    """Sampled free Green's function as a circular convolution on the box.

    Sources live on the inner sub-box ``|x|_inf < L/4`` so every pair of
    source/target nodes there differs by less than L/2 per axis and the
    circular convolution reproduces the free-space sum exactly.
    """

    def __init__(self, grid: BoxGrid, k: SpectralPoint, rule: str = "lattice"):
        if rule not in SINGULAR_WEIGHTS:
            raise ValueError(f"unknown singular rule {rule!r}")
        self.grid, self.k, self.rule = grid, k, rule
        N, h = grid.N, grid.h
        m = np.fft.fftfreq(N, 1.0 / N) * h
        X, Y, Z = np.meshgrid(m, m, m, indexing="ij", sparse=True)
        d = np.sqrt(X * X + Y * Y + Z * Z)
        d[0, 0, 0] = 1.0
        ker = h ** 3 * np.exp(1j * k.k * d) / (4 * np.pi * d)
        ker[0, 0, 0] = self.diagonal
        self.ker = ker
        self.khat = np.fft.fftn(ker)
        self.lo, self.n, self.inner = inner_region(grid)

    @property
    def diagonal(self) -> complex:
        h = self.grid.h
        return h * h * SINGULAR_WEIGHTS[self.rule] / (4 * np.pi) + 1j * self.k.k * h ** 3 / (4 * np.pi)

    def inner_points(self) -> np.ndarray:
        a = self.grid.axis[self.lo:self.lo + self.n]
        return np.stack(np.meshgrid(a, a, a, indexing="ij"), axis=-1)

    def apply_full(self, rho_inner):
        """Gamma rho on the full grid (exact only on the inner sub-box)."""
        buf = np.zeros(self.grid.shape, complex)
        buf[self.inner] = rho_inner
        return np.fft.ifftn(np.fft.fftn(buf) * self.khat)

    def apply(self, rho_inner):
        return self.apply_full(rho_inner)[self.inner]

    def column(self, y_index):
        """Sampled G0(. - y) on the inner sub-box, with the regularised value at y."""
        N = self.grid.N
        idx = [np.arange(self.lo, self.lo + self.n) - j for j in y_index]
        return self.ker[np.ix_(*[i % N for i in idx])] / self.grid.cell_volume


def inner_region(grid: BoxGrid):
    """(first index, size, slices) of the sub-box |x|_inf < L/4 holding Nystrom sources."""
    lo, n = grid.N // 4, grid.N // 2
    return lo, n, (slice(lo, lo + n),) * 3


def _check_support(grid: BoxGrid, Vfull: np.ndarray, atol=1e-12):
    outside = Vfull.copy()
    outside[inner_region(grid)[2]] = 0
    scale = max(np.max(np.abs(Vfull)), 1.0)
    if np.max(np.abs(outside)) > atol * scale:
        raise ValueError("potential is not supported in the inner half of the box; "
                         "truncate it (see fit_to_grid)")


def truncation_radius(grid: BoxGrid) -> float:
    """Cutoff radius used by fit_to_grid; the truncated support ends at it."""
    return grid.L / 4 - 1.0 - 1.5 * grid.h


def fit_to_grid(V: DivergenceFormPotential, grid: BoxGrid) -> DivergenceFormPotential:
    """Inner truncation of V whose support fits the Nystrom source region."""
    from .potentials import truncate
    rho = truncation_radius(grid)
    if V.support_radius <= grid.L / 4 - grid.h:
        return V
    return truncate(V, rho, "inner")


# ---------------------------------------------------------------- solutions

@dataclass(eq=False)
class GreenSolution:
    """Green's function G(., y) or resolvent R_z f with solver diagnostics.

    For point sources the solution is stored through the density ``rho``
    on the inner sub-box: ``G(x) = s(x) s(y) [G0(x - y) - sum h^3 G0(x - xi) rho(xi)]``
    where ``s = (1 + V)^(-1/2)`` for the divergence form and 1 otherwise.
    """

    operator: str
    k: SpectralPoint
    grid: BoxGrid
    residual: float
    stats: dict
    source: object = None
    density: np.ndarray | None = None
    kernel: NystromKernel | None = None
    scale: np.ndarray | None = None
    u: GridField | None = None
    _w: np.ndarray | None = field(default=None, repr=False)
    _spline: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_point(self) -> bool:
        return self.density is not None

    @property
    def y(self) -> np.ndarray:
        return np.asarray(self.source, float)

    def _scale_at(self, pts):
        if self.scale is None:
            return np.ones(len(pts))
        g = self.grid
        coords = ((pts + g.L / 2) / g.h).T
        full = np.ones(g.shape)
        full[self.kernel.inner] = self.scale
        return map_coordinates(full, coords, order=3, mode="nearest")

    @property
    def source_scale(self) -> float:
        if self.scale is None:
            return 1.0
        return float(self._scale_at(self.y[None])[0])

    def sources(self):
        """Nystrom nodes, weights ``h^3 rho`` restricted to nonzero density."""
        pts = self.kernel.inner_points().reshape(-1, 3)
        w = self.grid.cell_volume * self.density.reshape(-1)
        keep = w != 0
        return pts[keep], w[keep]

    @property
    def correction(self) -> GridField:
        """w = -Gamma rho on the full grid (regular remainder of the transformed G)."""
        if self._w is None:
            g = self.grid
            N2 = 2 * g.N
            k = self.k.k
            h = g.h
            m = np.fft.fftfreq(N2, 1.0 / N2) * h
            X, Y, Z = np.meshgrid(m, m, m, indexing="ij", sparse=True)
            d = np.sqrt(X * X + Y * Y + Z * Z)
            d[0, 0, 0] = 1.0
            ker = h ** 3 * np.exp(1j * k * d) / (4 * np.pi * d)
            ker[0, 0, 0] = self.kernel.diagonal
            buf = np.zeros((N2,) * 3, complex)
            lo, n = self.kernel.lo, self.kernel.n
            buf[lo:lo + n, lo:lo + n, lo:lo + n] = self.density
            full = np.fft.ifftn(np.fft.fftn(buf) * np.fft.fftn(ker))[:g.N, :g.N, :g.N]
            self._w = -full
        return GridField(self.grid, self._w, "physical", "correction")

    def _spline_coeffs(self):
        if self._spline is None:
            w = self.correction.data
            self._spline = (spline_filter(w.real, order=5, mode="nearest")
                            + 1j * spline_filter(w.imag, order=5, mode="nearest"))
        return self._spline

    def _interp_w(self, pts):
        g = self.grid
        coords = ((pts + g.L / 2) / g.h).T
        c = self._spline_coeffs()
        return (map_coordinates(c.real, coords, order=5, prefilter=False)
                + 1j * map_coordinates(c.imag, coords, order=5, prefilter=False))

    def evaluate(self, points, method: str = "auto") -> np.ndarray:
        """G(x, y) at arbitrary points x != y.

        'direct' sums the Nystrom interpolant; 'spline' interpolates the
        grid correction (accurate inside the box, required near sources).
        'auto' uses the spline inside the box interior and direct sums outside.
        """
        P = np.atleast_2d(np.asarray(points, float))
        if not self.is_point:
            from .fields import interpolate
            return interpolate(self.u, P)
        y = self.y
        g0 = free_green(P, y, self.k)
        s_y = self.source_scale
        if method == "auto":
            lim = self.grid.L / 2 - 4 * self.grid.h
            spline_mask = np.all(np.abs(P) < lim, axis=1)
        elif method == "spline":
            spline_mask = np.ones(len(P), bool)
        elif method == "direct":
            spline_mask = np.zeros(len(P), bool)
        else:
            raise ValueError(f"unknown evaluation method {method!r}")
        out = np.empty(len(P), complex)
        if spline_mask.any():
            out[spline_mask] = g0[spline_mask] + self._interp_w(P[spline_mask])
        rest = ~spline_mask
        if rest.any():
            out[rest] = g0[rest] - self.direct_sum(P[rest])
        out *= s_y
        return self._scale_at(P) * out

    def direct_sum(self, points):
        """sum_j h^3 G0(x - xi_j) rho_j; grid-node targets use the Nystrom row."""
        P = np.atleast_2d(np.asarray(points, float))
        src, w = self.sources()
        out = np.zeros(len(P), complex)
        if len(w) == 0:
            return out
        g = self.grid
        j = (P + g.L / 2) / g.h
        on_node = np.all(np.abs(j - np.rint(j)) < 1e-9, axis=1) & np.all((j > -0.5) & (j < g.N - 0.5), axis=1)
        if on_node.any():
            ji = np.rint(j[on_node]).astype(int)
            out[on_node] = -self.correction.data[ji[:, 0], ji[:, 1], ji[:, 2]]
        off = ~on_node
        if off.any():
            Q = P[off]
            d_y = np.linalg.norm(Q - self.y, axis=1)
            vals = kernels.amp_sum(Q, self.y, src, w, self.k.k)
            out[off] = vals * np.exp(1j * self.k.k * d_y) / (4 * np.pi * d_y)
        return out

    def save(self, path) -> None:
        """GridField snapshot of the (regular part of the) solution plus a JSON sidecar."""
        fieldobj = self.correction if self.is_point else self.u
        fieldobj.save(path)
        meta = {
            "operator": self.operator,
            "k": [self.k.k.real, self.k.k.imag],
            "y": None if not self.is_point else self.y.tolist(),
            "residual": self.residual,
            "iterations": self.stats.get("iterations"),
            "wall_time": self.stats.get("wall_time"),
            "singular_rule": self.kernel.rule if self.kernel else None,
        }
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)


def _source_index(grid: BoxGrid, y, kern: NystromKernel):
    idx = grid.node_index(y)
    if idx is None:
        raise ValueError(f"source point {list(y)} must be a grid node")
    if any(not (kern.lo <= j < kern.lo + kern.n) for j in idx):
        raise ValueError("source point must lie in the inner half of the box")
    return idx


def _solve_point(op_tag, y, k, Ueff, scale, grid, tol, rule, method, maxiter):
    """Nystrom solve of (I + U Gamma) rho = U Gamma(., y)."""
    t0 = time.perf_counter()
    k = SpectralPoint.coerce(k)
    kern = NystromKernel(grid, k, rule)
    idx = _source_index(grid, y, kern)
    rhs = (Ueff * kern.column(idx)).reshape(-1)
    shape = (kern.n,) * 3
    if not np.any(Ueff):
        rho, res, st = np.zeros(rhs.size, complex), 0.0, {"method": "none", "iterations": 0,
                                                           "residual_history": []}
    else:
        def mv(v):
            v = v.reshape(shape)
            return (v + Ueff * kern.apply(v)).reshape(-1)
        rho, res, st = _krylov(mv, rhs, tol, maxiter, method)
    st["wall_time"] = time.perf_counter() - t0
    return GreenSolution(op_tag, k, grid, res, st, np.asarray(y, float),
                         rho.reshape(shape), kern, scale)


def solve_schrodinger_green(y, k, V: DivergenceFormPotential, grid: BoxGrid, tol: float = 1e-10,
                            rule: str = "lattice", method: str = "gmres",
                            maxiter: int = 200) -> GreenSolution:
    """G(., y, k^2) for H = -Lap + V with y a grid node in the inner half of the box."""
    Vfull = np.real(sample(grid, V.V).data)
    inner = inner_region(grid)[2]
    _check_support(grid, Vfull)
    return _solve_point("H", y, k, Vfull[inner], None, grid, tol, rule, method, maxiter)


def liouville_potential(V: DivergenceFormPotential, grid: BoxGrid, z: complex):
    """U_z = Lap(sqrt a) / sqrt a + z V / (1 + V) with a = 1 + V, sampled on the grid."""
    Vfull = np.real(sample(grid, V.V).data)
    if np.max(np.abs(Vfull)) >= 1:
        raise ValueError("divergence form needs sup |V| < 1")
    sa = np.sqrt(1 + Vfull)
    lap = np.real(spectral_laplacian(GridField(grid, sa - 1)).data)
    return lap / sa + z * Vfull / (1 + Vfull), Vfull


def solve_divergence_green(y, k, V: DivergenceFormPotential, grid: BoxGrid, tol: float = 1e-10,
                           rule: str = "lattice", method: str = "gmres",
                           maxiter: int = 200) -> GreenSolution:
    """G(., y, k^2) for D = -div (1 + V) grad via the Liouville transform.

    G_D(x, y) = a(x)^(-1/2) G_T(x, y) a(y)^(-1/2) where G_T is the Green's
    function of -Lap + U_z and a = 1 + V.
    """
    k = SpectralPoint.coerce(k)
    U, Vfull = liouville_potential(V, grid, k.z)
    inner = inner_region(grid)[2]
    _check_support(grid, Vfull)
    scale = 1.0 / np.sqrt(1 + Vfull[inner])
    return _solve_point("D", y, k, U[inner], scale, grid, tol, rule, method, maxiter)


# ------------------------------------------------------- periodic resolvents

def apply_resolvent(f: GridField, k, op: str = "H", V: DivergenceFormPotential | None = None,
                    tol: float = 1e-10, margin_tol: float | None = 1e-2,
                    method: str = "gmres", maxiter: int = 500, Vgrid=None) -> GreenSolution:
    """R_z f on the periodic box for op in {'H0', 'H', 'D'}.

    H: (I + R0 V) u = R0 f.   D: (I - R0 div V grad) u = R0 f.
    ``Vgrid`` may pass pre-sampled real values of V.
    """
    t0 = time.perf_counter()
    k = SpectralPoint.coerce(k)
    grid = f.grid
    check_margin(grid, k, margin_tol)
    sym = free_symbol(grid, k.z)
    rhs = np.fft.ifftn(np.fft.fftn(f.data) * sym)
    if op == "H0" or (V is None and Vgrid is None):
        u, res, st = rhs, 0.0, {"method": "multiplier", "iterations": 0, "residual_history": []}
    else:
        Vg = np.real(sample(grid, V.V).data) if Vgrid is None else np.asarray(Vgrid, float)
        shape = grid.shape
        if op == "H":
            def mv(v):
                v = v.reshape(shape)
                return (v + np.fft.ifftn(np.fft.fftn(Vg * v) * sym)).reshape(-1)
        elif op == "D":
            if np.max(np.abs(Vg)) >= 1:
                raise ValueError("divergence form needs sup |V| < 1")

            def mv(v):
                v = GridField(grid, v.reshape(shape))
                flux = spectral_gradient(v).data * Vg
                dv = spectral_divergence(GridField(grid, flux)).data
                return (v.data - np.fft.ifftn(np.fft.fftn(dv) * sym)).reshape(-1)
        else:
            raise ValueError(f"unknown operator {op!r}")
        sol, res, st = _krylov(mv, rhs.reshape(-1), tol, maxiter, method)
        u = sol.reshape(shape)
    st["wall_time"] = time.perf_counter() - t0
    out = GridField(grid, u, "physical", f"R_{op}")
    return GreenSolution(op, k, grid, res, st, source=f, u=out)


def operator_apply(u: GridField, op: str, Vgrid=None) -> GridField:
    """(op) u with spectral derivatives: -Lap u, -Lap u + V u, or -div (1+V) grad u."""
    lap = spectral_laplacian(u).data
    if op == "H0" or Vgrid is None:
        return u.with_data(-lap)
    if op == "H":
        return u.with_data(-lap + Vgrid * u.data)
    if op == "D":
        flux = spectral_gradient(u).data * Vgrid
        return u.with_data(-lap - spectral_divergence(GridField(u.grid, flux)).data)
    raise ValueError(f"unknown operator {op!r}")
