"""Normalised amplitudes, their limits at infinity, model operators and energy functionals.

A(x, y, k) = 4 pi |x - y| exp(-ik|x - y|) G(x, y, k^2), a(x, y, k) = G(x, y) / G0(x, 0),
mu = 4 pi |x| exp(-ik|x|) u.  All sphere functions are returned as SphereTrace
objects whose ``norm2`` is the L2(S^2) norm squared (weights sum to 4 pi).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .fields import (LATTICE_INV_R, BoxGrid, GridField, SphereQuadrature, SphereTrace,
                     sample, spectral_divergence, weighted_norm)
from .potentials import DivergenceFormPotential, shell_norm
from .resolvent import (GreenSolution, NystromKernel, SpectralPoint, _krylov,
                        inner_region, liouville_potential, solve_divergence_green, solve_schrodinger_green)


class LadderError(RuntimeError):
    """Sphere traces along the r-ladder did not settle."""

    def __init__(self, msg, diffs):
        super().__init__(msg)
        self.diffs = list(diffs)


def r_ladder(r0: float, ratio: float = 1.35, rungs: int = 8) -> np.ndarray:
    return r0 * ratio ** np.arange(rungs)


def _unit(x):
    x = np.asarray(x, float)
    r = np.linalg.norm(x, axis=-1)
    out = np.zeros_like(x)
    nz = r > 0
    out[nz] = x[nz] / r[nz, None]
    return out, r


# ---------------------------------------------------------------- amplitudes

def _node_mask(grid: BoxGrid, P):
    j = (P + grid.L / 2) / grid.h
    on = np.all(np.abs(j - np.rint(j)) < 1e-9, axis=1) & np.all((j > -0.5) & (j < grid.N - 0.5), axis=1)
    return on, np.rint(j).astype(int)


def amplitude_values(sol: GreenSolution, points, method: str = "auto") -> np.ndarray:
    """A(x, y, k) at points x != y, computed without forming G0 explicitly."""
    if not sol.is_point:
        raise ValueError("amplitudes need a point-source solution")
    P = np.atleast_2d(np.asarray(points, float))
    g, k, y = sol.grid, sol.k.k, sol.y
    d = np.linalg.norm(P - y, axis=1)
    if np.any(d == 0):
        raise ValueError("amplitude is undefined at the source point")
    if method == "auto":
        lim = g.L / 2 - 4 * g.h
        spl = np.all(np.abs(P) < lim, axis=1)
    elif method in ("spline", "direct"):
        spl = np.full(len(P), method == "spline")
    else:
        raise ValueError(f"unknown evaluation method {method!r}")
    on, jj = _node_mask(g, P)
    out = np.empty(len(P), complex)
    via_w = spl | on
    if via_w.any():
        wv = np.empty(via_w.sum(), complex)
        sub_on = on[via_w]
        idx = jj[via_w]
        if sub_on.any():
            wv[sub_on] = sol.correction.data[idx[sub_on, 0], idx[sub_on, 1], idx[sub_on, 2]]
        if (~sub_on).any():
            wv[~sub_on] = sol._interp_w(P[via_w][~sub_on])
        dd = d[via_w]
        out[via_w] = 1 + 4 * np.pi * dd * np.exp(-1j * k * dd) * wv
    rest = ~via_w
    if rest.any():
        src, w = sol.sources()
        out[rest] = 1 - (kernels.amp_sum(P[rest], y, src, w, k) if len(w) else 0)
    return out * sol._scale_at(P) * sol.source_scale


@dataclass(eq=False)
class AmplitudeField:
    """Amplitude view of a point-source Green's function."""

    sol: GreenSolution

    @property
    def k(self) -> complex:
        return self.sol.k.k

    @property
    def y(self) -> np.ndarray:
        return self.sol.y

    @property
    def operator(self) -> str:
        return self.sol.operator

    def A(self, points, method="auto"):
        return amplitude_values(self.sol, points, method)

    def a(self, points, method="auto"):
        """G(x, y) / G0(x, 0)."""
        P = np.atleast_2d(np.asarray(points, float))
        dy = np.linalg.norm(P - self.y, axis=1)
        d0 = np.linalg.norm(P, axis=1)
        return self.A(P, method) * d0 / dy * np.exp(1j * self.k * (dy - d0))

    mu = a

    @property
    def mu_field(self) -> GridField:
        """mu on the full grid (y = 0 only; the origin node carries the regularised value)."""
        if np.any(self.y):
            raise ValueError("mu_field is tabulated for sources at the origin")
        g = self.sol.grid
        r = g.radius()
        w = self.sol.correction.data
        vals = 1 + 4 * np.pi * r * np.exp(-1j * self.k * r) * w
        full = np.ones(g.shape)
        full[inner_region(g)[2]] = self.sol.scale if self.sol.scale is not None else 1.0
        return GridField(g, vals * full * self.sol.source_scale, "physical", "mu")

    def _grad_w_spline(self, P):
        """Gradient of the quintic spline of w, by a fourth-order stencil on the interpolant."""
        d = 1e-3 * self.sol.grid.h
        out = np.empty((len(P), 3), complex)
        for ax in range(3):
            e = np.zeros(3)
            e[ax] = d
            f = [self.sol._interp_w(P + m * e) for m in (-2, -1, 1, 2)]
            out[:, ax] = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * d)
        return out

    def mu_and_gradient(self, points):
        """mu and grad mu at interior points (Schrodinger case only)."""
        if self.operator != "H":
            raise ValueError("gradient of mu is implemented for H")
        P = np.atleast_2d(np.asarray(points, float))
        g, k, y = self.sol.grid, self.k, self.y
        lim = g.L / 2 - 6 * g.h
        if np.any(np.abs(P) > lim):
            raise ValueError("points too close to the box boundary for gradients")
        from .resolvent import free_green, free_green_grad
        w = self.sol._interp_w(P)
        gw = self._grad_w_spline(P)
        G = free_green(P, y, k) + w
        dG = free_green_grad(P, y, k) + gw
        xh, r = _unit(P)
        ph = 4 * np.pi * np.exp(-1j * k * r)
        mu = ph * r * G
        dmu = ph[:, None] * ((1 - 1j * k * r)[:, None] * xh * G[:, None] + r[:, None] * dG)
        return mu, dmu


def amplitude_trace(sol: GreenSolution, r: float, quad: SphereQuadrature, method="auto") -> SphereTrace:
    """A on the sphere |x - y| = r."""
    if not r > 0:
        raise ValueError("radius must be positive")
    pts = sol.y + r * quad.nodes
    return SphereTrace(sol.y, float(r), amplitude_values(sol, pts, method), quad)


# -------------------------------------------------------------------- limits

@dataclass(eq=False)
class AmplitudeLimit:
    values: np.ndarray
    quad: SphereQuadrature
    k: complex
    y: np.ndarray
    method: str
    error: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    @property
    def trace(self) -> SphereTrace:
        return SphereTrace(self.y, math.inf, self.values, self.quad)

    def norm(self) -> float:
        return self.trace.norm()

    def distance(self, other) -> float:
        v = other.values if isinstance(other, AmplitudeLimit) else other
        return self.trace.distance(v)

    def small_a(self) -> np.ndarray:
        """a_inf(sigma, y, k) = exp(-ik <sigma, y>) A_inf(sigma, y, k)."""
        return np.exp(-1j * self.k * (self.quad.nodes @ self.y)) * self.values


def _density_extent(sol):
    src, w = sol.sources()
    if len(w) == 0:
        return 0.0
    return float(np.max(np.linalg.norm(src - sol.y, axis=1)))


def extract_limit(sol: GreenSolution, quad: SphereQuadrature, method: str = "integral",
                  r0: float | None = None, ratio: float = 1.35, rungs: int = 8) -> AmplitudeLimit:
    """A_inf(sigma, y, k) by the integral formula or by extrapolating sphere traces.

    integral: A_inf = s(y) [1 - sum h^3 rho(xi) exp(-ik <sigma, xi - y>)].
    sphere: traces on r0 ratio^j, two-point Richardson in 1/r on the last rungs.
    """
    k = sol.k.k
    if method == "integral":
        src, w = sol.sources()
        ff = kernels.farfield_sum(quad.nodes, sol.y, src, w, k) if len(w) else 0.0
        vals = sol.source_scale * (1 - ff)
        return AmplitudeLimit(np.asarray(vals * np.ones(quad.M), complex), quad, k, sol.y,
                              "integral-formula")
    if method != "sphere":
        raise ValueError(f"unknown limit method {method!r}")
    if r0 is None:
        r0 = float(np.linalg.norm(sol.y)) + 1 + 2 * _density_extent(sol)
    rs = r_ladder(r0, ratio, rungs)
    traces = [amplitude_trace(sol, r, quad, "direct").values for r in rs]
    diffs = [SphereTrace(sol.y, 1.0, traces[i + 1] - traces[i], quad).norm() for i in range(rungs - 1)]
    scale = max(1.0, max(np.abs(t).max() for t in traces))
    if diffs[-1] > 1e-13 * scale and diffs[-1] > diffs[-2]:
        raise LadderError("sphere traces are not settling along the r-ladder", diffs)
    ra, rb = rs[-2], rs[-1]
    ext = (rb * traces[-1] - ra * traces[-2]) / (rb - ra)
    err = SphereTrace(sol.y, 1.0, ext - traces[-1], quad).norm()
    return AmplitudeLimit(ext, quad, k, sol.y, "sphere-extrapolation", err,
                          {"radii": rs.tolist(), "diffs": diffs})


def solve_green(op: str, y, k, V, grid, **kw) -> GreenSolution:
    if op == "H":
        return solve_schrodinger_green(y, k, V, grid, **kw)
    if op == "D":
        return solve_divergence_green(y, k, V, grid, **kw)
    raise ValueError(f"unknown operator {op!r}")


def high_energy_scan(V: DivergenceFormPotential, y, quad: SphereQuadrature, k_list,
                     grid: BoxGrid, op: str = "H", **kw) -> list:
    """Rows (k, ||A_inf - 1||) along increasing |k| in a sector."""
    rows = []
    for k in k_list:
        sol = solve_green(op, y, k, V, grid, **kw)
        lim = extract_limit(sol, quad, "integral")
        rows.append({"k": complex(k), "norm": lim.distance(np.ones(quad.M)),
                     "iterations": sol.stats.get("iterations")})
    return rows


# ---------------------------------------------------------- scattering data

def _node_points(grid, mask):
    idx = np.argwhere(mask)
    return idx, grid.axis[idx]


def h_f(f: GridField, k, quad: SphereQuadrature, V: DivergenceFormPotential, grid: BoxGrid | None = None,
        lattice: int = 5, op: str = "H", support_tol: float = 1e-12, **kw) -> np.ndarray:
    """h_f(sigma, k) = int a_inf(sigma, y, k) f(y) dy.

    A_inf is computed on a coarse lattice of source points covering supp f and
    interpolated trilinearly in y; the plane-wave phase is applied exactly.
    """
    grid = grid or f.grid
    k = SpectralPoint.coerce(k).k
    data = f.data
    amax = np.max(np.abs(data))
    supp = np.abs(data) > support_tol * max(amax, 1e-300)
    if not supp.any():
        return np.zeros(quad.M, complex)
    lo_i, n, inner = inner_region(grid)
    outside = supp.copy()
    outside[inner] = False
    if outside.any():
        raise ValueError("f leaks outside the inner half of the box")
    idx = np.argwhere(supp)
    a = grid.axis
    lo, hi = a[idx.min(axis=0)], a[idx.max(axis=0)]
    # lattice nodes snapped to grid nodes
    axes = []
    for d in range(3):
        pts = np.linspace(lo[d], hi[d], lattice) if hi[d] > lo[d] else np.array([lo[d]])
        axes.append(np.unique(a[np.clip(np.rint((pts + grid.L / 2) / grid.h).astype(int), 0, grid.N - 1)]))
    table = np.empty(tuple(len(ax) for ax in axes) + (quad.M,), complex)
    for ii in np.ndindex(*table.shape[:3]):
        yy = np.array([axes[d][ii[d]] for d in range(3)])
        sol = solve_green(op, yy, k, V, grid, **kw)
        table[ii] = extract_limit(sol, quad, "integral").values
    ys = a[idx]
    Ainf = _trilinear(axes, table, ys)
    wts = grid.cell_volume * data[supp]
    phase = np.exp(-1j * k * (ys @ quad.nodes.T))
    return np.einsum("j,jm,jm->m", wts, phase, Ainf)


def _trilinear(axes, table, pts):
    out = np.zeros((len(pts), table.shape[-1]), complex)
    locs = []
    for d in range(3):
        ax = axes[d]
        if len(ax) == 1:
            locs.append((np.zeros(len(pts), int), np.zeros(len(pts))))
            continue
        i = np.clip(np.searchsorted(ax, pts[:, d]) - 1, 0, len(ax) - 2)
        t = (pts[:, d] - ax[i]) / (ax[i + 1] - ax[i])
        locs.append((i, t))
    for corner in np.ndindex(2, 2, 2):
        wgt = np.ones(len(pts))
        ind = []
        for d in range(3):
            i, t = locs[d]
            if len(axes[d]) == 1:
                if corner[d]:
                    wgt = wgt * 0
                ind.append(i)
                continue
            wgt = wgt * (t if corner[d] else 1 - t)
            ind.append(i + corner[d])
        out += wgt[:, None] * table[ind[0], ind[1], ind[2]]
    return out


def h_f_direct(f: GridField, k, quad: SphereQuadrature, V: DivergenceFormPotential,
               tol: float = 1e-10, rule: str = "lattice", op: str = "H") -> np.ndarray:
    """h_f as the far field of u = R_z f (one Nystrom solve).

    For the divergence form R_D f = s R_T (s f) with s = (1 + V)^(-1/2), and
    s = 1 outside supp V, so the far field is that of R_T (s f).
    """
    grid = f.grid
    k = SpectralPoint.coerce(k)
    kern = NystromKernel(grid, k, rule)
    _, n, inner = inner_region(grid)
    outside = f.data.copy()
    outside[inner] = 0
    if np.max(np.abs(outside)) > 1e-12 * max(np.max(np.abs(f.data)), 1e-300):
        raise ValueError("f leaks outside the inner half of the box")
    if op == "H":
        Vi = np.real(sample(grid, V.V).data)[inner]
        fi = f.data[inner]
    elif op == "D":
        U, Vfull = liouville_potential(V, grid, k.z)
        Vi = U[inner]
        fi = f.data[inner] / np.sqrt(1 + Vfull[inner])
    else:
        raise ValueError(f"unknown operator {op!r}")
    rhs = (Vi * kern.apply(fi)).reshape(-1)
    if np.any(Vi):
        shape = (n,) * 3

        def mv(v):
            v = v.reshape(shape)
            return (v + Vi * kern.apply(v)).reshape(-1)
        rho, _, _ = _krylov(mv, rhs, tol, 200, "gmres")
    else:
        rho = np.zeros_like(rhs)
    pts = kern.inner_points().reshape(-1, 3)
    wts = grid.cell_volume * (fi.reshape(-1) - rho)
    return kernels.farfield_sum(quad.nodes, np.zeros(3), pts, wts, k.k)


# ---------------------------------------------------------- model operators

def _phase_weights(f: GridField, k):
    """Grid nodes with nonzero data, exp(ik|y|) and unit vectors."""
    g = f.grid
    P = g.points().reshape(-1, 3)
    yh, r = _unit(P)
    return P, r, yh, np.exp(1j * k * r)


def _b2_weights(fs, r, ph, h):
    """h^3 f e^{ik|y|} / (4 pi |y|) with the lattice rule at the origin."""
    w = np.zeros_like(fs)
    nz = r > 0
    w[nz] = h ** 3 * fs[nz] * ph[nz] / (4 * np.pi * r[nz])
    w[~nz] = h * h * (-LATTICE_INV_R) * fs[~nz] / (4 * np.pi)
    return w


def _sum(P, wts, targets, k, limit, keep=None):
    nz = np.abs(wts) > 0 if keep is None else keep
    if not nz.any():
        return np.zeros(len(targets), complex)
    if limit:
        return kernels.farfield_sum(targets, np.zeros(3), P[nz], wts[nz], k)
    return kernels.amp_sum(targets, np.zeros(3), P[nz], wts[nz], k)


def model_operator(j, mode: str, f: GridField, k, quad: SphereQuadrature, r: float | None = None,
                   V: DivergenceFormPotential | None = None) -> SphereTrace:
    """B_r^(j) f (mode 'finite', needs r) or B_inf^(j) f (mode 'limit').

    j = 1: integrated-by-parts form minus B^(2)(f . y/|y|); j = 4: the
    divergence form with spectral div f; j = '4ibp': the integrated-by-parts form.
    """
    k = SpectralPoint.coerce(k).k
    limit = mode == "limit"
    if mode not in ("finite", "limit"):
        raise ValueError("mode must be 'finite' or 'limit'")
    if not limit and not (r and r > 0):
        raise ValueError("finite mode needs r > 0")
    g = f.grid
    h = g.h
    P, rr, yh, ph = _phase_weights(f, k)
    targets = quad.nodes if limit else r * quad.nodes
    radius = math.inf if limit else float(r)
    j = str(j)
    if j in ("2", "3"):
        if f.is_vector:
            raise ValueError(f"B^({j}) takes a scalar field")
        fs = f.data.reshape(-1)
        if j == "2":
            wts = _b2_weights(fs, rr, ph, h)
        else:
            if V is None:
                raise ValueError("B^(3) needs V")
            Vs = np.real(sample(g, V.V).data).reshape(-1)
            wts = h ** 3 * Vs * fs * ph / (4 * np.pi)
        vals = _sum(P, wts, targets, k, limit)
    elif j in ("4", "1", "4ibp"):
        if not f.is_vector:
            raise ValueError(f"B^({j}) takes a vector field")
        F = f.data.reshape(3, -1).T
        if j == "4":
            dv = spectral_divergence(f).data.reshape(-1)
            vals = _sum(P, h ** 3 * ph * dv / (4 * np.pi), targets, k, limit)
        else:
            vals = _b4_ibp(P, F, yh, ph, h, targets, k, limit)
            if j == "1":
                radial = np.einsum("ij,ij->i", F, yh)
                vals = vals - _sum(P, _b2_weights(radial, rr, ph, h), targets, k, limit)
    else:
        raise ValueError(f"unknown model operator {j!r}")
    return SphereTrace(np.zeros(3), radius, vals, quad)


def _b4_ibp(P, F, yh, ph, h, targets, k, limit):
    """-r int grad_y(exp(ik(-r + |x - y| + |y|)) / (4 pi |x - y|)) . f dy."""
    keep = np.any(F != 0, axis=1)
    radial = np.einsum("ij,ij->i", F, yh)
    ws = h ** 3 * 1j * k * ph * radial / (4 * np.pi)
    W = h ** 3 * (ph[:, None] * F) / (4 * np.pi)
    if not keep.any():
        return np.zeros(len(targets), complex)
    if limit:
        s = kernels.farfield_sum(targets, np.zeros(3), P[keep], ws[keep], k)
        comp = np.stack([kernels.farfield_sum(targets, np.zeros(3), P[keep], W[keep, d], k)
                         for d in range(3)], axis=1)
        return -(s - 1j * k * np.einsum("md,md->m", targets, comp))
    s = kernels.amp_sum(targets, np.zeros(3), P[keep], ws[keep], k)
    gr = kernels.amp_grad_sum(targets, np.zeros(3), P[keep], W[keep], k)
    return -(s + gr)


def b_identity_residual(f: GridField, k, quad: SphereQuadrature, r: float) -> float:
    """||B4 f - B1 f - B2(f . y/|y|)|| / ||B4 f|| on the sphere of radius r."""
    b4 = model_operator(4, "finite", f, k, quad, r)
    b1 = model_operator(1, "finite", f, k, quad, r)
    g = f.grid
    yh, _ = _unit(g.points().reshape(-1, 3))
    radial = np.einsum("ij,ij->i", f.data.reshape(3, -1).T, yh).reshape(g.shape)
    b2 = model_operator(2, "finite", GridField(g, radial), k, quad, r)
    return b4.distance(b1.values + b2.values) / max(b4.norm(), 1e-300)


def operator_bound(j, k, f: GridField, V: DivergenceFormPotential | None = None) -> float:
    """Right-hand side of the sup_r L2(S^2) estimate for B^(j), without its implicit constant."""
    k = complex(k)
    a, b = abs(k), k.imag
    e1 = math.sqrt(1 / a ** 2 + 1 / b ** 2 + a / b ** 1.5 + a / b ** 2 + 1 / b)
    e2 = math.sqrt(1 / a ** 2 + 1 / (a * b) ** 2 + 1 / (a * b ** 0.5) + 1 / (a * b ** 2))
    n2 = f.norm()
    j = str(j)
    if j == "1":
        return e1 * n2
    if j == "2":
        return e2 * weighted_norm(f)
    if j == "3":
        if V is None:
            raise ValueError("B^(3) bound needs V")
        return e2 * shell_norm(V.V, 2).value * n2
    if j == "4":
        g = f.grid
        yh, _ = _unit(g.points().reshape(-1, 3))
        radial = np.einsum("ij,ij->i", f.data.reshape(3, -1).T, yh).reshape(g.shape)
        return e1 * n2 + e2 * weighted_norm(GridField(g, radial))
    raise ValueError(f"unknown model operator {j!r}")


def bound_audit(j, k_samples, f_samples, quad: SphereQuadrature, radii,
                V: DivergenceFormPotential | None = None) -> dict:
    """Ratios sup_r ||B_r^(j) f|| / bound(k, f) over the sample sets."""
    rows = []
    for k in k_samples:
        for i, f in enumerate(f_samples):
            bnd = operator_bound(j, k, f, V)
            if bnd == 0:
                rows.append({"k": complex(k), "sample": i, "sup": 0.0, "bound": 0.0, "ratio": 0.0})
                continue
            sup = max(model_operator(j, "finite", f, k, quad, r, V).norm() for r in radii)
            rows.append({"k": complex(k), "sample": i, "sup": sup, "bound": bnd, "ratio": sup / bnd})
    return {"j": str(j), "rows": rows, "max_ratio": max(r["ratio"] for r in rows) if rows else 0.0}


# ---------------------------------------------------------- energy functionals

@dataclass(eq=False)
class EnergyFunctionals:
    r: np.ndarray
    m: np.ndarray
    m1: np.ndarray
    M: np.ndarray
    M_hat: np.ndarray
    A_tail: np.ndarray


def _shell_rule(r1, r2, n_r):
    x, w = np.polynomial.legendre.leggauss(n_r)
    return 0.5 * (r2 - r1) * x + 0.5 * (r2 + r1), 0.5 * (r2 - r1) * w


def _mu_on_sphere(amp, r, quad):
    pts = r * quad.nodes
    mu, dmu = amp.mu_and_gradient(pts)
    mur = np.einsum("ij,ij->i", dmu, quad.nodes)
    return mu, dmu, mur


def energy_functionals(amp: AmplitudeField, r_grid, quad: SphereQuadrature, n_r: int = 24) -> EnergyFunctionals:
    """m, m1 as sphere mean squares, running suprema M, M_hat and the tail Dirichlet integral.

    Suprema and tails are taken over the sampled radii only (the box is finite).
    """
    rg = np.asarray(r_grid, float)
    m = np.empty(len(rg))
    m1 = np.empty(len(rg))
    for i, r in enumerate(rg):
        mu, _, mur = _mu_on_sphere(amp, r, quad)
        m[i] = np.sum(quad.weights * np.abs(mu) ** 2) / (4 * np.pi)
        m1[i] = np.sum(quad.weights * np.abs(mur) ** 2) / (4 * np.pi)
    # int_rho^{rho+1} m by interpolation on the sampled radii
    win = np.array([_window_mean(rg, m, r) for r in rg])
    M = np.maximum.accumulate(win[::-1])[::-1]
    M_hat = np.maximum.accumulate(m[::-1])[::-1]
    rmax = rg[-1]
    tails = np.empty(len(rg))
    for i, r in enumerate(rg):
        tails[i] = _dirichlet(amp, r, rmax, quad, n_r) if r < rmax else 0.0
    return EnergyFunctionals(rg, m, m1, M, M_hat, tails)


def _window_mean(rg, m, r):
    hi = min(r + 1.0, rg[-1])
    if hi <= r:
        return float(m[-1])
    t = np.linspace(r, hi, 33)
    return float(np.trapezoid(np.interp(t, rg, m), t) / (hi - r))


def _dirichlet(amp, r1, r2, quad, n_r):
    rs, ws = _shell_rule(r1, r2, n_r)
    tot = 0.0
    for r, w in zip(rs, ws):
        _, dmu, _ = _mu_on_sphere(amp, r, quad)
        tot += w * np.sum(quad.weights * np.sum(np.abs(dmu) ** 2, axis=1))
    return float(tot)


def energy_identity_audit(amp: AmplitudeField, V: DivergenceFormPotential, r1: float, r2: float,
                          quad: SphereQuadrature, n_r: int = 48) -> dict:
    """Both sides of the annulus identity for mu = A(., 0):

    int |grad mu|^2/|x|^2 - 2ik int mu_r conj(mu)/|x|^2 + int V |mu|^2/|x|^2 = I_2 - I_1.
    """
    if np.any(amp.y):
        raise ValueError("the identity is assembled for a source at the origin")
    k = amp.k
    rs, ws = _shell_rule(r1, r2, n_r)
    dir_, cross, pot = 0.0, 0.0, 0.0
    for r, w in zip(rs, ws):
        mu, dmu, mur = _mu_on_sphere(amp, r, quad)
        Vv = V.V(r * quad.nodes)
        dir_ += w * np.sum(quad.weights * np.sum(np.abs(dmu) ** 2, axis=1))
        cross += w * np.sum(quad.weights * mur * np.conj(mu))
        pot += w * np.sum(quad.weights * Vv * np.abs(mu) ** 2)

    def boundary(r):
        mu, _, mur = _mu_on_sphere(amp, r, quad)
        return np.sum(quad.weights * mur * np.conj(mu))
    I1, I2 = boundary(r1), boundary(r2)
    lhs = dir_ - 2j * k * cross + pot
    rhs = I2 - I1
    scale = max(abs(dir_), abs(2 * k * cross), abs(pot), abs(I1), abs(I2))
    return {"dirichlet": float(dir_), "cross": complex(cross), "potential": float(pot),
            "I1": complex(I1), "I2": complex(I2), "lhs": complex(lhs), "rhs": complex(rhs),
            "residual": float(abs(lhs - rhs) / scale)}
