"""Wave evolution: free propagator, Radon asymptotics, contour-filtered propagation for D,
wave-operator convergence and the stationary wave-operator formula.

On the grid the spectral variable of sqrt(H0) is s = 2 pi |xi|.
"""
from __future__ import annotations

import math
import time
from types import SimpleNamespace
from dataclasses import dataclass, field

import numpy as np

from .fields import (BoxGrid, GridField, SphereQuadrature, fourier_at, radon, sample, transform)
from .potentials import DivergenceFormPotential
from .resolvent import (NystromKernel, SpectralPoint, _krylov, apply_resolvent,
                        inner_region, liouville_potential, _check_support)


class QuadratureError(RuntimeError):
    pass


def spectral_radius(grid: BoxGrid) -> np.ndarray:
    """s = 2 pi |xi| on the FFT-ordered frequency grid."""
    return 2 * np.pi * np.sqrt(grid.freq_norm2())


# ------------------------------------------------------------------ filter

@dataclass(frozen=True)
class ContourFilter:
    """Band filter q_n(k) = -chi_(a,b)(k) p_n(k) / (2k), p_n = (k - a)^n (k - b)^n.

    The contour is the counterclockwise rectangle with vertical sides
    through a and b and horizontal sides at Im k = +-height.  Vertical
    sides use panels graded geometrically towards the real-axis crossing.
    """

    a: float
    b: float
    n: int = 3
    height: float | None = None
    nodes_per_panel: int = 16
    grading: int = 6

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError("need 0 < a < b")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def H(self) -> float:
        return self.height if self.height is not None else 0.5 * (self.b - self.a)

    def p(self, k):
        k = np.asarray(k, complex)
        return (k - self.a) ** self.n * (k - self.b) ** self.n

    def q(self, s):
        s = np.asarray(s, float)
        inside = (s > self.a) & (s < self.b)
        out = np.zeros(s.shape, complex)
        out[inside] = -self.p(s[inside]) / (2 * s[inside])
        return out

    def _panels(self):
        a, b, H = self.a, self.b, self.H
        g = [H * 2.0 ** (-j) for j in range(self.grading)][::-1]
        ups = [0.0] + g                       # 0 < ... < H
        panels = []
        # bottom edge a - iH -> b - iH
        m = max(1, int(math.ceil((b - a) / H)))
        xs = np.linspace(a, b, m + 1)
        panels += [(x0 - 1j * H, x1 - 1j * H) for x0, x1 in zip(xs[:-1], xs[1:])]
        # right edge b - iH -> b + iH
        lower = [b - 1j * u for u in ups[::-1]]
        upper = [b + 1j * u for u in ups]
        pts = lower + upper[1:]
        panels += list(zip(pts[:-1], pts[1:]))
        # top edge b + iH -> a + iH
        panels += [(x1 + 1j * H, x0 + 1j * H) for x0, x1 in zip(xs[:-1], xs[1:])][::-1]
        # left edge a + iH -> a - iH
        pts = [a + 1j * u for u in ups[::-1]] + [a - 1j * u for u in ups[1:]]
        panels += list(zip(pts[:-1], pts[1:]))
        return panels

    def nodes(self, level: int = 0):
        """Contour nodes and weights including dk / (2 pi i); level doubles the per-panel order."""
        m = self.nodes_per_panel * 2 ** level
        x, w = np.polynomial.legendre.leggauss(m)
        ks, ws = [], []
        for z0, z1 in self._panels():
            ks.append(0.5 * (z0 + z1) + 0.5 * (z1 - z0) * x)
            ws.append(0.5 * (z1 - z0) * w)
        return np.concatenate(ks), np.concatenate(ws) / (2j * np.pi)


# -------------------------------------------------------- band-limited states

@dataclass(eq=False)
class BandLimitedState:
    f: GridField
    annulus: tuple

    def check(self, tol: float = 1e-12) -> float:
        """Largest DFT magnitude outside the annulus relative to the peak."""
        F = np.abs(np.fft.fftn(self.f.data))
        s = spectral_radius(self.f.grid)
        lo, hi = self.annulus
        out = F[(s < lo) | (s > hi)]
        rel = float(out.max() / F.max()) if out.size else 0.0
        if rel > tol:
            raise ValueError(f"spectrum leaks outside the annulus ({rel:.2e})")
        return rel


def _smooth_bump(t):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    m = (t > 0) & (t < 1)
    out[m] = np.exp(-1.0 / (t[m] * (1 - t[m])) + 4.0)
    return out


def band_limited_state(grid: BoxGrid, lo: float, hi: float, center=(0.0, 0.0, 0.0),
                       direction=None, spread: float | None = None) -> BandLimitedState:
    """State whose transform is a smooth bump in s = 2 pi |xi| over (lo, hi).

    ``direction`` adds an angular factor exp(-(1 - <xi_hat, d>) / spread) for a
    directed packet; ``center`` translates the state.
    """
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    s = spectral_radius(grid)
    if hi >= np.pi / grid.h:
        raise ValueError("annulus exceeds the grid band")
    prof = _smooth_bump((s - lo) / (hi - lo))
    if direction is not None:
        d = np.asarray(direction, float)
        d = d / np.linalg.norm(d)
        a, b, c = grid.freq_mesh()
        nrm = np.sqrt(a * a + b * b + c * c)
        nrm = np.where(nrm > 0, nrm, 1.0)
        cosang = (a * d[0] + b * d[1] + c * d[2]) / nrm
        prof = prof * np.exp(-(1 - cosang) / (spread or 0.5))
    a, b, c = grid.freq_mesh()
    x0 = np.asarray(center, float)
    phase = np.exp(-2j * np.pi * (a * x0[0] + b * x0[1] + c * x0[2]))
    f = transform(GridField(grid, prof * phase, "fourier"), "inverse")
    return BandLimitedState(f.with_data(f.data / f.norm(), name="band_limited"), (lo, hi))


def multiplier(f: GridField, symbol) -> GridField:
    axes = (-3, -2, -1)
    return f.with_data(np.fft.ifftn(np.fft.fftn(f.data, axes=axes) * symbol, axes=axes))


def free_evolve(f, t: float) -> GridField:
    """e^{it sqrt(H0)} f."""
    f = f.f if isinstance(f, BandLimitedState) else f
    if t == 0:
        return f
    return multiplier(f, np.exp(1j * t * spectral_radius(f.grid)))


def filtered_free(f, t: float, filt: ContourFilter) -> GridField:
    """Exact e^{-it sqrt(H0)} q_n(sqrt(H0)) f."""
    f = f.f if isinstance(f, BandLimitedState) else f
    s = spectral_radius(f.grid)
    return multiplier(f, np.exp(-1j * t * s) * filt.q(s))


# ------------------------------------------------------ Radon asymptotics

def kirchhoff_asymptotic(f, t: float, x_probes, oversample: int = 2) -> np.ndarray:
    """Main term of e^{it sqrt(H0)} f at large t:
    (4 pi t)^-1 R[-x_hat . grad f + i |grad| f](|x| - t, x_hat)."""
    f = f.f if isinstance(f, BandLimitedState) else f
    if not t > 0:
        raise ValueError("t must be positive")
    X = np.atleast_2d(np.asarray(x_probes, float))
    g = f.grid
    a, b, c = g.freq_mesh()
    s = spectral_radius(g)
    out = np.empty(len(X), complex)
    cache = {}
    for i, x in enumerate(X):
        r = np.linalg.norm(x)
        sig = x / r
        key = tuple(np.round(sig, 12))
        if key not in cache:
            sym = -2j * np.pi * (a * sig[0] + b * sig[1] + c * sig[2]) + 1j * s
            cache[key] = multiplier(f, sym)
        out[i] = radon(cache[key], r - t, sig, oversample)[0] / (4 * np.pi * t)
    return out


# ---------------------------------------------------- contour propagation

@dataclass
class ContourReport:
    level: int
    n_nodes: int
    change: float
    solves: int
    iterations: list = field(default_factory=list)
    wall_time: float = 0.0


def _contour_sum(f, t, filt, level, op, Vgrid, solve_tol, stats):
    ks, ws = filt.nodes(level)
    coef = ws * np.exp(-1j * t * ks) * filt.p(ks)
    g = f.grid
    if op == "H0" or Vgrid is None:
        s2 = 4 * np.pi ** 2 * g.freq_norm2()
        sym = np.zeros(g.shape, complex)
        for c_i, k_i in zip(coef, ks):
            sym += c_i / (s2 - k_i * k_i)
        return multiplier(f, sym).data
    # weight-aware solve tolerances: |coef| / |Im z| bounds each node's contribution
    imz = np.abs((ks * ks).imag)
    contrib = np.abs(coef) / np.maximum(imz, 1e-300)
    cmax = contrib.max()
    acc = np.zeros(g.shape, complex)
    for c_i, k_i, w_i in zip(coef, ks, contrib):
        kk = k_i if k_i.imag > 0 else -k_i
        rtol = float(np.clip(solve_tol * cmax / max(w_i, 1e-300), solve_tol, 1e-2))
        sol = apply_resolvent(f, SpectralPoint(kk), op, None, tol=rtol, margin_tol=None,
                              Vgrid=Vgrid, maxiter=400)
        stats["solves"] += 1
        stats["iterations"].append(sol.stats.get("iterations"))
        acc += c_i * sol.u.data
    return acc


def contour_propagate(f, t: float, filt: ContourFilter, op: str = "H0",
                      V: DivergenceFormPotential | None = None, tol: float = 1e-6,
                      solve_tol: float = 1e-9, max_level: int = 3, Vgrid=None,
                      return_report: bool = False):
    """e^{-it sqrt(A)} q_n(sqrt(A)) f by contour quadrature of resolvents.

    The per-panel order doubles until two successive results differ by less
    than ``tol`` relative to the result.
    """
    t0 = time.perf_counter()
    f = f.f if isinstance(f, BandLimitedState) else f
    if op not in ("H0", "H", "D"):
        raise ValueError(f"unknown operator {op!r}")
    if op != "H0" and Vgrid is None:
        if V is None:
            raise ValueError(f"op={op} needs V")
        Vgrid = np.real(sample(f.grid, V.V).data)
    stats = {"solves": 0, "iterations": []}
    prev = _contour_sum(f, t, filt, 0, op, Vgrid, solve_tol, stats)
    change = math.inf
    fnorm = np.linalg.norm(f.data)
    for level in range(1, max_level + 1):
        cur = _contour_sum(f, t, filt, level, op, Vgrid, solve_tol, stats)
        # relative to the result, or to f when the filter annihilates it
        change = float(np.linalg.norm(cur - prev) / max(np.linalg.norm(cur), fnorm, 1e-300))
        prev = cur
        if change <= tol:
            break
    else:
        raise QuadratureError(f"contour quadrature not converged (change {change:.2e})")
    out = GridField(f.grid, prev, "physical", f"filtered_{op}")
    if return_report:
        rep = ContourReport(level, len(filt.nodes(level)[0]), change, stats["solves"],
                            stats["iterations"], time.perf_counter() - t0)
        return out, rep
    return out


def duhamel_check(f, t: float, filt: ContourFilter, op: str = "H0", V=None, dt: float = 1e-2,
                  tol: float = 1e-8, Vgrid=None) -> dict:
    """Residual of u_tt + A u for u(t) = e^{-it sqrt(A)} q_n f (central differences in t)."""
    from .resolvent import operator_apply
    f = f.f if isinstance(f, BandLimitedState) else f
    if op != "H0" and Vgrid is None and V is not None:
        Vgrid = np.real(sample(f.grid, V.V).data)
    us = [contour_propagate(f, t + d, filt, op, tol=tol, Vgrid=Vgrid) for d in (-dt, 0.0, dt)]
    utt = (us[0].data - 2 * us[1].data + us[2].data) / dt ** 2
    Au = operator_apply(us[1], op, Vgrid).data
    res = np.linalg.norm(utt + Au) / max(np.linalg.norm(Au), 1e-300)
    return {"t": t, "dt": dt, "residual": float(res)}


# --------------------------------------------------------- wave operators

def max_feasible_time(grid: BoxGrid) -> float:
    return grid.L / 3


def wave_operator_time(f, t: float, filt: ContourFilter, V=None, op: str = "D", Vgrid=None,
                       tol: float = 1e-6, solve_tol: float = 1e-9) -> GridField:
    """W_t f = e^{it sqrt(A)} q_n(sqrt(A)) e^{-it sqrt(H0)} f."""
    f = f.f if isinstance(f, BandLimitedState) else f
    if abs(t) > max_feasible_time(f.grid) + 1e-12:
        raise ValueError(f"t={t} exceeds the in-box limit L/3={max_feasible_time(f.grid):g}")
    g = free_evolve(f, -t)
    return contour_propagate(g, -t, filt, op, V, tol=tol, solve_tol=solve_tol, Vgrid=Vgrid)


def wave_operator_cauchy(f, V, filt: ContourFilter, t_ladder, op: str = "D", R_out: float | None = None,
                         tol: float = 1e-6, solve_tol: float = 1e-9) -> list:
    """Rows (t, delta = ||W_{t_next} f - W_t f||, ||W_t f||, mass outside B_R)."""
    f = f.f if isinstance(f, BandLimitedState) else f
    ts = [float(t) for t in t_ladder]
    if any(b <= a for a, b in zip(ts[:-1], ts[1:])):
        raise ValueError("t_ladder must increase")
    Vgrid = None if V is None else np.real(sample(f.grid, V.V).data)
    if Vgrid is not None and op == "D" and np.max(np.abs(Vgrid)) >= 1:
        raise ValueError("divergence form needs sup |V| < 1")
    r = f.grid.radius()
    R_out = R_out if R_out is not None else f.grid.L / 4
    Ws = [wave_operator_time(f, t, filt, None, op if Vgrid is not None else "H0", Vgrid, tol, solve_tol)
          for t in ts]
    rows = []
    for i, t in enumerate(ts):
        d = float(np.linalg.norm(Ws[i + 1].data - Ws[i].data) * f.grid.h ** 1.5) if i + 1 < len(ts) else math.nan
        rows.append({"t": t, "delta": d, "norm": Ws[i].norm(),
                     "outside": float(np.sqrt(np.sum(np.abs(Ws[i].data[r > R_out]) ** 2)) * f.grid.h ** 1.5)})
    return rows


# ------------------------------------------------- stationary wave operator

def _scattered_limits(V, grid, ks, sigmas, op="D", tol=1e-10):
    """a_inf(sigma, y, k) - exp(-ik <sigma, y>) on the grid, shape (len(ks), len(sigmas), N, N, N).

    By reciprocity a_inf(sigma, ., k) is the total field for the incident wave
    exp(-ik <sigma, y>); it is found from the Nystrom density of that problem.
    """
    from .resolvent import GreenSolution
    lo, n, inner = inner_region(grid)
    shape = (n,) * 3
    out = np.empty((len(ks), len(sigmas)) + grid.shape, complex)
    P = grid.points().reshape(grid.shape + (3,))
    for i, k in enumerate(ks):
        # real k is the boundary value from the upper half plane (outgoing kernel)
        sp = SpectralPoint(k) if complex(k).imag > 0 else SimpleNamespace(k=complex(k), z=complex(k) ** 2)
        kern = NystromKernel(grid, sp)
        Vfull = np.real(sample(grid, V.V).data)
        _check_support(grid, Vfull)
        if op == "D":
            U, _ = liouville_potential(V, grid, sp.z)
            U = U[inner]
            sfull = 1.0 / np.sqrt(1 + Vfull)
        else:
            U = Vfull[inner]
            sfull = np.ones(grid.shape)

        def mv(v):
            v = v.reshape(shape)
            return (v + U * kern.apply(v)).reshape(-1)
        for j, sg in enumerate(sigmas):
            inc = np.exp(-1j * k * (P @ sg))
            rho, _, _ = _krylov(mv, (U * inc[inner]).reshape(-1), tol, 200, "gmres")
            tmp = GreenSolution("T", sp, grid, 0.0, {}, np.zeros(3), rho.reshape(shape), kern)
            out[i, j] = sfull * (inc + tmp.correction.data) - inc
    return out


def stationary_wave_operator(f, V: DivergenceFormPotential | None, quad: SphereQuadrature,
                             kappa_grid, eps_ladder=None, op: str = "D",
                             return_error: bool = False):
    """(W^- f)(y) = (2 pi)^-3 int kappa^2 dkappa int conj(a_inf(sigma, y, -kappa)) fcheck(kappa sigma / 2 pi) dsigma.

    ``kappa_grid`` is (nodes, weights) of a rule covering the radial support of fcheck.
    The free part exp(i kappa <sigma, y>) of a_inf(sigma, y, -kappa) is used exactly.
    The scattered part is taken at the boundary value -kappa + i0 by default; with
    ``eps_ladder`` it is evaluated at -kappa + i eps and extrapolated linearly to eps = 0
    instead.  Each (kappa, sigma) pair costs one solve per eps, so keep the rules small
    when V != 0.
    """
    f = f.f if isinstance(f, BandLimitedState) else f
    g = f.grid
    kap, wk = (np.asarray(v, float) for v in kappa_grid)
    nodes = quad.nodes
    etas = (kap[:, None, None] * nodes[None, :, :] / (2 * np.pi)).reshape(-1, 3)
    fcheck = fourier_at(f, -etas).reshape(len(kap), quad.M)
    coef = (wk * kap ** 2)[:, None] * quad.weights[None, :] * fcheck / (2 * np.pi) ** 3
    # free part: conj(exp(i kappa <sigma, y>)), contracted separably over the axes
    ax = g.axis
    K = (kap[:, None, None] * nodes[None, :, :]).reshape(-1, 3)
    c = coef.reshape(-1)
    E = [np.exp(-1j * np.outer(ax, K[:, d])) for d in range(3)]
    out = np.empty(g.shape, complex)
    for i in range(g.N):
        out[i] = (E[1] * (E[0][i][None, :] * c[None, :])) @ E[2].T
    err = 0.0
    if V is not None and np.any(sample(g, V.V).data):
        if eps_ladder is None:
            sc = _scattered_limits(V, g, [-kk + 0j for kk in kap], list(nodes), op)
            ext = np.einsum("ij,ij...->...", coef, np.conj(sc))
        else:
            vals = []
            for eps in eps_ladder:
                sc = _scattered_limits(V, g, [-kk + 1j * eps for kk in kap], list(nodes), op)
                vals.append(np.einsum("ij,ij...->...", coef, np.conj(sc)))
            e = np.asarray(eps_ladder, float)
            ext = (e[-2] * vals[-1] - e[-1] * vals[-2]) / (e[-2] - e[-1])
            err = float(np.linalg.norm(ext - vals[-1]) * g.h ** 1.5)
        out = out + ext
    res = GridField(g, out, "physical", "W_minus")
    return (res, err) if return_error else res


# ---------------------------------------------------- ballistic projection

def ballistic_projection(f: GridField, V: DivergenceFormPotential | None, quad: SphereQuadrature,
                         d_values=(1.0,), near_real=(), op: str = "D", method: str = "direct") -> dict:
    """F(sigma, k) = int f(y) a_inf(sigma, y, k) dy on k = i d and at points near the real axis."""
    from .amplitude import h_f, h_f_direct
    from .potentials import make_zero
    if np.any(f.data.real < -1e-14) or np.any(np.abs(f.data.imag) > 1e-14):
        raise ValueError("f must be real and nonnegative")
    if not np.any(f.data):
        z = np.zeros(quad.M)
        return {"imag_axis": {float(d): z.tolist() for d in d_values}, "min_F": 0.0,
                "positive": False, "near_real": {}, "verdict": "f is zero"}
    V = V or make_zero()
    route = h_f_direct if method == "direct" else h_f
    imag = {}
    for d in d_values:
        F = route(f, 1j * d, quad, V, op=op)
        imag[float(d)] = F
    mins = {d: float(np.min(F.real)) for d, F in imag.items()}
    max_im = max(float(np.max(np.abs(F.imag) / np.abs(F))) for F in imag.values())
    near = {}
    for k in near_real:
        F = route(f, k, quad, V, op=op)
        near[str(complex(k))] = float(np.sqrt(np.sum(quad.weights * np.abs(F) ** 2)))
    positive = all(m > 0 for m in mins.values())
    return {"imag_axis": {d: F.real.tolist() for d, F in imag.items()}, "min_F": min(mins.values()),
            "max_rel_imag": max_im, "positive": positive, "near_real_norm": near,
            "verdict": "F > 0 on the imaginary axis" if positive else "positivity fails"}
