"""Half-line operators L_l = -d^2/dr^2 + l(l+1)/r^2 + q'(r) + 2 q(r)/r on [1, r_max].

These are the partial-wave blocks of -Lap + V for radial V = q' + 2q/r
(u = r f substitution).  Growth is reported as per-interval transfer-matrix
norms; no spectral verdicts are drawn from it.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import spherical_jn, spherical_yn, sph_harm_y

from .fields import BoxGrid, GridField, SphereQuadrature, interpolate, sample, spectral_laplacian

BUMP_MAX_STEP = 0.01


class IntegrationError(RuntimeError):
    pass


def _zero(r):
    return np.zeros_like(np.asarray(r, float))


@dataclass(frozen=True)
class HalfLineOperator:
    """Partial-wave operator with Dirichlet condition at r = r_min (= 1).

    ``q`` and ``dq`` are the radial profile and its derivative; ``bumps`` lists
    intervals where the integrator step is capped at BUMP_MAX_STEP.
    """

    l: int
    q: Callable = _zero
    dq: Callable = _zero
    r_max: float = 30.0
    r_min: float = 1.0
    bumps: tuple = ()

    def __post_init__(self):
        if self.l < 0 or int(self.l) != self.l:
            raise ValueError("l must be a nonnegative integer")
        if not self.r_max > self.r_min > 0:
            raise ValueError("need 0 < r_min < r_max")

    @classmethod
    def from_profile(cls, l: int, profile, r_max: float | None = None) -> "HalfLineOperator":
        """From a potentials.RadialProfile (q, dq, bump_intervals)."""
        r_max = r_max if r_max is not None else float(profile.centers[-1] + 2)
        return cls(int(l), profile.q, profile.dq, float(r_max), 1.0, tuple(profile.bump_intervals()))

    @property
    def lam(self) -> float:
        return float(self.l * (self.l + 1))

    def potential(self, r):
        r = np.asarray(r, float)
        return self.lam / r ** 2 + np.asarray(self.dq(r), float) + 2 * np.asarray(self.q(r), float) / r

    def apply(self, u, du2, r):
        """(L u)(r) from samples of u and u''."""
        return -np.asarray(du2) + self.potential(r) * np.asarray(u)

    def _max_step(self, a, b):
        for lo, hi in self.bumps:
            if a < hi and b > lo:
                return BUMP_MAX_STEP
        return np.inf


def _pairwise(y, v):
    out = np.empty_like(y)
    out[0::2] = y[1::2]
    out[1::2] = v * y[0::2]
    return out


def _integrate(op, E, r0, r1, y0, dense=False, rtol=1e-12, atol=1e-14):
    # split at bump edges so the step cap applies only inside bumps
    cuts = sorted({r0, r1, *[c for lo, hi in op.bumps for c in (lo, hi) if r0 < c < r1]})
    y = np.asarray(y0, float)
    pieces = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        sol = solve_ivp(lambda r, yy: _pairwise(yy, op.potential(r) - E), (a, b), y, method="DOP853",
                        rtol=rtol, atol=atol, max_step=op._max_step(a, b), dense_output=dense)
        if sol.status != 0:
            raise IntegrationError(f"integration failed on [{a}, {b}]: {sol.message}")
        y = sol.y[:, -1]
        pieces.append(sol)
    return y, pieces


@dataclass
class RadialSolution:
    l: int
    E: float
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray
    interval_starts: np.ndarray
    log_norms: np.ndarray
    determinants: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def cumulative_log_norm(self) -> np.ndarray:
        return np.cumsum(self.log_norms)

    def write_csv(self, fh) -> None:
        """Rows (l, E, r, log||T||, u, u'); log||T|| is cumulative at the sample radius."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["l", "E", "r", "log_T", "u", "du"])
        cum = np.concatenate([[0.0], self.cumulative_log_norm])
        idx = np.searchsorted(self.interval_starts[1:], self.r, side="right") if len(self.interval_starts) else []
        for i, r in enumerate(self.r):
            w.writerow([self.l, repr(float(self.E)), repr(float(r)), repr(float(cum[idx[i]])),
                        repr(float(self.u[i])), repr(float(self.du[i]))])


def transfer_matrix(op: HalfLineOperator, E: float, a: float, b: float) -> np.ndarray:
    """T mapping (u, u')(a) to (u, u')(b)."""
    y, _ = _integrate(op, E, a, b, [1.0, 0.0, 0.0, 1.0])
    return np.array([[y[0], y[2]], [y[1], y[3]]])


def integrate_solution(op: HalfLineOperator, E: float, r_max: float | None = None,
                       n_samples: int = 2000, initial=(0.0, 1.0)) -> RadialSolution:
    """Solve -u'' + V u = E u from (u, u')(1) = initial with per-unit-interval transfer norms."""
    E = float(E)
    if not math.isfinite(E):
        raise ValueError("E must be real and finite")
    r_max = float(r_max if r_max is not None else op.r_max)
    _, pieces = _integrate(op, E, op.r_min, r_max, initial, dense=True)
    r = np.linspace(op.r_min, r_max, n_samples)
    u = np.empty(n_samples)
    du = np.empty(n_samples)
    for p in pieces:
        lo, hi = p.t[0], p.t[-1]
        m = (r >= lo) & (r <= hi)
        vals = p.sol(r[m])
        u[m], du[m] = vals[0], vals[1]
    starts = np.arange(op.r_min, r_max, 1.0)
    logs, dets = [], []
    for a in starts:
        T = transfer_matrix(op, E, a, min(a + 1.0, r_max))
        logs.append(math.log(np.linalg.norm(T, 2)))
        dets.append(np.linalg.det(T))
    return RadialSolution(op.l, E, r, u, du, starts, np.array(logs), np.array(dets))


def bump_log_norms(op: HalfLineOperator, E: float) -> np.ndarray:
    """log ||T|| across each bump interval, isolating the growth each bump contributes."""
    return np.array([math.log(np.linalg.norm(transfer_matrix(op, E, lo, hi), 2)) for lo, hi in op.bumps
                     if lo >= op.r_min])


def wronskian_drift(op: HalfLineOperator, E: float, r_max: float | None = None,
                    y1=(0.0, 1.0), y2=(1.0, 0.3), n_samples: int = 500) -> float:
    """max |W(r) - W(1)| / |W(1)| for two solutions of the same equation."""
    s1 = integrate_solution(op, E, r_max, n_samples, y1)
    s2 = integrate_solution(op, E, r_max, n_samples, y2)
    W = s1.u * s2.du - s1.du * s2.u
    return float(np.max(np.abs(W - W[0])) / abs(W[0]))


def riccati_bessel_solution(l: int, E: float, r, r0: float = 1.0):
    """Free (q = 0) solution with u(r0) = 0, u'(r0) = 1, from x j_l(x) and x y_l(x) at x = sqrt(E) r."""
    k = math.sqrt(E)
    r = np.asarray(r, float)

    def J(x):
        return x * spherical_jn(l, x), spherical_jn(l, x) + x * spherical_jn(l, x, derivative=True)

    def Y(x):
        return x * spherical_yn(l, x), spherical_yn(l, x) + x * spherical_yn(l, x, derivative=True)

    j0, dj0 = J(k * r0)
    y0, dy0 = Y(k * r0)
    # A J + B Y with value 0 and slope 1 at r0 (derivatives in r carry a factor k)
    M = np.array([[j0, y0], [k * dj0, k * dy0]])
    A, B = np.linalg.solve(M, [0.0, 1.0])
    jr, djr = J(k * r)
    yr, dyr = Y(k * r)
    return A * jr + B * yr, k * (A * djr + B * dyr)


# ------------------------------------------------ partial-wave consistency

@dataclass
class DecompositionReport:
    l: int
    m: int
    radii: np.ndarray
    residual: float
    cross: dict


def _ylm(l, m, nodes):
    theta = np.arccos(np.clip(nodes[:, 2], -1, 1))
    phi = np.arctan2(nodes[:, 1], nodes[:, 0])
    return sph_harm_y(l, m, theta, phi)


def decomposition_consistency(V_radial: Callable | None, l: int, m: int, grid: BoxGrid,
                              width: float = 1.0, radii=None, quad: SphereQuadrature | None = None,
                              others=((0, 0), (1, -1), (1, 0), (1, 1), (2, 0), (2, 1))) -> DecompositionReport:
    """Compare the 3D operator on g(r) Y_l^m with the reduced 1D operator.

    g(r) = r^l exp(-r^2 / (2 width^2)); -Lap + V is applied spectrally on the grid,
    projected onto Y_l^m over spheres, and compared with (L_l u)(r) / r for u = r g.
    Projections onto the other (l', m') are reported in ``cross``.
    """
    if abs(m) > l:
        raise ValueError("|m| must not exceed l")
    Vr = V_radial if V_radial is not None else _zero
    quad = quad or SphereQuadrature.gauss_product(24)
    radii = np.asarray(radii if radii is not None else np.linspace(0.5, 3.0, 6), float)
    s2 = width ** 2

    def f(x):
        r = np.sqrt(np.sum(x * x, -1))
        with np.errstate(invalid="ignore", divide="ignore"):
            nodes = np.where(r[..., None] > 0, x / np.maximum(r, 1e-300)[..., None], [0.0, 0.0, 1.0])
        y = _ylm(l, m, nodes.reshape(-1, 3)).reshape(r.shape)
        return r ** l * np.exp(-r * r / (2 * s2)) * y

    F = sample(grid, f)
    Hf = -spectral_laplacian(F).data + sample(grid, lambda x: Vr(np.sqrt(np.sum(x * x, -1)))).data * F.data
    Hf = GridField(grid, Hf)
    conj_y = np.conj(_ylm(l, m, quad.nodes))
    proj = np.empty(len(radii), complex)
    cross = {}
    vals_all = []
    for i, r in enumerate(radii):
        vals = interpolate(Hf, r * quad.nodes)
        vals_all.append(vals)
        proj[i] = np.sum(quad.weights * vals * conj_y)
    # reduced side: u = r g = r^(l+1) e^{-r^2/2s2}, u'' analytic
    r = radii
    p = l + 1
    e = np.exp(-r * r / (2 * s2))
    u = r ** p * e
    d2u = e * (p * (p - 1) * r ** (p - 2) - (2 * p + 1) * r ** p / s2 + r ** (p + 2) / s2 ** 2)
    lam = l * (l + 1)
    Lu = -d2u + (lam / r ** 2 + np.asarray(Vr(r), float)) * u
    ref = Lu / r
    residual = float(np.max(np.abs(proj - ref)) / np.max(np.abs(ref)))
    scale = np.max(np.abs(ref))
    for lp, mp in others:
        if (lp, mp) == (l, m):
            continue
        cy = np.conj(_ylm(lp, mp, quad.nodes))
        c = max(abs(np.sum(quad.weights * v * cy)) for v in vals_all)
        cross[(lp, mp)] = float(c / scale)
    return DecompositionReport(l, m, radii, residual, cross)
