"""Admissible potentials V = div Q and their shell norms."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fields import SphereQuadrature


class FieldBlowupError(ArithmeticError):
    """A sampled field produced a non-finite value."""


def _norm(x):
    return np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))


@dataclass(frozen=True, eq=False)
class DivergenceFormPotential:
    """Vector field Q with V = div Q; both evaluate on arrays of points ``(..., 3)``."""

    Q: Callable
    V: Callable
    family: str
    params: dict = field(default_factory=dict)
    smoothness: int = 1
    DQ: Callable | None = None
    support_radius: float = math.inf
    spectral_divergence: bool = False

    def __call__(self, x):
        return self.V(x)

    def scaled(self, c: float) -> "DivergenceFormPotential":
        Q, V, DQ = self.Q, self.V, self.DQ
        return DivergenceFormPotential(
            lambda x: c * Q(x), lambda x: c * V(x), self.family,
            {**self.params, "coupling": c * self.params.get("coupling", 1.0)},
            self.smoothness, None if DQ is None else (lambda x: c * DQ(x)),
            self.support_radius, self.spectral_divergence)

    def describe(self, shell_cap: int = 12) -> dict:
        rep_v = shell_norm(self.V, 2, 0, shell_cap)
        rep_q = shell_norm(self.Q, 2, 0, shell_cap)
        return {
            "family": self.family,
            "params": self.params,
            "smoothness": self.smoothness,
            "support_radius": None if math.isinf(self.support_radius) else self.support_radius,
            "spectral_divergence": self.spectral_divergence,
            "shells": [
                {"n": n, "sup_V": float(a), "sup_Q": float(b)}
                for n, (a, b) in enumerate(zip(rep_v.per_shell, rep_q.per_shell))
            ],
            "l2_V": rep_v.value,
            "l2_Q": rep_q.value,
        }


@dataclass(frozen=True)
class ShellNormReport:
    p: float
    tail_start: int
    value: float
    per_shell: np.ndarray

    def tail(self, start: int) -> float:
        """Norm of the same shell suprema from a later shell index."""
        k = start - self.tail_start
        if k < 0:
            raise ValueError("tail start precedes the sampled range")
        return float(np.sum(self.per_shell[k:] ** self.p) ** (1.0 / self.p))


def shell_norm(f: Callable, p: float = 2.0, tail_start: int = 0, shell_cap: int = 20,
               n_dirs: int = 512, n_rad: int = 8) -> ShellNormReport:
    """Estimate ``(sum_{n >= tail_start} sup_{n<|x|<n+1} |f|^p)^{1/p}``.

    Suprema are maxima over a Fibonacci sphere times ``n_rad`` radii per shell,
    for shells ``tail_start .. shell_cap`` inclusive.
    """
    if shell_cap < tail_start:
        raise ValueError("shell_cap must be >= tail_start")
    dirs = SphereQuadrature.fibonacci(n_dirs).nodes
    frac = (np.arange(n_rad) + 0.5) / n_rad
    sups = []
    for n in range(tail_start, shell_cap + 1):
        pts = (n + frac)[:, None, None] * dirs[None, :, :]
        vals = np.asarray(f(pts))
        if vals.ndim == pts.ndim:
            vals = _norm(np.abs(vals))
        vals = np.abs(vals)
        if not np.all(np.isfinite(vals)):
            raise FieldBlowupError(f"non-finite sample in shell {n}")
        sups.append(float(vals.max()))
    per = np.array(sups)
    return ShellNormReport(p, tail_start, float(np.sum(per ** p) ** (1.0 / p)), per)


def sampled_sup(f: Callable, radius: float, n_dirs: int = 512, n_rad: int = 64) -> float:
    """Sampled max |f| over the ball of the given radius."""
    dirs = SphereQuadrature.fibonacci(n_dirs).nodes
    r = np.linspace(0, radius, n_rad)
    vals = np.abs(np.asarray(f(r[:, None, None] * dirs[None])))
    return float(vals.max())


# ---------------------------------------------------------------- families

def _trig_terms(P):
    terms = []
    for item in P:
        a, w = np.asarray(item[0], float), np.asarray(item[1], float)
        kind = item[2] if len(item) > 2 else "sin"
        if kind not in ("sin", "cos"):
            raise ValueError("trigonometric term kind must be 'sin' or 'cos'")
        terms.append((a, w, kind))
    return terms


def make_oscillating(gamma: float, P=(((1.0, 0.0, 0.0), (1.0, 0.0, 0.0), "sin"),),
                     amplitude: float = 1.0) -> DivergenceFormPotential:
    """Q(x) = amplitude (|x|^2+1)^(-gamma) P(x) with P a finite trigonometric sum.

    ``P`` is a list of ``(a, omega, kind)`` giving ``a sin(<omega, x>)`` or
    ``a cos(<omega, x>)``.
    """
    if not gamma > 0.25:
        raise ValueError("gamma must exceed 1/4 for a square-summable shell norm")
    terms = _trig_terms(P)
    c = float(amplitude)

    def q_and_grad(x):
        r2 = np.sum(x * x, axis=-1)
        q = (r2 + 1.0) ** (-gamma)
        gq = (-2.0 * gamma * (r2 + 1.0) ** (-gamma - 1.0))[..., None] * x
        return q, gq

    def Pfun(x):
        out = np.zeros(x.shape)
        for a, w, kind in terms:
            ph = x @ w
            out += (np.sin(ph) if kind == "sin" else np.cos(ph))[..., None] * a
        return out

    def divP(x):
        out = np.zeros(x.shape[:-1])
        for a, w, kind in terms:
            ph = x @ w
            out += (a @ w) * (np.cos(ph) if kind == "sin" else -np.sin(ph))
        return out

    def DP(x):
        out = np.zeros(x.shape + (3,))
        for a, w, kind in terms:
            ph = x @ w
            d = np.cos(ph) if kind == "sin" else -np.sin(ph)
            out += d[..., None, None] * np.outer(a, w)
        return out

    def Q(x):
        x = np.asarray(x, float)
        q, _ = q_and_grad(x)
        return c * q[..., None] * Pfun(x)

    def V(x):
        x = np.asarray(x, float)
        q, gq = q_and_grad(x)
        return c * (q * divP(x) + np.sum(gq * Pfun(x), axis=-1))

    def DQ(x):
        x = np.asarray(x, float)
        q, gq = q_and_grad(x)
        return c * (Pfun(x)[..., :, None] * gq[..., None, :] + q[..., None, None] * DP(x))

    params = {"gamma": gamma, "P": [[list(a), list(w), k] for a, w, k in terms],
              "amplitude": c}
    return DivergenceFormPotential(Q, V, "oscillating", params, 2, DQ)


def mollifier(r):
    """exp(-1/(1-r^2)) on the unit ball, normalised to unit mass in R^3."""
    r = np.asarray(r, float)
    out = np.zeros_like(r)
    m = r < 1
    out[m] = np.exp(-1.0 / (1.0 - r[m] ** 2))
    return out / _MOLLIFIER_MASS


def _raw_mass(rho, n: int = 64):
    """4 pi int_0^rho s^2 exp(-1/(1-s^2)) ds, vectorised over rho."""
    u, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (u + 1)
    w = 0.5 * w
    rho = np.minimum(np.asarray(rho, float), 1.0)
    s = rho[..., None] * u
    ker = np.where(s < 1, np.exp(-1.0 / np.maximum(1.0 - s * s, 1e-300)), 0.0)
    return 4 * np.pi * rho ** 3 * np.sum(w * u * u * ker, axis=-1)


_MOLLIFIER_MASS = float(_raw_mass(np.array(1.0), 400))


def mollifier_mass(rho):
    """Mass of the normalised mollifier inside the ball of radius rho."""
    return _raw_mass(rho) / _MOLLIFIER_MASS


def rademacher(seed: int, index) -> int:
    """Order-independent sign keyed by (seed, lattice index) through Philox."""
    key = [int(seed)] + [int(v) + (1 << 20) for v in index]
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
    return 1 if gen.integers(0, 2) else -1


def make_random(epsilon: float, seed: int, box_radius: int,
                amplitude: float = 1.0) -> DivergenceFormPotential:
    """V = sum_j a_j xi_j phi(x - x_j) over x_j in 2Z^3 with bumps inside [-R, R]^3.

    a_j = (1+|x_j|)^(-1/2-epsilon); xi_j are Rademacher signs. Q is the
    Newtonian field of V, evaluated bump by bump from the enclosed mass.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if int(box_radius) < 2:
        raise ValueError("box_radius must be at least 2 for a bump to fit")
    R = int(box_radius)
    nmax = (R - 1) // 2
    rng = np.arange(-nmax, nmax + 1)
    idx = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), -1).reshape(-1, 3)
    centers = 2.0 * idx
    a = (1.0 + _norm(centers)) ** (-0.5 - epsilon)
    xi = np.array([rademacher(seed, t) for t in idx], dtype=float)
    coef = float(amplitude) * a * xi
    table = np.zeros((2 * nmax + 1,) * 3)
    table[tuple((idx + nmax).T)] = coef

    def V(x):
        x = np.asarray(x, float)
        n = np.rint(x / 2.0).astype(int)
        inside = np.all(np.abs(n) <= nmax, axis=-1)
        nc = np.clip(n, -nmax, nmax) + nmax
        c = np.where(inside, table[nc[..., 0], nc[..., 1], nc[..., 2]], 0.0)
        return c * mollifier(_norm(x - 2.0 * n))

    def Q(x):
        x = np.asarray(x, float)
        out = np.zeros(x.shape)
        for cj, xj in zip(coef, centers):
            d = x - xj
            rr = _norm(d)
            m = np.ones_like(rr)
            near = rr < 1
            if np.any(near):
                m[near] = mollifier_mass(rr[near])
            with np.errstate(invalid="ignore", divide="ignore"):
                fac = np.where(rr > 0, m / (4 * np.pi * np.maximum(rr, 1e-300) ** 3), 0.0)
            out += cj * fac[..., None] * d
        return out

    params = {"epsilon": epsilon, "seed": int(seed), "box_radius": R, "amplitude": amplitude,
              "n_bumps": int(len(coef))}
    pot = DivergenceFormPotential(Q, V, "random", params, 2, None, R * math.sqrt(3.0))
    object.__setattr__(pot, "centers", centers)
    object.__setattr__(pot, "coefficients", coef)
    return pot


def bump1d(s):
    """exp(1 - 1/(1-s^2)) on (-1, 1), peak value 1."""
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - s[m] ** 2))
    return out


def bump1d_prime(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    m = np.abs(s) < 1
    sm = s[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - sm ** 2)) * (-2.0 * sm / (1.0 - sm ** 2) ** 2)
    return out


@dataclass(frozen=True)
class RadialProfile:
    """q(r) = sum_{n=2}^{n_max} n^-gamma phi(r - n!) with its derivative."""

    gamma: float
    n_max: int

    @property
    def centers(self) -> np.ndarray:
        return np.array([math.factorial(n) for n in range(2, self.n_max + 1)], float)

    @property
    def weights(self) -> np.ndarray:
        return np.arange(2, self.n_max + 1, dtype=float) ** (-self.gamma)

    def q(self, r):
        r = np.asarray(r, float)
        return sum(a * bump1d(r - c) for a, c in zip(self.weights, self.centers))

    def dq(self, r):
        r = np.asarray(r, float)
        return sum(a * bump1d_prime(r - c) for a, c in zip(self.weights, self.centers))

    def bump_intervals(self):
        return [(c - 1.0, c + 1.0) for c in self.centers]


def make_sharpness_radial(gamma: float, n_max: int) -> DivergenceFormPotential:
    """Radial Q = q(|x|) x/|x| with bumps at the factorials; V = q' + 2q/r."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if int(n_max) < 2:
        raise ValueError("n_max must be at least 2")
    prof = RadialProfile(float(gamma), int(n_max))

    def Q(x):
        x = np.asarray(x, float)
        r = _norm(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            fac = np.where(r > 0, prof.q(r) / np.maximum(r, 1e-300), 0.0)
        return fac[..., None] * x

    def V(x):
        r = _norm(np.asarray(x, float))
        with np.errstate(invalid="ignore", divide="ignore"):
            return prof.dq(r) + np.where(r > 0, 2 * prof.q(r) / np.maximum(r, 1e-300), 0.0)

    pot = DivergenceFormPotential(Q, V, "sharpness", {"gamma": gamma, "n_max": int(n_max)}, 1,
                                  None, float(prof.centers[-1] + 1))
    object.__setattr__(pot, "profile", prof)
    return pot


def make_zero() -> DivergenceFormPotential:
    return DivergenceFormPotential(lambda x: np.zeros(np.shape(x)),
                                   lambda x: np.zeros(np.shape(x)[:-1]),
                                   "zero", {}, 2, lambda x: np.zeros(np.shape(x) + (3,)), 0.0)


# ---------------------------------------------------------------- transforms

def smoothstep_cutoff(r, rho: float):
    """alpha_rho: 1 on [0, rho], 0 beyond rho + 1, quintic in between."""
    t = np.clip(np.asarray(r, float) - rho, 0.0, 1.0)
    return 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)


def smoothstep_cutoff_prime(r, rho: float):
    t = np.asarray(r, float) - rho
    inside = (t > 0) & (t < 1)
    tt = np.where(inside, t, 0.0)
    return np.where(inside, -30.0 * tt * tt * (1.0 - tt) ** 2, 0.0)


def truncate(V: DivergenceFormPotential, rho: float, mode: str = "inner") -> DivergenceFormPotential:
    """Inner part alpha_rho Q or outer part (1 - alpha_rho) Q, with V = div of it."""
    if not rho > 1:
        raise ValueError("rho must exceed 1")
    if mode not in ("inner", "outer"):
        raise ValueError("mode must be 'inner' or 'outer'")
    Q0, V0 = V.Q, V.V

    def parts(x):
        x = np.asarray(x, float)
        r = _norm(x)
        a = smoothstep_cutoff(r, rho)
        da = smoothstep_cutoff_prime(r, rho)
        q = Q0(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            radial = np.where(r > 0, np.sum(x * q, axis=-1) / np.maximum(r, 1e-300), 0.0)
        return a, da, q, radial

    if mode == "inner":
        def Q(x):
            a, _, q, _ = parts(x)
            return a[..., None] * q

        def Vt(x):
            a, da, _, radial = parts(x)
            return a * V0(x) + da * radial
        supp = min(V.support_radius, rho + 1.0)
    else:
        def Q(x):
            a, _, q, _ = parts(x)
            return (1.0 - a)[..., None] * q

        def Vt(x):
            a, da, _, radial = parts(x)
            return (1.0 - a) * V0(x) - da * radial
        supp = V.support_radius

    out = DivergenceFormPotential(Q, Vt, V.family, {**V.params, "truncation": [mode, rho]},
                                  min(V.smoothness, 2), None, supp, V.spectral_divergence)
    for extra in ("centers", "coefficients", "profile"):
        if hasattr(V, extra):
            object.__setattr__(out, extra, getattr(V, extra))
    return out


def shift(V: DivergenceFormPotential, y) -> DivergenceFormPotential:
    """Translate: Q_[y](x) = Q(x - y), V_[y](x) = V(x - y)."""
    y = np.asarray(y, float)
    Q0, V0, DQ0 = V.Q, V.V, V.DQ
    if not np.any(y):
        return V
    return DivergenceFormPotential(
        lambda x: Q0(np.asarray(x, float) - y), lambda x: V0(np.asarray(x, float) - y),
        V.family, {**V.params, "shift": y.tolist()}, V.smoothness,
        None if DQ0 is None else (lambda x: DQ0(np.asarray(x, float) - y)),
        V.support_radius + float(np.linalg.norm(y)), V.spectral_divergence)


def from_config(spec: dict) -> DivergenceFormPotential:
    """Build a potential from a config entry ``{"family": ..., ...}``."""
    spec = dict(spec)
    spec.pop("label", None)
    fam = spec.pop("family")
    trunc = spec.pop("truncate", None)
    coupling = spec.pop("coupling", None)
    if fam == "zero":
        V = make_zero()
    elif fam == "oscillating":
        P = spec.pop("P", None)
        V = make_oscillating(spec.pop("gamma"), **({"P": [tuple(t) for t in P]} if P else {}),
                             **spec)
    elif fam == "random":
        V = make_random(spec.pop("epsilon"), spec.pop("seed"), spec.pop("box_radius"), **spec)
    elif fam == "sharpness":
        V = make_sharpness_radial(spec.pop("gamma"), spec.pop("n_max"))
    else:
        raise ValueError(f"unknown potential family {fam!r}")
    if trunc is not None:
        V = truncate(V, float(trunc), "inner")
    if coupling is not None:
        V = V.scaled(float(coupling))
    return V
