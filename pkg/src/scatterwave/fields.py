"""Periodic-box grids, Fourier transforms, interpolation and sphere quadrature.

Fourier convention: ``fhat(xi) = int f(x) exp(-2 pi i <x, xi>) dx`` so that
``-Laplacian`` corresponds to the multiplier ``4 pi^2 |xi|^2``.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from typing import Callable

import numpy as np

# Exact integrals over the unit cube centred at the origin.
CUBE_INV_R = 2.3800773639795536        # int 1/|x|
CUBE_INV_R2 = 7.674124222443731        # int 1/|x|^2
# Regularised lattice sum  sum'_{j in Z^3} 1/|j| - int 1/|x|  (Ewald).
LATTICE_INV_R = -2.8372974794806196

_MAGIC = b"SWGF"


@dataclass(frozen=True)
class BoxGrid:
    """Origin-centred periodic cube ``[-L/2, L/2)^3`` with ``N`` points per axis."""

    L: float
    N: int

    def __post_init__(self):
        if self.N % 2 or self.N < 4:
            raise ValueError("N must be even and at least 4")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.h * np.arange(self.N)

    @property
    def freqs(self) -> np.ndarray:
        """Dual frequencies along one axis, in FFT order."""
        return np.fft.fftfreq(self.N, d=self.h)

    @property
    def shape(self) -> tuple:
        return (self.N, self.N, self.N)

    def mesh(self) -> tuple:
        a = self.axis
        return np.meshgrid(a, a, a, indexing="ij", sparse=True)

    def points(self) -> np.ndarray:
        a = self.axis
        X = np.meshgrid(a, a, a, indexing="ij")
        return np.stack(X, axis=-1)

    def radius(self) -> np.ndarray:
        x, y, z = self.mesh()
        return np.sqrt(x * x + y * y + z * z)

    def freq_mesh(self) -> tuple:
        f = self.freqs
        return np.meshgrid(f, f, f, indexing="ij", sparse=True)

    def freq_norm2(self) -> np.ndarray:
        a, b, c = self.freq_mesh()
        return a * a + b * b + c * c

    def node_index(self, point, atol: float = 1e-9):
        """Index triple of the grid node at ``point``, or None if it is off-grid."""
        p = np.asarray(point, dtype=float)
        j = (p + self.L / 2) / self.h
        jr = np.rint(j)
        if np.any(np.abs(j - jr) > atol / self.h) or np.any(jr < 0) or np.any(jr >= self.N):
            return None
        return tuple(int(v) for v in jr)

    @property
    def origin_index(self) -> tuple:
        return (self.N // 2,) * 3

    def inside(self, points, margin: float = 0.0) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return np.all(np.abs(p) <= self.L / 2 - margin, axis=-1)


def _sign_pattern(N: int) -> np.ndarray:
    m = np.rint(np.fft.fftfreq(N, d=1.0 / N)).astype(int)
    return np.where(m % 2 == 0, 1.0, -1.0)


def _sign3(grid: BoxGrid) -> np.ndarray:
    s = _sign_pattern(grid.N)
    return s[:, None, None] * s[None, :, None] * s[None, None, :]


@dataclass(frozen=True, eq=False)
class GridField:
    """Complex samples on a BoxGrid; ``side`` is 'physical' or 'fourier'.

    Scalar fields have shape ``(N, N, N)``; vector fields ``(3, N, N, N)``.
    """

    grid: BoxGrid
    data: np.ndarray
    side: str = "physical"
    name: str = ""

    def __post_init__(self):
        if self.side not in ("physical", "fourier"):
            raise ValueError("side must be 'physical' or 'fourier'")
        d = np.asarray(self.data)
        if d.shape[-3:] != self.grid.shape or d.ndim not in (3, 4):
            raise ValueError(f"data shape {d.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "data", d.astype(complex, copy=False))

    @property
    def is_vector(self) -> bool:
        return self.data.ndim == 4

    def norm(self) -> float:
        """L2 norm computed on the side the field lives on."""
        s = float(np.sum(np.abs(self.data) ** 2))
        if self.side == "physical":
            return math.sqrt(s * self.grid.cell_volume)
        return math.sqrt(s / self.grid.L ** 3)

    def with_data(self, data, side=None, name=None) -> "GridField":
        return GridField(self.grid, data, side or self.side, self.name if name is None else name)

    # snapshot format: magic, uint32 header length, JSON header, little-endian complex128
    def to_bytes(self) -> bytes:
        header = json.dumps(
            {"L": self.grid.L, "N": self.grid.N, "side": self.side, "name": self.name,
             "shape": list(self.data.shape), "dtype": "<c16"},
            sort_keys=True,
        ).encode()
        payload = np.ascontiguousarray(self.data, dtype="<c16").tobytes()
        return _MAGIC + struct.pack("<I", len(header)) + header + payload

    @classmethod
    def from_bytes(cls, raw: bytes) -> "GridField":
        if raw[:4] != _MAGIC:
            raise ValueError("not a GridField snapshot")
        (n,) = struct.unpack("<I", raw[4:8])
        header = json.loads(raw[8:8 + n].decode())
        data = np.frombuffer(raw[8 + n:], dtype=header.get("dtype", "<c16"))
        data = data.reshape(header["shape"]).astype(complex)
        return cls(BoxGrid(header["L"], header["N"]), data, header["side"], header["name"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "GridField":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def sample(grid: BoxGrid, func: Callable, name: str = "") -> GridField:
    """Sample a callable ``func(points[..., 3])`` on the grid."""
    vals = np.asarray(func(grid.points()))
    if vals.ndim == 4 and vals.shape[-1] == 3:
        vals = np.moveaxis(vals, -1, 0)
    return GridField(grid, vals, "physical", name)


def transform(f: GridField, direction: str = "forward") -> GridField:
    """Discrete transform consistent with the continuum convention.

    forward: ``fhat_m = h^3 sum_j f_j exp(-2 pi i x_j xi_m)``;
    inverse: ``f_j = L^-3 sum_m fhat_m exp(2 pi i x_j xi_m)``.
    """
    g = f.grid
    sgn = _sign3(g)
    axes = (-3, -2, -1)
    if direction == "forward":
        if f.side != "physical":
            raise ValueError("forward transform needs a physical-side field")
        out = g.cell_volume * sgn * np.fft.fftn(f.data, axes=axes)
        return f.with_data(out, side="fourier")
    if direction == "inverse":
        if f.side != "fourier":
            raise ValueError("inverse transform needs a Fourier-side field")
        out = np.fft.ifftn(sgn * f.data, axes=axes) / g.cell_volume
        return f.with_data(out, side="physical")
    raise ValueError("direction must be 'forward' or 'inverse'")


def _deriv_symbols(grid: BoxGrid):
    """Per-axis symbols 2 pi i xi with the Nyquist entry zeroed (odd derivative)."""
    f = grid.freqs.copy()
    f[grid.N // 2] = 0.0
    d = 2j * np.pi * f
    return d[:, None, None], d[None, :, None], d[None, None, :]


def spectral_gradient(f: GridField) -> GridField:
    if f.is_vector:
        raise ValueError("gradient expects a scalar field")
    F = np.fft.fftn(f.data)
    dx, dy, dz = _deriv_symbols(f.grid)
    out = np.stack([np.fft.ifftn(F * d) for d in (dx, dy, dz)])
    return GridField(f.grid, out, "physical", f.name + "_grad")


def spectral_divergence(F: GridField) -> GridField:
    if not F.is_vector:
        raise ValueError("divergence expects a vector field")
    syms = _deriv_symbols(F.grid)
    acc = sum(np.fft.fftn(F.data[i]) * syms[i] for i in range(3))
    return GridField(F.grid, np.fft.ifftn(acc), "physical", F.name + "_div")


def spectral_laplacian(f: GridField) -> GridField:
    sym = -4 * np.pi ** 2 * f.grid.freq_norm2()
    return f.with_data(np.fft.ifftn(np.fft.fftn(f.data, axes=(-3, -2, -1)) * sym, axes=(-3, -2, -1)))


def apply_multiplier(f: GridField, symbol: np.ndarray) -> GridField:
    """Apply a Fourier multiplier given on the FFT-ordered frequency grid."""
    axes = (-3, -2, -1)
    return f.with_data(np.fft.ifftn(np.fft.fftn(f.data, axes=axes) * symbol, axes=axes))


def _axis_phases(coord: np.ndarray, grid: BoxGrid) -> np.ndarray:
    """exp(2 pi i x xi_m) for each coordinate; the Nyquist column uses cos."""
    fr = grid.freqs
    E = np.exp(2j * np.pi * np.outer(coord, fr))
    E[:, grid.N // 2] = np.cos(np.pi * grid.N * coord / grid.L)
    return E


def _separable_eval(coef: np.ndarray, E1, E2, E3, chunk: int = 256) -> np.ndarray:
    """sum_{abc} coef[a,b,c] E1[p,a] E2[p,b] E3[p,c] for each row p."""
    n1, n2, n3 = coef.shape
    flat = coef.reshape(n1, n2 * n3)
    out = np.empty(E1.shape[0], dtype=complex)
    for s in range(0, E1.shape[0], chunk):
        sl = slice(s, s + chunk)
        T = (E1[sl] @ flat).reshape(-1, n2, n3)
        T2 = np.einsum("pb,pbc->pc", E2[sl], T)
        out[sl] = np.einsum("pc,pc->p", E3[sl], T2)
    return out


def interpolate(f: GridField, points, check: bool = True) -> np.ndarray:
    """Trigonometric (Fourier-sum) interpolation; exact for band-limited fields."""
    g = f.grid
    P = np.atleast_2d(np.asarray(points, dtype=float))
    if check:
        lim = g.L / 2 - g.h
        if np.any(np.abs(P) > lim):
            raise ValueError("interpolation point outside the safe region of the box")
    data = f.data if f.side == "physical" else transform(f, "inverse").data
    E = [_axis_phases(P[:, d], g) for d in range(3)]
    sgn = _sign3(g)

    def one(arr):
        coef = sgn * np.fft.fftn(arr) / g.N ** 3
        return _separable_eval(coef, *E)

    if data.ndim == 4:
        return np.stack([one(data[i]) for i in range(3)], axis=-1)
    return one(data)


def fourier_at(f: GridField, etas) -> np.ndarray:
    """Continuum transform ``fhat(eta)`` of the grid field at arbitrary frequencies."""
    g = f.grid
    data = f.data if f.side == "physical" else transform(f, "inverse").data
    H = np.atleast_2d(np.asarray(etas, dtype=float))
    a = g.axis
    E = [np.exp(-2j * np.pi * np.outer(H[:, d], a)) for d in range(3)]
    return g.cell_volume * _separable_eval(data, *E)


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes on the unit sphere with positive weights summing to 4 pi."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str = "custom"
    degree: int = 0

    @property
    def M(self) -> int:
        return len(self.weights)

    @classmethod
    def fibonacci(cls, M: int = 1024) -> "SphereQuadrature":
        i = np.arange(M)
        z = 1.0 - (2 * i + 1) / M
        phi = i * math.pi * (3.0 - math.sqrt(5.0))
        s = np.sqrt(1.0 - z * z)
        nodes = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
        return cls(nodes, np.full(M, 4 * math.pi / M), "fibonacci", 1)

    @classmethod
    def gauss_product(cls, n_theta: int = 32) -> "SphereQuadrature":
        """Gauss-Legendre in cos(theta) times the trapezoid rule in phi.

        Exact for spherical harmonics of degree up to ``2 n_theta - 1``.
        """
        x, w = np.polynomial.legendre.leggauss(n_theta)
        n_phi = 2 * n_theta
        phi = 2 * math.pi * np.arange(n_phi) / n_phi
        Z, P = np.meshgrid(x, phi, indexing="ij")
        S = np.sqrt(1 - Z * Z)
        nodes = np.stack([S * np.cos(P), S * np.sin(P), Z], axis=-1).reshape(-1, 3)
        weights = (w[:, None] * np.full(n_phi, 2 * math.pi / n_phi)[None, :]).ravel()
        return cls(nodes, weights, "gauss_product", 2 * n_theta - 1)

    def integrate(self, values) -> complex:
        return np.tensordot(self.weights, np.asarray(values), axes=(0, 0))

    def harmonic_error_table(self, lmax: int) -> np.ndarray:
        """Max |quadrature - exact| over Y_l^m for each l <= lmax."""
        from scipy.special import sph_harm_y

        theta = np.arccos(np.clip(self.nodes[:, 2], -1, 1))
        phi = np.arctan2(self.nodes[:, 1], self.nodes[:, 0])
        errs = np.zeros(lmax + 1)
        for l in range(lmax + 1):
            exact = math.sqrt(4 * math.pi) if l == 0 else 0.0
            worst = 0.0
            for m in range(-l, l + 1):
                q = self.integrate(sph_harm_y(l, m, theta, phi))
                worst = max(worst, abs(q - (exact if m == 0 else 0.0)))
            errs[l] = worst
        return errs


@dataclass(frozen=True, eq=False)
class SphereTrace:
    """Values on the sphere ``|x - center| = radius`` at quadrature nodes."""

    center: np.ndarray
    radius: float
    values: np.ndarray
    quad: SphereQuadrature

    def norm2(self) -> float:
        return float(np.sum(self.quad.weights * np.abs(self.values) ** 2))

    def norm(self) -> float:
        return math.sqrt(self.norm2())

    def mean(self) -> complex:
        return complex(self.quad.integrate(self.values) / (4 * math.pi))

    def distance(self, other) -> float:
        """L2(S^2) distance to another trace or to node values."""
        v = other.values if isinstance(other, SphereTrace) else np.asarray(other)
        return float(math.sqrt(np.sum(self.quad.weights * np.abs(self.values - v) ** 2)))

    def points(self) -> np.ndarray:
        return np.asarray(self.center) + self.radius * self.quad.nodes

    def write_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "sx", "sy", "sz", "re", "im"])
        for i, (s, v) in enumerate(zip(self.quad.nodes, self.values)):
            w.writerow([i, repr(float(s[0])), repr(float(s[1])), repr(float(s[2])),
                        repr(float(np.real(v))), repr(float(np.imag(v)))])


def sphere_trace(f, y, r: float, quad: SphereQuadrature) -> SphereTrace:
    """Restrict ``f`` (GridField or callable) to the sphere ``S_r(y)``."""
    y = np.asarray(y, dtype=float)
    pts = y + r * quad.nodes
    vals = interpolate(f, pts) if isinstance(f, GridField) else np.asarray(f(pts))
    return SphereTrace(y, float(r), vals, quad)


def radon(f: GridField, s, sigma, oversample: int = 2) -> np.ndarray:
    """Radon transform ``Rf(s, sigma)`` through the projection-slice route.

    The transform is sampled along the ray ``t sigma``, then inverted in ``t``.
    """
    g = f.grid
    sigma = np.asarray(sigma, dtype=float)
    sigma = sigma / np.linalg.norm(sigma)
    width = math.sqrt(3.0) * g.L
    dt = 1.0 / (oversample * width)
    # stay inside the grid band along sigma, where fourier_at is not periodic
    tmax = g.N / (2 * g.L * np.max(np.abs(sigma)))
    t = dt * np.arange(-int(tmax / dt), int(tmax / dt) + 1)
    prof = fourier_at(f, t[:, None] * sigma[None, :])
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = dt * (np.exp(2j * np.pi * np.outer(s, t)) @ prof)
    return out


class Weight:
    """w(x) = 1 for |x| > 1 and |x|^-2 inside the unit ball."""

    def __call__(self, x) -> np.ndarray:
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        with np.errstate(divide="ignore"):
            return np.where(r > 1, 1.0, 1.0 / np.maximum(r, 1e-300) ** 2)


def weighted_norm(f: GridField, w: Weight | None = None) -> float:
    """``(int |f|^2 w)^{1/2}``; the origin cell uses the exact integral of |x|^-2."""
    if f.side != "physical":
        raise ValueError("weighted_norm expects a physical-side field")
    g = f.grid
    r = g.radius()
    dens = np.abs(f.data) ** 2
    if f.is_vector:
        dens = dens.sum(axis=0)
    wv = np.ones_like(r)
    inner = (r < 1) & (r > 0)
    wv[inner] = 1.0 / r[inner] ** 2
    o = g.origin_index
    wv[o] = 0.0
    total = g.cell_volume * float(np.sum(dens * wv))
    total += float(dens[o]) * g.h * CUBE_INV_R2
    return math.sqrt(total)
