import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterwave import waveprop as wp
from scatterwave.fields import BoxGrid, GridField, SphereQuadrature, interpolate, sample
from scatterwave.potentials import make_oscillating, mollifier
from scatterwave.resolvent import fit_to_grid, operator_apply

G16 = BoxGrid(16.0, 32)
FILT = wp.ContourFilter(0.8, 3.2, 3, 1.0)


@pytest.fixture(scope="module")
def band():
    return wp.band_limited_state(G16, 1.0, 3.0)


def krule(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return lo + (hi - lo) * (x + 1) / 2, w * (hi - lo) / 2


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


# ---------------------------------------------------------------- filter

def test_contour_winding_number():
    ks, ws = FILT.nodes(1)
    for c in (2.0 + 0.3j, 1.0 - 0.5j, 3.0 + 0.0j):
        assert abs(np.sum(ws / (ks - c)) - 1) < 1e-10
    for c in (0.5 + 0j, 4.0 + 0j, 2.0 + 1.5j, -2.0 + 0j):
        assert abs(np.sum(ws / (ks - c))) < 1e-10


def test_contour_reproduces_filter_symbol():
    # residue of p(k) / (s^2 - k^2) at k = s is -p(s) / (2s); -s lies outside
    ks, ws = FILT.nodes(2)
    s = np.array([0.3, 0.81, 1.0, 2.0, 2.9, 3.19, 3.5, 5.0])
    vals = np.array([np.sum(ws * FILT.p(ks) / (si * si - ks * ks)) for si in s])
    assert np.allclose(vals, FILT.q(s), atol=1e-10)


def test_filter_vanishes_at_band_edges():
    assert FILT.p(0.8) == 0 and FILT.p(3.2) == 0
    s = np.array([0.5, 0.8, 3.2, 4.0])
    assert np.all(FILT.q(s) == 0)
    assert FILT.q(np.array([2.0]))[0] != 0
    assert FILT.H == 1.0
    assert wp.ContourFilter(1.0, 3.0).H == 1.0


@pytest.mark.parametrize("a,b,n", [(0.0, 1.0, 3), (2.0, 1.0, 3), (1.0, 2.0, 0)])
def test_filter_arguments(a, b, n):
    with pytest.raises(ValueError):
        wp.ContourFilter(a, b, n)


# ---------------------------------------------------- band-limited states

def test_band_limited_state(band):
    assert band.f.norm() == pytest.approx(1.0, rel=1e-12)
    assert band.check() < 1e-12
    d = wp.band_limited_state(G16, 1.0, 3.0, center=(1.0, 0, 0), direction=(0, 0, 1), spread=0.3)
    assert d.check() < 1e-12


def test_band_limited_leak_detected(band):
    x = G16.points()
    leak = band.f.data + 1e-3 * np.exp(2j * np.pi * x[..., 0] * (10 / G16.L))
    with pytest.raises(ValueError):
        wp.BandLimitedState(band.f.with_data(leak), band.annulus).check()


def test_band_limited_arguments():
    with pytest.raises(ValueError):
        wp.band_limited_state(G16, 0.0, 1.0)
    with pytest.raises(ValueError):
        wp.band_limited_state(G16, 1.0, np.pi / G16.h)


# ---------------------------------------------------------- free propagator

def test_free_evolve_identity_at_zero(band):
    assert wp.free_evolve(band, 0.0) is band.f


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_free_evolve_group_law_and_unitarity(s, t):
    f = wp.band_limited_state(BoxGrid(8.0, 16), 1.0, 3.0).f
    a = wp.free_evolve(wp.free_evolve(f, s), t)
    b = wp.free_evolve(f, s + t)
    assert rel(a.data, b.data) < 1e-12
    assert a.norm() == pytest.approx(f.norm(), rel=1e-12)


def test_kirchhoff_radial_state_is_direction_independent():
    g = BoxGrid(24.0, 48)
    stt = wp.band_limited_state(g, 1.0, 4.0)
    dirs = np.array([[1, 0, 0], [0, 0.6, 0.8], np.ones(3) / np.sqrt(3), [0.28, -0.96, 0]])
    offs = np.array([-1.0, 0.0, 0.7])
    vals = np.array([wp.kirchhoff_asymptotic(stt, 6.0, (6.0 + offs)[:, None] * d) for d in dirs])
    assert np.abs(vals - vals[0]).max() < 2e-3 * np.abs(vals).max()


def test_kirchhoff_scaling_and_localization():
    g = BoxGrid(24.0, 48)
    stt = wp.band_limited_state(g, 1.0, 4.0)
    # with |x| - t fixed the main term is exactly proportional to 1/t
    a = wp.kirchhoff_asymptotic(stt, 6.0, [[7.0, 0, 0]])
    b = wp.kirchhoff_asymptotic(stt, 3.0, [[4.0, 0, 0]])
    assert a[0] * 6 == pytest.approx(b[0] * 3, rel=1e-12)
    near = np.abs(wp.kirchhoff_asymptotic(stt, 6.0, [[6.0 + o, 0, 0] for o in (-1, 0, 1)]))
    far = np.abs(wp.kirchhoff_asymptotic(stt, 6.0, [[6.0 + o, 0, 0] for o in (7, 8)]))
    assert far.max() < 0.05 * near.max()
    with pytest.raises(ValueError):
        wp.kirchhoff_asymptotic(stt, 0.0, [[1.0, 0, 0]])


# ---------------------------------------------------- contour propagation

@pytest.mark.parametrize("t", [0.0, 1.0, 5.0])
def test_contour_matches_multiplier(band, t):
    u, rep = wp.contour_propagate(band, t, FILT, "H0", tol=1e-8, return_report=True)
    assert rel(u.data, wp.filtered_free(band, t, FILT).data) < 1e-4
    assert rep.change < 1e-6


def test_contour_at_zero_is_filter_multiplier(band):
    u = wp.contour_propagate(band, 0.0, FILT, "H0", tol=1e-8)
    qf = wp.multiplier(band.f, FILT.q(wp.spectral_radius(G16)))
    assert rel(u.data, qf.data) < 1e-6


def test_contour_annihilates_out_of_band():
    out = wp.band_limited_state(G16, 3.5, 5.0)
    for t in (0.0, 5.0):
        u = wp.contour_propagate(out, t, FILT, "H0", tol=1e-8)
        assert np.linalg.norm(u.data) < 1e-6 * np.linalg.norm(out.f.data)


def test_contour_d_matches_dense_eigendecomposition():
    g = BoxGrid(8.0, 12)
    x = g.points()
    Vg = 0.4 * np.exp(-np.sum((x - [0.5, 0, 0]) ** 2, -1)) - 0.2 * np.exp(-np.sum((x + [1, 0.5, 0]) ** 2, -1) / 2)
    n = g.N ** 3
    M = np.empty((n, n), complex)
    for j in range(n):
        e = np.zeros(n, complex)
        e[j] = 1
        M[:, j] = operator_apply(GridField(g, e.reshape(g.shape)), "D", Vg).data.reshape(-1)
    assert np.abs(M - M.conj().T).max() < 1e-12 * np.abs(M).max()
    lam, U = np.linalg.eigh(M)
    s = np.sqrt(np.maximum(lam, 0))
    filt = wp.ContourFilter(0.8, 3.2, 3, 1.0, nodes_per_panel=8, grading=4)
    f = np.exp(-np.sum((x - [0, 1, 0]) ** 2, -1)) * (1 + 0.3j * x[..., 0])
    t = 2.0
    ex = U @ (np.exp(-1j * t * s) * filt.q(s) * (U.conj().T @ f.reshape(-1)))
    u = wp.contour_propagate(GridField(g, f), t, filt, "D", Vgrid=Vg, tol=1e-8)
    assert rel(u.data.reshape(-1), ex) < 1e-6


def test_contour_arguments(band):
    with pytest.raises(ValueError):
        wp.contour_propagate(band, 1.0, FILT, "X")
    with pytest.raises(ValueError):
        wp.contour_propagate(band, 1.0, FILT, "D")
    with pytest.raises(wp.QuadratureError):
        wp.contour_propagate(band, 1.0, FILT, "H0", tol=1e-30, max_level=1)


def test_duhamel_second_order_in_dt(band):
    r = [wp.duhamel_check(band, 1.0, FILT, dt=dt)["residual"] for dt in (0.04, 0.02)]
    assert r[1] < 2e-4
    assert 3.5 < r[0] / r[1] < 4.5


# --------------------------------------------------------- wave operators

def test_wave_operator_free_is_filter(band):
    w = wp.wave_operator_time(band, 3.0, FILT, None, "H0")
    qf = wp.multiplier(band.f, FILT.q(wp.spectral_radius(G16)))
    assert rel(w.data, qf.data) < 1e-5


def test_wave_operator_cauchy_free_is_flat(band):
    rows = wp.wave_operator_cauchy(band, None, FILT, [1.0, 2.0, 3.0])
    assert all(r["delta"] < 1e-5 for r in rows[:-1])
    assert np.isnan(rows[-1]["delta"])


def test_wave_operator_limits(band):
    with pytest.raises(ValueError):
        wp.wave_operator_time(band, G16.L / 3 + 0.1, FILT, None, "H0")
    with pytest.raises(ValueError):
        wp.wave_operator_cauchy(band, None, FILT, [2.0, 1.0])
    assert wp.max_feasible_time(G16) == pytest.approx(16 / 3)


def test_stationary_free_inversion(band):
    stt = wp.band_limited_state(G16, 0.5, 3.5)
    errs = []
    for n in (16, 32):
        u = wp.stationary_wave_operator(stt, None, SphereQuadrature.gauss_product(n), krule(0.5, 3.5, n))
        errs.append(rel(u.data, stt.f.data))
    assert errs[1] < 5e-3 and errs[1] < errs[0] / 10


def test_stationary_linear():
    g = BoxGrid(8.0, 16)
    f1 = wp.band_limited_state(g, 1.0, 3.0).f
    f2 = wp.band_limited_state(g, 1.0, 3.0, center=(1.0, 0, 0)).f
    q, kr = SphereQuadrature.gauss_product(6), krule(1.0, 3.0, 6)
    a = wp.stationary_wave_operator(f1.with_data(2 * f1.data - 1j * f2.data), None, q, kr).data
    b = 2 * wp.stationary_wave_operator(f1, None, q, kr).data - 1j * wp.stationary_wave_operator(f2, None, q, kr).data
    assert rel(a, b) < 1e-12


def test_stationary_boundary_value_vs_eps_extrapolation():
    g = BoxGrid(12.0, 24)
    V = fit_to_grid(make_oscillating(0.3).scaled(0.5), g)
    stt = wp.band_limited_state(g, 1.0, 2.0)
    q, kr = SphereQuadrature.gauss_product(2), krule(1.0, 2.0, 2)
    ub = wp.stationary_wave_operator(stt, V, q, kr).data
    scattered = np.linalg.norm(ub - wp.stationary_wave_operator(stt, None, q, kr).data)
    gaps = []
    for lad in ([0.02, 0.04], [0.01, 0.02]):
        ue = wp.stationary_wave_operator(stt, V, q, kr, eps_ladder=lad)
        gaps.append(np.linalg.norm(ue.data - ub))
    # linear extrapolation in eps leaves an O(eps^2) gap
    assert gaps[1] < 1e-2 * scattered
    assert 3 < gaps[0] / gaps[1] < 5


# ---------------------------------------------------- ballistic projection

def _bump(g):
    return sample(g, lambda x: mollifier(np.linalg.norm(np.asarray(x) - [0.5, 0, 0], axis=-1) / 1.5) + 0j)


@pytest.mark.parametrize("coupling", [0.0, 0.5])
def test_ballistic_positive(coupling):
    g = BoxGrid(12.0, 32)
    V = None if coupling == 0 else fit_to_grid(make_oscillating(0.3).scaled(coupling), g)
    rep = wp.ballistic_projection(_bump(g), V, SphereQuadrature.gauss_product(6), (1.0, 2.0), (1 + 0.1j,))
    assert rep["positive"] and rep["min_F"] > 0
    assert rep["max_rel_imag"] < 1e-12
    assert set(rep["near_real_norm"]) == {"(1+0.1j)"}


def test_ballistic_zero_and_negative_data():
    g = BoxGrid(8.0, 16)
    q = SphereQuadrature.gauss_product(4)
    rep = wp.ballistic_projection(GridField(g, np.zeros(g.shape, complex)), None, q)
    assert rep["verdict"] == "f is zero" and not rep["positive"]
    with pytest.raises(ValueError):
        wp.ballistic_projection(GridField(g, -np.ones(g.shape, complex)), None, q)


def test_free_evolution_interpolates_on_grid(band):
    # sanity link between the propagator and the interpolation used by the Radon comparison
    u = wp.free_evolve(band, 2.0)
    P = G16.axis[np.array([[16, 16, 16], [20, 12, 16]])]
    assert np.allclose(interpolate(u, P), u.data[(P[:, 0] / G16.h + 16).astype(int),
                                                  (P[:, 1] / G16.h + 16).astype(int),
                                                  (P[:, 2] / G16.h + 16).astype(int)], atol=1e-12)
