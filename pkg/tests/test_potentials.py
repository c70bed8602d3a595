import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterwave.fields import BoxGrid, GridField, SphereQuadrature, sample, spectral_divergence
from scatterwave.potentials import (FieldBlowupError, from_config, make_oscillating, make_random,
                                    make_sharpness_radial, make_zero, mollifier, mollifier_mass,
                                    rademacher, shell_norm, shift, smoothstep_cutoff, truncate)

from conftest import random_dirs


def dense_shell_sup(f, n, n_dirs=4000, n_rad=40):
    dirs = SphereQuadrature.fibonacci(n_dirs).nodes
    r = np.linspace(n, n + 1, n_rad)
    return float(np.abs(f(r[:, None, None] * dirs[None])).max())


def fd_divergence(Q, x, h=1e-5):
    out = 0.0
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        out = out + (Q(x + e)[..., i] - Q(x - e)[..., i]) / (2 * h)
    return out


# ---------------------------------------------------------------- shell norms

def test_shell_norm_constant():
    rep = shell_norm(lambda x: np.full(np.shape(x)[:-1], 2.0), 2, 0, 9)
    assert rep.value == pytest.approx(2.0 * math.sqrt(10), rel=1e-14)


def test_shell_norm_inverse_distance_matches_direct_sum():
    f = lambda x: 1.0 / (1.0 + np.linalg.norm(x, axis=-1))
    rep = shell_norm(f, 2, 0, 30, n_rad=16)
    # the sup over shell n is attained at the inner radius n
    direct = math.sqrt(sum((1.0 / (1 + n + 0.5 / 16)) ** 2 for n in range(31)))
    assert rep.value == pytest.approx(direct, rel=1e-12)


@given(st.integers(0, 8), st.integers(1, 6))
def test_shell_norm_tail_nonincreasing(a, d):
    V = make_oscillating(0.3)
    rep = shell_norm(V.V, 2, 0, 15, n_dirs=128, n_rad=4)
    assert rep.tail(a + d) <= rep.tail(a)
    assert rep.tail(0) == pytest.approx(rep.value)


def test_shell_norm_rejects_nonfinite():
    with pytest.raises(FieldBlowupError):
        shell_norm(lambda x: np.full(np.shape(x)[:-1], np.nan), 2, 0, 2)


# ---------------------------------------------------------------- oscillating

def test_oscillating_zero_field():
    V = make_oscillating(0.3, P=[((0.0, 0.0, 0.0), (1.0, 0.0, 0.0), "sin")])
    rep = shell_norm(V.V, 2, 0, 6)
    assert rep.value == 0.0
    assert shell_norm(V.Q, 2, 0, 6).value == 0.0


def test_oscillating_shell_sup_profile():
    V = make_oscillating(0.3)
    rep = shell_norm(V.V, 2, 0, 10)
    assert np.isfinite(rep.value)
    for n in range(11):
        dense = dense_shell_sup(V.V, n)
        assert rep.per_shell[n] <= dense * (1 + 1e-12)
        assert rep.per_shell[n] >= 0.5 * dense
        assert 0.5 <= dense / (n * n + 1) ** -0.3 <= 2.0


def test_oscillating_divergence_matches_field(rng):
    V = make_oscillating(0.3, P=[((1.0, 0.5, 0.0), (1.0, -0.5, 2.0), "sin"),
                                 ((0.0, 0.2, 1.0), (0.3, 1.0, 0.0), "cos")])
    x = rng.uniform(-6, 6, (50, 3))
    assert np.allclose(V.V(x), fd_divergence(V.Q, x), atol=1e-8)


def test_oscillating_jacobian_matches_fd(rng):
    V = make_oscillating(0.6)
    x = rng.uniform(-4, 4, (20, 3))
    J = V.DQ(x)
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (V.Q(x + e) - V.Q(x - e)) / (2 * h)
        assert np.allclose(J[:, :, j], fd, atol=1e-7)


def test_oscillating_rejects_bad_kind():
    with pytest.raises(ValueError):
        make_oscillating(0.3, P=[((1.0, 0, 0), (1.0, 0, 0), "tan")])


# ---------------------------------------------------------------- random model

def test_mollifier_unit_mass():
    assert mollifier_mass(1.0) == pytest.approx(1.0, rel=1e-12)
    assert mollifier_mass(0.0) == 0.0
    assert mollifier(np.array([1.0, 1.5])).tolist() == [0.0, 0.0]


def test_rademacher_deterministic_and_order_free():
    a = [rademacher(5, (i, -i, 2)) for i in range(20)]
    b = [rademacher(5, (i, -i, 2)) for i in reversed(range(20))][::-1]
    assert a == b
    assert set(a) <= {-1, 1} and len(set(a)) == 2


def test_random_realization_deterministic(rng):
    x = rng.uniform(-5, 5, (200, 3))
    V1, V2 = make_random(0.25, 11, 5), make_random(0.25, 11, 5)
    assert np.array_equal(V1.V(x), V2.V(x))
    assert np.array_equal(V1.Q(x), V2.Q(x))


def test_random_disjoint_support_bound(rng):
    V = make_random(0.25, 11, 7)
    x = rng.uniform(-7, 7, (4000, 3))
    n = 2.0 * np.rint(x / 2.0)
    bound = (1 + np.linalg.norm(n, axis=-1)) ** (-0.75) * mollifier(np.array(0.0))
    assert np.all(np.abs(V.V(x)) <= bound * (1 + 1e-12))
    # in terms of |x| itself the bound holds up to the factor 2^(1/2+eps)
    loose = 2 ** 0.75 * (1 + np.linalg.norm(x, axis=-1)) ** (-0.75) * mollifier(np.array(0.0))
    assert np.all(np.abs(V.V(x)) <= loose)


def test_random_value_at_center():
    V = make_random(0.25, 3, 5)
    for j in (0, 5, 13):
        c = V.centers[j]
        assert V.V(c[None])[0] == pytest.approx(V.coefficients[j] * mollifier(np.array(0.0)), rel=1e-14)


def test_random_spectral_divergence_of_field():
    V = make_random(0.5, 7, 3)
    errs = []
    for N in (64, 128):
        g = BoxGrid(16.0, N)
        div = spectral_divergence(sample(g, V.Q)).data.real
        ref = sample(g, V.V).data.real
        inner = g.radius() < 5.0
        errs.append(np.abs(div - ref)[inner].max() / np.abs(ref).max())
    # the bumps are steep, so the spectral divergence converges with resolution
    assert errs[1] < 2e-2
    assert errs[1] < errs[0] / 4


def test_random_divergence_pointwise(rng):
    V = make_random(0.5, 7, 3)
    x = rng.uniform(-3, 3, (40, 3))
    assert np.allclose(V.V(x), fd_divergence(V.Q, x), atol=1e-6)


def test_random_rejects_bad_args():
    with pytest.raises(ValueError):
        make_random(0.0, 1, 5)
    with pytest.raises(ValueError):
        make_random(0.5, 1, 1)


# ---------------------------------------------------------------- sharpness profile

def test_sharpness_square_sum_divergence():
    from scipy.special import zeta
    from scatterwave.potentials import RadialProfile
    n_max = 100000
    s03 = np.cumsum(RadialProfile(0.3, n_max).weights ** 2)
    s06 = np.cumsum(RadialProfile(0.6, n_max).weights ** 2)
    # 2 gamma < 1: partial sums grow like N^(1 - 2 gamma)
    n = np.arange(2, n_max + 1)
    assert np.all(s03 >= ((n + 1) ** 0.4 - 2 ** 0.4) / 0.4)
    # 2 gamma > 1: bounded by zeta(2 gamma) - 1
    assert s06[-1] < zeta(1.2) - 1
    assert zeta(1.2) - 1 - s06[-1] <= n_max ** -0.2 / 0.2


def test_sharpness_value_at_bump_center():
    V = make_sharpness_radial(0.3, 4)
    assert V.V(np.array([[6.0, 0, 0]]))[0] == pytest.approx(2 * 3 ** -0.3 / 6, rel=1e-14)
    assert V.V(np.array([[0, 0, 24.0]]))[0] == pytest.approx(2 * 4 ** -0.3 / 24, rel=1e-14)


def test_sharpness_divergence(rng):
    V = make_sharpness_radial(0.3, 4)
    d = random_dirs(rng, 30)
    x = d * rng.uniform(1.2, 7.0, 30)[:, None]
    assert np.allclose(V.V(x), fd_divergence(V.Q, x), atol=1e-6)


def test_sharpness_rejects_bad_args():
    with pytest.raises(ValueError):
        make_sharpness_radial(1.2, 4)
    with pytest.raises(ValueError):
        make_sharpness_radial(0.3, 1)


# ---------------------------------------------------------------- truncation and shift

@given(st.floats(1.5, 6.0))
def test_truncate_inner_identity_and_support(rho):
    V = make_oscillating(0.3)
    T = truncate(V, rho)
    rng = np.random.default_rng(0)
    d = random_dirs(rng, 64)
    x_in = d * rng.uniform(0, rho, 64)[:, None]
    x_out = d * rng.uniform(rho + 1, rho + 5, 64)[:, None]
    assert np.array_equal(T.V(x_in), V.V(x_in))
    assert np.all(T.V(x_out) == 0)
    assert np.all(T.Q(x_out) == 0)


def test_truncate_inner_plus_outer_is_whole(rng):
    V = make_oscillating(0.3)
    x = rng.uniform(-8, 8, (100, 3))
    a, b = truncate(V, 3.0, "inner"), truncate(V, 3.0, "outer")
    assert np.allclose(a.V(x) + b.V(x), V.V(x), atol=1e-14)
    assert np.allclose(a.Q(x) + b.Q(x), V.Q(x), atol=1e-14)


def test_truncate_divergence_consistent(rng):
    V = make_oscillating(0.3)
    T = truncate(V, 2.5)
    d = random_dirs(rng, 40)
    x = d * rng.uniform(2.6, 3.4, 40)[:, None]
    assert np.allclose(T.V(x), fd_divergence(T.Q, x), atol=1e-6)


def test_outer_tail_norm_decreases():
    V = make_oscillating(0.3)
    vals = [shell_norm(truncate(V, rho, "outer").Q, 2, 0, 40, n_dirs=128, n_rad=4).value
            for rho in (2.0, 6.0, 12.0, 24.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.6 * vals[0]


def test_smoothstep_endpoints():
    assert smoothstep_cutoff(np.array([0.0, 2.0, 3.0, 4.0]), 2.0).tolist() == [1.0, 1.0, 0.0, 0.0]


def test_shift_zero_is_identity():
    V = make_oscillating(0.3)
    assert shift(V, (0, 0, 0)) is V


def test_shift_pointwise(rng):
    V = make_oscillating(0.3)
    y = np.array([1.0, -2.0, 0.5])
    S = shift(V, y)
    x = rng.uniform(-5, 5, (50, 3))
    assert np.array_equal(S.V(x), V.V(x - y))
    assert np.array_equal(S.Q(x), V.Q(x - y))


def test_shift_shell_norm_ratio():
    V = make_oscillating(0.3)
    y = np.array([5.0, 0.0, 0.0])
    a = shell_norm(V.V, 2, 0, 20, n_dirs=256, n_rad=6).value
    b = shell_norm(shift(V, y).V, 2, 0, 20, n_dirs=256, n_rad=6).value
    assert b / a <= 10 * (1 + 5)


# ---------------------------------------------------------------- config and description

def test_from_config_families():
    assert from_config({"family": "zero"}).family == "zero"
    V = from_config({"family": "oscillating", "gamma": 0.3, "coupling": 0.5, "truncate": 3.0, "label": "x"})
    ref = truncate(make_oscillating(0.3), 3.0).scaled(0.5)
    x = np.array([[0.3, 1.0, -2.0], [3.5, 0.1, 0.0]])
    assert np.allclose(V.V(x), ref.V(x))
    assert from_config({"family": "random", "epsilon": 0.5, "seed": 1, "box_radius": 3}).family == "random"
    with pytest.raises(ValueError):
        from_config({"family": "unknown"})


def test_describe_zero_potential():
    d = make_zero().describe(shell_cap=3)
    assert d["family"] == "zero"
    assert all(s["sup_V"] == 0 and s["sup_Q"] == 0 for s in d["shells"])


def test_scaled_is_linear(rng):
    V = make_random(0.5, 2, 3)
    x = rng.uniform(-3, 3, (30, 3))
    assert np.allclose(V.scaled(-2.0).V(x), -2.0 * V.V(x))
    assert V.scaled(0.5).scaled(0.5).params["coupling"] == 0.25


def test_grid_field_of_potential():
    g = BoxGrid(8.0, 16)
    f = sample(g, make_oscillating(0.3).Q)
    assert isinstance(f, GridField) and f.is_vector
