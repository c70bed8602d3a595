import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scatterwave import kernels

needs_compiled = pytest.mark.skipif(not kernels.COMPILED, reason="compiled kernels not built")


def data(seed, T=7, S=11):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=(T, 3)) * 5 + [12, 0, 0]
    s = rng.normal(size=(S, 3))
    w = rng.normal(size=S) + 1j * rng.normal(size=S)
    wv = rng.normal(size=(S, 3)) + 1j * rng.normal(size=(S, 3))
    c = rng.normal(size=3) * 0.3
    return t, c, s, w, wv


def loop_amp(t, c, s, w, k):
    out = []
    for x in t:
        dc = np.linalg.norm(x - c)
        out.append(sum(wj * dc * np.exp(1j * k * (np.linalg.norm(x - y) - dc)) / np.linalg.norm(x - y)
                       for y, wj in zip(s, w)))
    return np.array(out)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_amp_sum_matches_loop(backend):
    if backend == "compiled" and not kernels.COMPILED:
        pytest.skip("compiled kernels not built")
    b = kernels.python_backend if backend == "python" else kernels.compiled_backend
    t, c, s, w, _ = data(0)
    k = 1.3 + 0.4j
    assert np.allclose(kernels.amp_sum(t, c, s, w, k, backend=b), loop_amp(t, c, s, w, k), rtol=1e-12)


def test_amp_grad_sum_is_source_gradient():
    t, c, s, _, wv = data(1, S=4)
    k = 0.9 + 0.3j
    g = kernels.amp_grad_sum(t, c, s, wv, k, backend=kernels.python_backend)
    h = 1e-6
    fd = np.zeros(len(t), complex)
    for j in range(len(s)):
        for d in range(3):
            sp, sm = s.copy(), s.copy()
            sp[j, d] += h
            sm[j, d] -= h
            one = np.zeros(len(s), complex)
            one[j] = wv[j, d]
            fd += (kernels.amp_sum(t, c, sp, one, k) - kernels.amp_sum(t, c, sm, one, k)) / (2 * h)
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_farfield_is_limit_of_amp_sum():
    _, c, s, w, _ = data(2)
    sig = np.array([[0.0, 0.6, 0.8], [1.0, 0.0, 0.0]])
    k = 1.1 + 0.2j
    far = kernels.farfield_sum(sig, c, s, w, k)
    near = kernels.amp_sum(c + 1e7 * sig, c, s, w, k)
    assert np.allclose(near, far, rtol=1e-5)


@needs_compiled
@given(st.integers(0, 10_000), st.floats(0.1, 3.0), st.floats(0.0, 2.0))
def test_backends_agree(seed, kr, ki):
    t, c, s, w, wv = data(seed, T=13, S=29)
    k = complex(kr, ki)
    py, cy = kernels.python_backend, kernels.compiled_backend
    for fn, args in ((kernels.amp_sum, (t, c, s, w)), (kernels.amp_grad_sum, (t, c, s, wv)),
                     (kernels.farfield_sum, (t / np.linalg.norm(t, axis=1)[:, None], c, s, w))):
        a = fn(*args, k, backend=py)
        b = fn(*args, k, backend=cy)
        assert np.allclose(a, b, rtol=1e-11, atol=1e-13 * np.abs(a).max())


def test_pure_python_switch():
    env = dict(os.environ, SCATTERWAVE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from scatterwave import kernels; print(kernels.COMPILED)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
