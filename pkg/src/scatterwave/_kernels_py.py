"""Pure numpy versions of the direct-summation kernels (same signatures)."""
import numpy as np

_CHUNK = 1 << 21


def _blocks(T, S):
    step = max(1, _CHUNK // max(S, 1))
    for a in range(0, T, step):
        yield slice(a, min(a + step, T))


def amp_sum(targets, center, sources, weights, k):
    """out[t] = sum_s w_s |x_t - c| exp(ik(|x_t - y_s| - |x_t - c|)) / |x_t - y_s|."""
    targets = np.asarray(targets, float)
    sources = np.asarray(sources, float)
    out = np.empty(len(targets), dtype=complex)
    for sl in _blocks(len(targets), len(sources)):
        x = targets[sl]
        dc = np.linalg.norm(x - center, axis=1)[:, None]
        d = np.linalg.norm(x[:, None, :] - sources[None, :, :], axis=2)
        ker = dc * np.exp(1j * k * (d - dc)) / d
        out[sl] = ker @ weights
    return out


def amp_grad_sum(targets, center, sources, weights, k):
    """out[t] = sum_s w_s . grad_y [|x_t - c| exp(ik(|x_t - y| - |x_t - c|)) / |x_t - y|]."""
    targets = np.asarray(targets, float)
    sources = np.asarray(sources, float)
    out = np.empty(len(targets), dtype=complex)
    for sl in _blocks(len(targets), len(sources)):
        x = targets[sl]
        dc = np.linalg.norm(x - center, axis=1)[:, None]
        dv = x[:, None, :] - sources[None, :, :]
        d = np.linalg.norm(dv, axis=2)
        fac = dc * np.exp(1j * k * (d - dc)) * (1 - 1j * k * d) / d ** 3
        out[sl] = np.einsum("ts,tsj,sj->t", fac, dv, weights)
    return out


def farfield_sum(sigmas, center, sources, weights, k):
    """out[t] = sum_s w_s exp(-ik <sigma_t, y_s - c>)."""
    sigmas = np.asarray(sigmas, float)
    rel = np.asarray(sources, float) - center
    out = np.empty(len(sigmas), dtype=complex)
    for sl in _blocks(len(sigmas), len(rel)):
        out[sl] = np.exp(-1j * k * (sigmas[sl] @ rel.T)) @ weights
    return out
