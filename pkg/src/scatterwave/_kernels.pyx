# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled direct-summation kernels for amplitudes and far fields."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, cos, sin, sqrt

cnp.import_array()


def amp_sum(double[:, ::1] targets, double[::1] center, double[:, ::1] sources,
            double complex[::1] weights, double complex k):
    """out[t] = sum_s w_s |x_t - c| exp(ik(|x_t - y_s| - |x_t - c|)) / |x_t - y_s|."""
    cdef Py_ssize_t T = targets.shape[0], S = sources.shape[0], t, s
    cdef double kr = k.real, ki = k.imag
    cdef double dx, dy, dz, d, dc, ph, mag, accr, acci, wr, wi, cr, ci
    out = np.empty(T, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for t in range(T):
            dx = targets[t, 0] - center[0]
            dy = targets[t, 1] - center[1]
            dz = targets[t, 2] - center[2]
            dc = sqrt(dx * dx + dy * dy + dz * dz)
            accr = 0.0
            acci = 0.0
            for s in range(S):
                dx = targets[t, 0] - sources[s, 0]
                dy = targets[t, 1] - sources[s, 1]
                dz = targets[t, 2] - sources[s, 2]
                d = sqrt(dx * dx + dy * dy + dz * dz)
                ph = kr * (d - dc)
                mag = exp(-ki * (d - dc)) * dc / d
                cr = mag * cos(ph)
                ci = mag * sin(ph)
                wr = weights[s].real
                wi = weights[s].imag
                accr = accr + cr * wr - ci * wi
                acci = acci + cr * wi + ci * wr
            o[t] = accr + 1j * acci
    return out


def amp_grad_sum(double[:, ::1] targets, double[::1] center, double[:, ::1] sources,
                 double complex[:, ::1] weights, double complex k):
    """out[t] = sum_s w_s . grad_y [|x_t - c| exp(ik(|x_t - y| - |x_t - c|)) / |x_t - y|] at y_s."""
    cdef Py_ssize_t T = targets.shape[0], S = sources.shape[0], t, s, j
    cdef double kr = k.real, ki = k.imag
    cdef double dv[3]
    cdef double dx, dy, dz, d, dc, ph, mag, accr, acci, er, ei, fr, fi, pr, pi_
    out = np.empty(T, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for t in range(T):
            dx = targets[t, 0] - center[0]
            dy = targets[t, 1] - center[1]
            dz = targets[t, 2] - center[2]
            dc = sqrt(dx * dx + dy * dy + dz * dz)
            accr = 0.0
            acci = 0.0
            for s in range(S):
                dv[0] = targets[t, 0] - sources[s, 0]
                dv[1] = targets[t, 1] - sources[s, 1]
                dv[2] = targets[t, 2] - sources[s, 2]
                d = sqrt(dv[0] * dv[0] + dv[1] * dv[1] + dv[2] * dv[2])
                ph = kr * (d - dc)
                mag = exp(-ki * (d - dc)) * dc / (d * d * d)
                er = mag * cos(ph)
                ei = mag * sin(ph)
                # factor (1 - ik d)
                fr = 1.0 + ki * d
                fi = -kr * d
                pr = er * fr - ei * fi
                pi_ = er * fi + ei * fr
                for j in range(3):
                    accr = accr + dv[j] * (pr * weights[s, j].real - pi_ * weights[s, j].imag)
                    acci = acci + dv[j] * (pr * weights[s, j].imag + pi_ * weights[s, j].real)
            o[t] = accr + 1j * acci
    return out


def farfield_sum(double[:, ::1] sigmas, double[::1] center, double[:, ::1] sources,
                 double complex[::1] weights, double complex k):
    """out[t] = sum_s w_s exp(-ik <sigma_t, y_s - c>)."""
    cdef Py_ssize_t T = sigmas.shape[0], S = sources.shape[0], t, s
    cdef double kr = k.real, ki = k.imag
    cdef double p, mag, cr, ci, accr, acci, wr, wi
    out = np.empty(T, dtype=np.complex128)
    cdef double complex[::1] o = out
    with nogil:
        for t in range(T):
            accr = 0.0
            acci = 0.0
            for s in range(S):
                p = (sigmas[t, 0] * (sources[s, 0] - center[0])
                     + sigmas[t, 1] * (sources[s, 1] - center[1])
                     + sigmas[t, 2] * (sources[s, 2] - center[2]))
                mag = exp(ki * p)
                cr = mag * cos(kr * p)
                ci = -mag * sin(kr * p)
                wr = weights[s].real
                wi = weights[s].imag
                accr = accr + cr * wr - ci * wi
                acci = acci + cr * wi + ci * wr
            o[t] = accr + 1j * acci
    return out
