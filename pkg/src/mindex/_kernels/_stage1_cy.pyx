# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled stage-1 training loop; see _stage1_np for the shared semantics.

Samples are drawn through numpy's BitGenerator C interface with the same
ziggurat fill the Generator uses, so a fixed seed produces the same sample
stream as the NumPy twin.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport INFINITY, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal_fill

cnp.import_array()

STATUS_OK = 0
STATUS_DEGENERATE = 1

cdef double _DEGENERATE_NORM = 1e-12


cdef inline void _phi_dphi(int kind, int L, double z, double inv_fact,
                           double* phi, double* dphi) noexcept nogil:
    cdef double sqrt2 = 1.4142135623730951
    cdef double prev, cur, tmp, h2, d2
    cdef int n
    if kind == 2:
        phi[0] = z if z >= 0.0 else -z
        dphi[0] = 0.0 if z == 0.0 else (1.0 if z > 0.0 else -1.0)
        return
    h2 = (z * z - 1.0) / sqrt2
    d2 = sqrt2 * z
    if kind == 1:
        phi[0] = h2
        dphi[0] = d2
        return
    prev = 1.0
    cur = z
    for n in range(1, 2 * L):
        tmp = z * cur - n * prev
        prev = cur
        cur = tmp
    phi[0] = h2 + cur * inv_fact
    dphi[0] = d2 + (2 * L) * prev * inv_fact


def run_stage1(
    cnp.float64_t[:, ::1] V,
    cnp.float64_t[::1] a,
    vstar_obj,
    int P,
    int link_kind,
    int L,
    double eta,
    double a0,
    double theta_rec,
    double ema_decay,
    long diag_stride,
    long t_max,
    gen,
    cnp.int64_t[::1] rec_t,
    cnp.float64_t[:, ::1] rec_norm_ratio,
    cnp.float64_t[:, ::1] rec_rho,
    cnp.float64_t[:, ::1] rec_maxcorr,
    cnp.float64_t[:, ::1] rec_ema,
    cnp.float64_t[:, ::1] rec_share,
):
    cdef Py_ssize_t m = V.shape[0]
    cdef Py_ssize_t d = V.shape[1]
    cdef bint canonical = vstar_obj is None
    cdef cnp.float64_t[:, ::1] vstar
    if canonical:
        vstar = np.empty((0, d))
    else:
        vstar = np.ascontiguousarray(vstar_obj)

    cdef double scale = eta / a0
    cdef double inv_fact = 1.0
    cdef double fact = 1.0
    cdef int n
    if link_kind == 0:
        for n in range(2, 2 * L + 1):
            fact *= n
        inv_fact = 1.0 / sqrt(fact)
    cdef int diag_L = L if link_kind == 0 else 2

    cdef cnp.float64_t[::1] x = np.empty(d)
    cdef cnp.float64_t[::1] s = np.empty(m)
    cdef cnp.float64_t[::1] u = np.empty(max(P, 1))
    cdef cnp.float64_t[:, ::1] C = np.empty((m, P))
    cdef cnp.float64_t[::1] ema = np.empty(P)

    cdef bitgen_t* rng = <bitgen_t*> PyCapsule_GetPointer(
        gen.bit_generator.capsule, "BitGenerator")

    cdef Py_ssize_t i, k, p, nrec = 0
    cdef long t = 0, stop_step = -1
    cdef int status = 0  # STATUS_OK
    cdef bint stop, done = False
    cdef double acc, c2, rel, resid, g, r, norm, phi_v, dphi_v, ratio, rho_a, mn, pw
    cdef int q

    with gen.bit_generator.lock:
        with nogil:
            for i in range(m):
                for p in range(P):
                    if canonical:
                        C[i, p] = V[i, p]
                    else:
                        acc = 0.0
                        for k in range(d):
                            acc += vstar[p, k] * V[i, k]
                        C[i, p] = acc
            for p in range(P):
                mn = 0.0
                for i in range(m):
                    c2 = C[i, p] * C[i, p]
                    if c2 > mn:
                        mn = c2
                ema[p] = mn

            while not done:
                stop = True
                for p in range(P):
                    if ema[p] < theta_rec:
                        stop = False
                        break
                if stop or t == t_max or t % diag_stride == 0:
                    # re-synchronize C from V, then record
                    for i in range(m):
                        for p in range(P):
                            if canonical:
                                C[i, p] = V[i, p]
                            else:
                                acc = 0.0
                                for k in range(d):
                                    acc += vstar[p, k] * V[i, k]
                                C[i, p] = acc
                    rec_t[nrec] = t
                    for p in range(P):
                        rec_maxcorr[nrec, p] = 0.0
                        rec_share[nrec, p] = 0.0
                        rec_ema[nrec, p] = ema[p]
                    for i in range(m):
                        rel = 0.0
                        rho_a = 0.0
                        for p in range(P):
                            c2 = C[i, p] * C[i, p]
                            rel += c2
                            pw = c2
                            for q in range(diag_L - 1):
                                pw *= c2
                            rho_a += pw
                            if c2 > rec_maxcorr[nrec, p]:
                                rec_maxcorr[nrec, p] = c2
                        resid = 1.0 - rel
                        rec_norm_ratio[nrec, i] = rel / resid if resid > 0.0 else INFINITY
                        rec_rho[nrec, i] = 2.0 * rel + 2.0 * diag_L * rho_a
                        if rel > 0.0:
                            for p in range(P):
                                ratio = (C[i, p] * C[i, p]) / rel
                                if ratio > rec_share[nrec, p]:
                                    rec_share[nrec, p] = ratio
                    nrec += 1
                if stop:
                    stop_step = t
                    break
                if t == t_max:
                    stop_step = -1
                    break

                random_standard_normal_fill(rng, <cnp.npy_intp> d, &x[0])
                if scale != 0.0:
                    r = 0.0
                    for p in range(P):
                        if canonical:
                            u[p] = x[p]
                        else:
                            acc = 0.0
                            for k in range(d):
                                acc += vstar[p, k] * x[k]
                            u[p] = acc
                        _phi_dphi(link_kind, L, u[p], inv_fact, &phi_v, &dphi_v)
                        r += phi_v
                    for i in range(m):
                        acc = 0.0
                        for k in range(d):
                            acc += V[i, k] * x[k]
                        s[i] = acc
                        _phi_dphi(link_kind, L, acc, inv_fact, &phi_v, &dphi_v)
                        r -= a[i] * phi_v

                    for i in range(m):
                        _phi_dphi(link_kind, L, s[i], inv_fact, &phi_v, &dphi_v)
                        g = scale * a[i] * r * dphi_v
                        acc = 0.0
                        for k in range(d):
                            V[i, k] += g * (x[k] - s[i] * V[i, k])
                            acc += V[i, k] * V[i, k]
                        norm = sqrt(acc)
                        if norm < _DEGENERATE_NORM:
                            status = 1  # STATUS_DEGENERATE
                            stop_step = t
                            done = True
                            break
                        for k in range(d):
                            V[i, k] /= norm
                        for p in range(P):
                            C[i, p] = (C[i, p] + g * (u[p] - s[i] * C[i, p])) / norm
                    if done:
                        break

                for p in range(P):
                    mn = 0.0
                    for i in range(m):
                        c2 = C[i, p] * C[i, p]
                        if c2 > mn:
                            mn = c2
                    ema[p] = ema_decay * ema[p] + (1.0 - ema_decay) * mn
                t += 1

    return stop_step, nrec, status
