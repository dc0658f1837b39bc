# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: cyclic Jacobi eigensolver and fixed-step RK4 propagation."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


cdef inline double _abs2(double complex z) nogil:
    return z.real * z.real + z.imag * z.imag


def jacobi_eigh(a_in, double tol, int max_sweeps):
    """Cyclic Jacobi diagonalization of a complex Hermitian matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues unsorted;
    ``sweeps`` is -1 when the budget was exhausted.
    """
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] a = np.array(a_in, dtype=np.complex128, order="C")
    cdef Py_ssize_t n = a.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] v = np.eye(n, dtype=np.complex128)
    cdef double complex[:, ::1] A = a
    cdef double complex[:, ::1] V = v
    cdef Py_ssize_t p, q, k
    cdef int sweep, done = -1
    cdef double off, total, mag, app, aqq, theta, t, c, s
    cdef double complex ph, phc, xp, xq

    with nogil:
        for p in range(n):
            A[p, p] = A[p, p].real
            for q in range(p + 1, n):
                xp = 0.5 * (A[p, q] + A[q, p].conjugate())
                A[p, q] = xp
                A[q, p] = xp.conjugate()
        for sweep in range(max_sweeps + 1):
            off = 0.0
            total = 0.0
            for p in range(n):
                total += A[p, p].real * A[p, p].real
                for q in range(p + 1, n):
                    off += 2.0 * _abs2(A[p, q])
            total += off
            if off <= tol * tol * total or off == 0.0:
                done = sweep
                break
            if sweep == max_sweeps:
                break
            for p in range(n - 1):
                for q in range(p + 1, n):
                    mag = sqrt(_abs2(A[p, q]))
                    if mag == 0.0:
                        continue
                    ph = A[p, q] / mag
                    phc = ph.conjugate()
                    app = A[p, p].real
                    aqq = A[q, q].real
                    theta = (aqq - app) / (2.0 * mag)
                    if theta >= 0.0:
                        t = 1.0 / (theta + sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + sqrt(theta * theta + 1.0))
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    # columns: A <- A J
                    for k in range(n):
                        xp = A[k, p]
                        xq = A[k, q]
                        A[k, p] = c * xp - s * phc * xq
                        A[k, q] = s * xp + c * phc * xq
                        xp = V[k, p]
                        xq = V[k, q]
                        V[k, p] = c * xp - s * phc * xq
                        V[k, q] = s * xp + c * phc * xq
                    # rows: A <- J^H A
                    for k in range(n):
                        xp = A[p, k]
                        xq = A[q, k]
                        A[p, k] = c * xp - s * ph * xq
                        A[q, k] = s * xp + c * ph * xq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    A[p, p] = app - t * mag
                    A[q, q] = aqq + t * mag
    w = np.empty(n, dtype=np.float64)
    for p in range(n):
        w[p] = a[p, p].real
    return w, v, done


cdef void _generator(const double complex[:, ::1] H, const double complex[:, ::1] D,
                     bint dissipative, const double complex[:, ::1] X,
                     double complex[:, ::1] Y, Py_ssize_t d) noexcept nogil:
    # Y = L X column by column; each column is a column-stacked d x d matrix.
    cdef Py_ssize_t n = d * d
    cdef Py_ssize_t m = X.shape[1]
    cdef Py_ssize_t col, a, b, c, r
    cdef double complex acc
    for col in range(m):
        for b in range(d):
            for a in range(d):
                acc = 0.0
                for c in range(d):
                    acc = acc + H[a, c] * X[b * d + c, col] - X[c * d + a, col] * H[c, b]
                Y[b * d + a, col] = -1j * acc
    if dissipative:
        for r in range(n):
            for col in range(m):
                acc = 0.0
                for c in range(n):
                    acc = acc + D[r, c] * X[c, col]
                Y[r, col] = Y[r, col] + acc


def rk4_propagate(h_grid, dissipator, x0, double dt):
    """Classical RK4 for ``dx/dt = -i[H(t), x] + D x`` on column-stacked batches.

    ``h_grid`` holds ``2 N + 1`` Hamiltonians at half-step spacing.
    """
    cdef cnp.ndarray[cnp.complex128_t, ndim=3] hg = np.ascontiguousarray(h_grid, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] dm = np.ascontiguousarray(dissipator, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=2] xa = np.array(x0, dtype=np.complex128, order="C")
    cdef Py_ssize_t d = hg.shape[1]
    cdef Py_ssize_t n = xa.shape[0]
    cdef Py_ssize_t m = xa.shape[1]
    cdef Py_ssize_t steps = (hg.shape[0] - 1) // 2
    cdef bint dissipative = bool(np.any(dm != 0))
    cdef double complex[:, :, ::1] HG = hg
    cdef double complex[:, ::1] D = dm
    cdef double complex[:, ::1] X = xa
    cdef double complex[:, ::1] K1 = np.zeros((n, m), dtype=np.complex128)
    cdef double complex[:, ::1] K2 = np.zeros((n, m), dtype=np.complex128)
    cdef double complex[:, ::1] K3 = np.zeros((n, m), dtype=np.complex128)
    cdef double complex[:, ::1] K4 = np.zeros((n, m), dtype=np.complex128)
    cdef double complex[:, ::1] T = np.zeros((n, m), dtype=np.complex128)
    cdef Py_ssize_t s, i, j
    cdef double h2 = 0.5 * dt
    cdef double h6 = dt / 6.0
    with nogil:
        for s in range(steps):
            _generator(HG[2 * s], D, dissipative, X, K1, d)
            for i in range(n):
                for j in range(m):
                    T[i, j] = X[i, j] + h2 * K1[i, j]
            _generator(HG[2 * s + 1], D, dissipative, T, K2, d)
            for i in range(n):
                for j in range(m):
                    T[i, j] = X[i, j] + h2 * K2[i, j]
            _generator(HG[2 * s + 1], D, dissipative, T, K3, d)
            for i in range(n):
                for j in range(m):
                    T[i, j] = X[i, j] + dt * K3[i, j]
            _generator(HG[2 * s + 2], D, dissipative, T, K4, d)
            for i in range(n):
                for j in range(m):
                    X[i, j] = X[i, j] + h6 * (K1[i, j] + 2.0 * K2[i, j] + 2.0 * K3[i, j] + K4[i, j])
    return xa
