"""Pure numpy versions of the compiled kernels (same algorithms, same sweep order)."""
import numpy as np


def jacobi_eigh(a_in, tol, max_sweeps):
    a = np.array(a_in, dtype=np.complex128)
    n = a.shape[0]
    a = 0.5 * (a + a.conj().T)
    a[np.diag_indices(n)] = a.diagonal().real
    v = np.eye(n, dtype=np.complex128)
    iu = np.triu_indices(n, 1)
    done = -1
    for sweep in range(max_sweeps + 1):
        off = 2.0 * np.sum(np.abs(a[iu]) ** 2)
        total = off + np.sum(a.diagonal().real ** 2)
        if off <= tol * tol * total or off == 0.0:
            done = sweep
            break
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                mag = abs(a[p, q])
                if mag == 0.0:
                    continue
                ph = a[p, q] / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                phc = ph.conjugate()
                cp_, cq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * cp_ - s * phc * cq
                a[:, q] = s * cp_ + c * phc * cq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * phc * vq
                v[:, q] = s * vp + c * phc * vq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rp - s * ph * rq
                a[q, :] = s * rp + c * ph * rq
                a[p, q] = 0.0
                a[q, p] = 0.0
                a[p, p] = app - t * mag
                a[q, q] = aqq + t * mag
    return a.diagonal().real.copy(), v, done


def _generator(h, dissipator, dissipative, r):
    # r has shape (m, d, d) and stores the transposed density matrices, so a
    # C-order reshape of r reproduces the column-stacked vectors.
    rho = np.swapaxes(r, 1, 2)
    out = -1j * (h @ rho - rho @ h)
    out = np.swapaxes(out, 1, 2)
    if dissipative:
        m, d, _ = r.shape
        out = out + (r.reshape(m, d * d) @ dissipator.T).reshape(m, d, d)
    return out


def rk4_propagate(h_grid, dissipator, x0, dt):
    h_grid = np.asarray(h_grid, dtype=np.complex128)
    dissipator = np.asarray(dissipator, dtype=np.complex128)
    x0 = np.asarray(x0, dtype=np.complex128)
    d = h_grid.shape[1]
    n, m = x0.shape
    steps = (h_grid.shape[0] - 1) // 2
    dissipative = bool(np.any(dissipator != 0))
    r = np.ascontiguousarray(x0.T).reshape(m, d, d)
    for s in range(steps):
        h0, hm, h1 = h_grid[2 * s], h_grid[2 * s + 1], h_grid[2 * s + 2]
        k1 = _generator(h0, dissipator, dissipative, r)
        k2 = _generator(hm, dissipator, dissipative, r + 0.5 * dt * k1)
        k3 = _generator(hm, dissipator, dissipative, r + 0.5 * dt * k2)
        k4 = _generator(h1, dissipator, dissipative, r + dt * k3)
        r = r + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return np.ascontiguousarray(r.reshape(m, n).T)
