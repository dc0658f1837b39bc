"""Dense complex-matrix kernel.

Hermitian eigendecomposition (cyclic Jacobi), spectral matrix functions,
tensor products, partial traces and a fixed-step RK4 propagator. The hot
loops live in a Cython extension; a numpy implementation of the same
algorithms is used when the extension is missing or when
``EPMFLUX_PURE_PYTHON=1`` is set.
"""
import os
from typing import Callable, NamedTuple

import numpy as np

from ..errors import ConvergenceFailure, DimensionMismatch, NonHermitianInput, SingularOperand
from . import _fallback

_kernels = _fallback
BACKEND = "python"
if os.environ.get("EPMFLUX_PURE_PYTHON", "0") != "1":
    try:
        from . import _ckernels as _kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass

JACOBI_TOL = 1e-16
MAX_SWEEPS = 100
EIGEN_FLOOR = 1e-12

__all__ = [
    "BACKEND",
    "HermitianEigen",
    "as_matrix",
    "hermitian_eig",
    "matrix_function",
    "spectral_exp",
    "tensor_product",
    "partial_trace",
    "partial_transpose",
    "rk4_propagate",
    "set_backend",
]


class HermitianEigen(NamedTuple):
    """Eigenvalues in ascending order and the matching unitary of column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def set_backend(name: str) -> None:
    """Switch between the ``"cython"`` and ``"python"`` kernels at runtime."""
    global _kernels, BACKEND
    if name == "python":
        _kernels, BACKEND = _fallback, "python"
    elif name == "cython":
        from . import _ckernels

        _kernels, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown backend {name!r}")


def as_matrix(a, square: bool = True) -> np.ndarray:
    """Convert to a finite complex128 2-D array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {m.shape}")
    if square and m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def hermitian_eig(a, check: bool = True) -> HermitianEigen:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    a : array_like
        Square Hermitian matrix.
    check : bool
        Reject inputs with ``||A - A^H||_F > 1e-10 ||A||_F``.

    Returns
    -------
    HermitianEigen
        Ascending eigenvalues and unitary eigenvector matrix.
    """
    m = as_matrix(a)
    norm = np.linalg.norm(m)
    if check and np.linalg.norm(m - m.conj().T) > 1e-10 * max(norm, 1e-300):
        raise NonHermitianInput("matrix is not Hermitian")
    if m.shape[0] == 1:
        return HermitianEigen(np.array([m[0, 0].real]), np.ones((1, 1), dtype=np.complex128))
    w, v, sweeps = _kernels.jacobi_eigh(m, JACOBI_TOL, MAX_SWEEPS)
    if sweeps < 0:
        raise ConvergenceFailure(f"Jacobi iteration did not converge in {MAX_SWEEPS} sweeps")
    order = np.argsort(w, kind="stable")
    return HermitianEigen(np.asarray(w)[order], np.asarray(v)[:, order])


def _apply(eig: HermitianEigen, values) -> np.ndarray:
    v = eig.eigenvectors
    return (v * values) @ v.conj().T


def matrix_function(a, f: str, floor: float = EIGEN_FLOOR) -> np.ndarray:
    """Apply a scalar function to a Hermitian matrix through its spectrum.

    ``f`` is one of ``exp``, ``log``, ``sqrt``, ``inv``, ``inv_sqrt``. For the
    last three non-total functions every eigenvalue must exceed
    ``floor * max|lambda|``. ``sqrt`` clips eigenvalues down to ``-floor *
    max|lambda|`` to zero and rejects anything more negative.
    """
    eig = hermitian_eig(a)
    w = eig.eigenvalues
    scale = max(np.max(np.abs(w)), 1e-300)
    if f == "exp":
        return _apply(eig, np.exp(w))
    if f == "sqrt":
        if w[0] < -floor * scale:
            raise SingularOperand("sqrt of a matrix with a negative eigenvalue")
        return _apply(eig, np.sqrt(np.clip(w, 0.0, None)))
    if f in ("log", "inv", "inv_sqrt"):
        if w[0] <= floor * scale:
            raise SingularOperand(f"{f}: eigenvalue {w[0]:.3e} below floor")
        g = {"log": np.log, "inv": np.reciprocal, "inv_sqrt": lambda x: 1.0 / np.sqrt(x)}[f]
        return _apply(eig, g(w))
    raise ValueError(f"unknown matrix function {f!r}")


def spectral_exp(a, coefficient: complex) -> np.ndarray:
    """Return ``exp(coefficient * A)`` for Hermitian ``A`` and complex coefficient."""
    eig = hermitian_eig(a)
    return _apply(eig, np.exp(coefficient * eig.eigenvalues))


def spectral_map(a, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply an arbitrary vectorized scalar function to the spectrum."""
    eig = hermitian_eig(a)
    return _apply(eig, func(eig.eigenvalues))


def tensor_product(*ops) -> np.ndarray:
    """Kronecker product with row index ``r_A * dim_B + r_B``."""
    out = np.asarray(ops[0], dtype=np.complex128)
    for op in ops[1:]:
        out = np.kron(out, np.asarray(op, dtype=np.complex128))
    return out


def partial_trace(m, dims: tuple[int, int], keep: str = "A") -> np.ndarray:
    """Trace out one factor of a bipartite operator.

    Examples
    --------
    >>> partial_trace(np.eye(4), (2, 2), keep="A")
    array([[2.+0.j, 0.+0.j],
           [0.+0.j, 2.+0.j]])
    """
    m = as_matrix(m)
    da, db = dims
    if m.shape[0] != da * db:
        raise DimensionMismatch(f"matrix of size {m.shape[0]} does not match dims {dims}")
    t = m.reshape(da, db, da, db)
    if keep == "A":
        return np.einsum("ijkj->ik", t)
    if keep == "B":
        return np.einsum("ijil->jl", t)
    raise ValueError("keep must be 'A' or 'B'")


def partial_transpose(m, dims: tuple[int, int], system: str = "B") -> np.ndarray:
    m = as_matrix(m)
    da, db = dims
    if m.shape[0] != da * db:
        raise DimensionMismatch(f"matrix of size {m.shape[0]} does not match dims {dims}")
    t = m.reshape(da, db, da, db)
    t = t.transpose(0, 3, 2, 1) if system == "B" else t.transpose(2, 1, 0, 3)
    return t.reshape(da * db, da * db)


def rk4_propagate(h_grid, dissipator, x0, dt: float) -> np.ndarray:
    """Integrate ``dx/dt = -i[H(t), x] + D x`` for a batch of column-stacked states.

    Parameters
    ----------
    h_grid : ndarray, shape (2 N + 1, d, d)
        Hamiltonian sampled at ``t_i + j dt / 2``.
    dissipator : ndarray, shape (d**2, d**2)
        Time-independent dissipative superoperator (zeros for unitary runs).
    x0 : ndarray, shape (d**2, m)
        Columns are column-stacked initial matrices.
    dt : float
        Step size.
    """
    return np.asarray(_kernels.rk4_propagate(h_grid, dissipator, x0, float(dt)))
