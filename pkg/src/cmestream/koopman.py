"""Transfer-operator analysis of a learned embedding operator.

For state-space dynamics (x and y in the same space, one shared kernel)
the learned operator induces a finite matrix whose right eigenvectors give
Koopman eigenfunction coefficients over the dictionary; eigenfunctions are
evaluated by summing kernel sections, typically on a 2-d grid for heat-map
style output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InputError, NumericalError
from .kernels import Kernel, cross_gram
from .operator import Dictionary, OperatorRep

RESIDUAL_RTOL = 1e-6
_REAL_TOL = 1e-10


def koopman_matrix(U: OperatorRep) -> np.ndarray:
    """Finite Koopman matrix W^T G_YX with G_YX[i,j] = k(y_i, x_j)."""
    if len(U) == 0:
        return np.zeros((0, 0))
    if U.dict.dim_x != U.dict.dim_y:
        raise InputError("Koopman analysis needs matching x/y dimensions")
    if U.kernel_x != U.kernel_y:
        raise InputError("Koopman analysis needs one shared kernel")
    G_yx = cross_gram(U.kernel_x, U.dict.ys, U.dict.xs)
    return U.W.T @ G_yx


@dataclass(frozen=True)
class KoopmanSpectrum:
    """Top eigenpairs of the finite Koopman matrix, sorted by |eigenvalue|."""

    eigenvalues: np.ndarray    # complex, (k,)
    eigenvectors: np.ndarray   # complex, (d, k), columns are coefficients
    residuals: np.ndarray      # (k,), |M v - lambda v| per pair
    source_dict: Optional[Dictionary] = None
    kernel: Optional[Kernel] = None

    def __len__(self) -> int:
        return self.eigenvalues.shape[0]

    def is_real(self, index: int) -> bool:
        lam = self.eigenvalues[index]
        v = self.eigenvectors[:, index]
        return (abs(lam.imag) <= _REAL_TOL * max(1.0, abs(lam))
                and np.max(np.abs(v.imag)) <= _REAL_TOL)


def _normalize_pair(lam: complex, v: np.ndarray):
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return lam, v
    v = v / nrm
    if abs(lam.imag) <= _REAL_TOL * max(1.0, abs(lam)) and np.max(np.abs(v.imag)) <= _REAL_TOL:
        v = v.real.astype(complex)
        nz = np.nonzero(np.abs(v.real) > 1e-12)[0]
        if nz.size and v.real[nz[0]] < 0:
            v = -v
        return complex(lam.real), v
    # complex pair: rotate so the largest entry is real positive; the
    # conjugate partner receives the conjugate rotation automatically
    j = int(np.argmax(np.abs(v)))
    phase = v[j] / abs(v[j])
    return lam, v * np.conj(phase)


def eigen_spectrum(M, k: int, dictionary: Optional[Dictionary] = None,
                   kernel: Optional[Kernel] = None) -> KoopmanSpectrum:
    """Top-k eigenpairs of a (generally nonsymmetric) square matrix."""
    M = np.asarray(M, dtype=float)
    d = M.shape[0]
    if M.shape != (d, d):
        raise InputError("matrix must be square")
    if not (1 <= k <= d):
        raise InputError(f"requested {k} eigenpairs from a {d}x{d} matrix")
    try:
        vals, vecs = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    order = np.lexsort((-vals.imag, -vals.real, -np.abs(vals)))
    vals, vecs = vals[order], vecs[:, order]
    out_vals = np.empty(k, dtype=complex)
    out_vecs = np.empty((d, k), dtype=complex)
    residuals = np.empty(k)
    for i in range(k):
        lam, v = _normalize_pair(vals[i], vecs[:, i])
        res = np.linalg.norm(M @ v - lam * v)
        bound = RESIDUAL_RTOL * np.linalg.norm(v) * max(1.0, abs(lam))
        if np.linalg.norm(v) > 0 and res > bound:
            raise NumericalError(
                f"eigenpair {i} residual {res:.3e} exceeds bound {bound:.3e}")
        out_vals[i], out_vecs[:, i], residuals[i] = lam, v, res
    return KoopmanSpectrum(eigenvalues=out_vals, eigenvectors=out_vecs,
                           residuals=residuals, source_dict=dictionary,
                           kernel=kernel)


def koopman_spectrum(U: OperatorRep, k: int = 5) -> KoopmanSpectrum:
    """Spectrum of the Koopman matrix of a learned operator."""
    M = koopman_matrix(U)
    return eigen_spectrum(M, min(k, max(1, M.shape[0])),
                          dictionary=U.dict, kernel=U.kernel_x)


def eval_eigenfunction(spec: KoopmanSpectrum, index: int, points) -> np.ndarray:
    """phi(p) = sum_i v_i k(x_i, p) for each query point."""
    if not (0 <= index < len(spec)):
        raise InputError(f"eigenfunction index {index} out of range")
    if spec.source_dict is None or spec.kernel is None:
        raise InputError("spectrum carries no dictionary to evaluate against")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != spec.source_dict.dim_x:
        raise InputError("point dimension does not match dictionary")
    K = cross_gram(spec.kernel, pts, spec.source_dict.xs)
    return K @ spec.eigenvectors[:, index]


@dataclass(frozen=True)
class GridSpec:
    """Rectangular 2-d evaluation grid."""

    mins: tuple
    maxs: tuple
    counts: tuple

    def __post_init__(self):
        if not (len(self.mins) == len(self.maxs) == len(self.counts) == 2):
            raise InputError("grids must be two-dimensional")
        if any(c < 2 for c in self.counts):
            raise InputError("grids need at least 2 nodes per axis")
        if any(hi <= lo for lo, hi in zip(self.mins, self.maxs)):
            raise InputError("grid maxs must exceed mins")

    def axes(self):
        return tuple(np.linspace(lo, hi, n)
                     for lo, hi, n in zip(self.mins, self.maxs, self.counts))

    def points(self) -> np.ndarray:
        """All nodes, lexicographic row-major (first axis slowest)."""
        a0, a1 = self.axes()
        g0, g1 = np.meshgrid(a0, a1, indexing="ij")
        return np.column_stack([g0.ravel(), g1.ravel()])


@dataclass(frozen=True)
class GridField:
    grid: GridSpec
    values: np.ndarray   # complex, (n0*n1,), row-major over the grid


def grid_eval(spec: KoopmanSpectrum, index: int, grid: GridSpec) -> GridField:
    """Evaluate one eigenfunction over a 2-d grid (row-major order)."""
    vals = eval_eigenfunction(spec, index, grid.points())
    return GridField(grid=grid, values=vals)
