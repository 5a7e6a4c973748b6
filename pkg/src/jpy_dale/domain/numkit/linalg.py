"""Symmetric eigendecomposition and SPD matrix roots.

The eigensolver is a cyclic Jacobi sweep: every off-diagonal pair (p, q) is
annihilated in row-major order by a plane rotation, and sweeps repeat until the
off-diagonal Frobenius norm drops to ``OFF_DIAGONAL_TOLERANCE * ||A||_F``.

Example:
    ```python
    eigenvalues, eigenvectors = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]))
    # eigenvalues -> [1.0, 3.0]
    root = sqrtm_spd(np.diag([4.0, 9.0]))
    # root -> diag(2, 3)
    ```
"""

import logging

import numpy as np

from ...errors import BadRange, NonConvergent, NonSymmetric, NotPositiveSemidefinite, ShapeMismatch
from .tensor import Tensor, ensure_finite

logger = logging.getLogger("dale.numkit.linalg")

MAX_DIM = 64
MAX_SWEEPS = 100
SYMMETRY_TOLERANCE = 1e-9
OFF_DIAGONAL_TOLERANCE = 1e-12
PSD_TOLERANCE = 1e-10


def check_symmetric(matrix: Tensor) -> Tensor:
    """Validate a square symmetric matrix and return its exactly symmetrized copy."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise ShapeMismatch(f"expected a non-empty square matrix, got {a.shape}")
    if a.shape[0] > MAX_DIM:
        raise BadRange(f"dimension {a.shape[0]} exceeds {MAX_DIM}")
    ensure_finite(a, "check_symmetric")

    asymmetry = float(np.max(np.abs(a - a.T)))
    if asymmetry > SYMMETRY_TOLERANCE * max(1.0, float(np.max(np.abs(a)))):
        logger.error("Matrix asymmetry %.3e exceeds tolerance", asymmetry)
        raise NonSymmetric(f"max |A - A^T| = {asymmetry:.3e}")

    return 0.5 * (a + a.T)


def _off_diagonal_norm(a: Tensor) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def sym_eig(matrix: Tensor) -> tuple[Tensor, Tensor]:
    """Eigenvalues (ascending) and orthogonal eigenvectors (columns) of a symmetric matrix.

    Raises:
        NonSymmetric: If the matrix is not symmetric within 1e-9
        NonConvergent: If the sweep cap is reached
    """
    a = check_symmetric(matrix)
    d = a.shape[0]
    v = np.eye(d)

    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return np.zeros(d), v

    threshold = OFF_DIAGONAL_TOLERANCE * scale
    for sweep in range(MAX_SWEEPS + 1):
        if _off_diagonal_norm(a) <= threshold:
            logger.debug("Jacobi converged after %d sweeps (d=%d)", sweep, d)
            break
        if sweep == MAX_SWEEPS:
            logger.error("Jacobi did not converge in %d sweeps (d=%d)", MAX_SWEEPS, d)
            raise NonConvergent(f"off-diagonal norm {_off_diagonal_norm(a):.3e} after {MAX_SWEEPS} sweeps")

        for p in range(d - 1):
            for q in range(p + 1, d):
                if a[p, q] == 0.0:
                    continue

                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = (1.0 if theta >= 0.0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * col_p - s * col_q, s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * row_p - s * row_q, s * row_p + c * row_q

                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p], v[:, q] = c * vec_p - s * vec_q, s * vec_p + c * vec_q

    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def sqrtm_spd(matrix: Tensor) -> Tensor:
    """Principal square root of a symmetric positive semidefinite matrix.

    Eigenvalues in [-1e-10 * max(1, ||A||_F), 0) are clamped to zero.

    Raises:
        NonSymmetric: If the matrix is not symmetric within 1e-9
        NotPositiveSemidefinite: If an eigenvalue is below the clamping tolerance
    """
    eigenvalues, v = sym_eig(matrix)
    tolerance = PSD_TOLERANCE * max(1.0, float(np.linalg.norm(matrix)))
    if eigenvalues[0] < -tolerance:
        logger.error("Smallest eigenvalue %.3e is below -%.1e", eigenvalues[0], tolerance)
        raise NotPositiveSemidefinite(f"min eigenvalue {eigenvalues[0]:.3e}")

    root = (v * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ v.T
    return 0.5 * (root + root.T)


def sqrtm_and_inv_sqrtm_spd(matrix: Tensor, floor: float = 1e-12) -> tuple[Tensor, Tensor]:
    """Square root and inverse square root from a single eigendecomposition.

    The inverse root floors eigenvalues at ``floor`` so rank-deficient inputs stay finite.
    """
    eigenvalues, v = sym_eig(matrix)
    tolerance = PSD_TOLERANCE * max(1.0, float(np.linalg.norm(matrix)))
    if eigenvalues[0] < -tolerance:
        raise NotPositiveSemidefinite(f"min eigenvalue {eigenvalues[0]:.3e}")

    root = (v * np.sqrt(np.clip(eigenvalues, 0.0, None))) @ v.T
    inverse_root = (v / np.sqrt(np.maximum(eigenvalues, floor))) @ v.T
    return 0.5 * (root + root.T), 0.5 * (inverse_root + inverse_root.T)
