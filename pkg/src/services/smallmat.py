"""
Fixed-size dense kernels for the 3x3 and 6x6 matrices of the KKT solve.

Every kernel accepts an optional preallocated ``out`` array so callers can
keep their working storage fixed across samples.
"""

import math

import numpy as np

from ..exceptions import SingularMatrixError

DET_RTOL = 1e-12


def inv3(M: np.ndarray, out: np.ndarray | None = None, which: str = "matrix") -> np.ndarray:
    """Invert a 3x3 matrix with the analytical adjugate formula."""
    (a, b, c), (d, e, f), (g, h, i) = M.tolist()

    c00 = e * i - f * h
    c01 = f * g - d * i
    c02 = d * h - e * g
    det = a * c00 + b * c01 + c * c02

    # Hadamard bound: |det| <= product of row norms, so the test is scale-free per row
    bound = math.hypot(a, b, c) * math.hypot(d, e, f) * math.hypot(g, h, i)
    if not abs(det) > DET_RTOL * bound:
        raise SingularMatrixError(det, which)

    r = 1.0 / det
    if out is None:
        out = np.empty((3, 3))
    out[0, 0] = c00 * r
    out[0, 1] = (c * h - b * i) * r
    out[0, 2] = (b * f - c * e) * r
    out[1, 0] = c01 * r
    out[1, 1] = (a * i - c * g) * r
    out[1, 2] = (c * d - a * f) * r
    out[2, 0] = c02 * r
    out[2, 1] = (b * g - a * h) * r
    out[2, 2] = (a * e - b * d) * r
    return out


def inv6_block(M: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """
    Invert a 6x6 matrix as a 2x2 grid of 3x3 blocks.

    With M = [[A, B], [C, D]] and Schur complement S = D - C A^-1 B, the
    inverse only needs inv3 of A and S plus 3x3 products.
    """
    A = M[:3, :3]
    B = M[:3, 3:]
    C = M[3:, :3]
    D = M[3:, 3:]

    A_inv = inv3(A, which="leading block")
    A_inv_B = A_inv @ B
    C_A_inv = C @ A_inv
    S_inv = inv3(D - C @ A_inv_B, which="schur complement")

    if out is None:
        out = np.empty((6, 6))
    upper_right = -(A_inv_B @ S_inv)
    out[:3, 3:] = upper_right
    out[3:, :3] = -(S_inv @ C_A_inv)
    out[3:, 3:] = S_inv
    out[:3, :3] = A_inv - upper_right @ C_A_inv
    return out


def sym_sandwich(A: np.ndarray, P: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """A P A^T for symmetric P; the upper triangle is computed and mirrored."""
    T = A @ P
    if out is None:
        out = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            v = T[i, 0] * A[j, 0] + T[i, 1] * A[j, 1] + T[i, 2] * A[j, 2]
            out[i, j] = v
            out[j, i] = v
    return out
