"""Orthogonal projectors and the coordinate splitting used by every estimator.

All routines project onto (or off) the column span of a matrix, with rank
decided by a column-pivoted QR factorization at a relative tolerance: columns
whose revealed diagonal magnitude falls below ``tol`` times the largest are
dropped.  A zero matrix therefore yields the empty span, which keeps the
single-feature and "remove the only column" cases total.

Everything here is a pure function of its inputs and safe to call from any
number of threads.
"""

import numpy as np
import scipy.linalg

from .errors import InvalidInputError

DEFAULT_RANK_TOL = 1e-10


def _check_matrix(M, name="M"):
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d array, got ndim={M.ndim}")
    if M.size and not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return M


def orthonormal_span(M, tol=DEFAULT_RANK_TOL):
    """Orthonormal basis Q (d x r) of the numerical column span of M.

    Rank r is revealed by column-pivoted QR: pivots with |R[i,i]| below
    tol*|R[0,0]| are discarded.  Returns a (d, 0) array for a zero matrix.
    """
    M = _check_matrix(M)
    d, m = M.shape
    if m == 0 or not np.any(M):
        return np.zeros((d, 0))
    Q, R, _ = scipy.linalg.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros((d, 0))
    rank = int(np.sum(diag > tol * diag[0]))
    return Q[:, :rank]


class Projector:
    """Orthogonal projector onto a subspace of R^d, held in factored form.

    The dense d x d matrix is only materialized on demand (``.matrix``), so
    moderate dimensions stay cheap; applying the projector always goes
    through the orthonormal factor Q.
    """

    def __init__(self, Q):
        self.Q = np.asarray(Q, dtype=float)
        self.dim = self.Q.shape[0]
        self.rank = self.Q.shape[1]

    @property
    def matrix(self):
        return self.Q @ self.Q.T

    def apply(self, x):
        """Project x onto the subspace."""
        x = np.asarray(x, dtype=float)
        return self.Q @ (self.Q.T @ x)

    def apply_complement(self, x):
        """Project x onto the orthogonal complement."""
        x = np.asarray(x, dtype=float)
        return x - self.Q @ (self.Q.T @ x)


def orthogonal_projector(M, tol=DEFAULT_RANK_TOL):
    """Orthogonal projector onto the column span of M (d x m, m >= 1)."""
    return Projector(orthonormal_span(M, tol))


def project_complement(M, x, tol=DEFAULT_RANK_TOL):
    """Component of x orthogonal to the column span of M."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidInputError("x contains non-finite entries")
    Q = orthonormal_span(M, tol)
    if Q.shape[1] == 0:
        return x.copy()
    return x - Q @ (Q.T @ x)


def complement_split(jac_g, grad_u, j, tol=DEFAULT_RANK_TOL):
    """Deflate feature j's companion gradients out of (feature j, function) gradients.

    Given the d x m feature-gradient matrix and the function gradient, removes
    the span of the other m-1 feature gradients from both the j-th feature
    gradient and the function gradient.  Feature indices are 1-based.

    Returns
    -------
    (w, v) : pair of d-vectors, the deflated feature gradient and the
        deflated function gradient.
    """
    J = _check_matrix(jac_g, "jac_g")
    grad_u = np.asarray(grad_u, dtype=float)
    m = J.shape[1]
    if not 1 <= j <= m:
        raise InvalidInputError(f"feature index j={j} out of range 1..{m}")
    others = np.delete(J, j - 1, axis=1)
    Q = orthonormal_span(others, tol)
    gj = J[:, j - 1]
    if Q.shape[1] == 0:
        return gj.copy(), grad_u.copy()
    w = gj - Q @ (Q.T @ gj)
    v = grad_u - Q @ (Q.T @ grad_u)
    return w, v


def smallest_singular_value(M):
    """sigma_m(M) for a d x m matrix with d >= m."""
    M = _check_matrix(M)
    d, m = M.shape
    if d < m:
        raise InvalidInputError(f"need d >= m, got shape {M.shape}")
    return float(np.linalg.svd(M, compute_uv=False)[-1])
