"""Batched Hermitian linear algebra used by the bound engines.

All heavy evaluation stacks samples along axis 0 and relies on numpy's
batched cholesky/eigvalsh.  The scalar reference implementations of the
special functions live in :mod:`ramimo.numerics`; the vectorized wrappers
here call scipy's C implementations (cross-checked against the references
in the test suite) with the paper's convention gamma(., x <= 0) = 0.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.special as sps

#: slack used when checking eigenvalue feasibility constraints, to absorb
#: roundoff without ever accepting a genuinely infeasible Chernoff point.
EIG_SLACK = 1e-9


def reg_gamma_vec(a, x):
    """Vectorized regularized lower incomplete gamma with gamma(., x<=0) = 0."""
    x = np.asarray(x, dtype=float)
    return sps.gammainc(a, np.clip(x, 0.0, None))


def reg_gamma_upper_vec(a, x):
    x = np.asarray(x, dtype=float)
    return sps.gammaincc(a, np.clip(x, 0.0, None))


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def logdet_hpd(A: np.ndarray) -> np.ndarray:
    """Batched ln det of Hermitian positive definite matrices via Cholesky."""
    L = np.linalg.cholesky(A)
    diag = np.real(np.diagonal(L, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1)


def solve_hpd(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """A^{-1} B for Hermitian positive definite A (non-batched)."""
    c, low = sla.cho_factor(A, lower=True)
    return sla.cho_solve((c, low), B)


def sqrt_hpd(A: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix via eigendecomposition."""
    w, U = np.linalg.eigh(A)
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)) @ np.conj(U.T)


def gram(A: np.ndarray) -> np.ndarray:
    """Batched A^H A."""
    return np.conj(np.swapaxes(A, -1, -2)) @ A


def logdet_i_plus_gram_batched(A: np.ndarray, scale=1.0) -> np.ndarray:
    """Batched ln|I + scale * A A^H| computed on the smaller Gram side."""
    s, n, k = A.shape
    if k <= n:
        G = np.conj(np.swapaxes(A, -1, -2)) @ A
    else:
        G = A @ np.conj(np.swapaxes(A, -1, -2))
    m = G.shape[-1]
    scale = np.asarray(scale, dtype=float).reshape((-1,) + (1, 1))
    return logdet_hpd(np.eye(m) + scale * G)
