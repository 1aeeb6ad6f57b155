"""Special functions, complex-Hermitian linear algebra, and random samplers.

Everything downstream (region bounds, Chernoff exponents, converse
conditions) is expressed through the primitives in this module: regularized
incomplete gamma functions, chi-square cdf/quantile, digamma, log-determinants
of ``I + A A^H`` computed on the cheaper Gram side, Hermitian spectra, real
2p x 2p embeddings of complex matrices, and reproducible complex-Gaussian /
sphere samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "reg_lower_gamma",
    "reg_upper_gamma",
    "chi2_cdf",
    "chi2_sf",
    "chi2_quantile",
    "digamma",
    "log_det_i_plus_aah",
    "SpectralSummary",
    "hermitian_spectrum",
    "similar_spectrum_f1inv",
    "real_embed",
    "real_embed_log_det",
    "sample_cn_matrix",
    "sample_sphere_columns",
    "log_binom",
    "binom_pmf",
    "log_binom_pmf",
]

_FPMIN = 1e-300


def _gamma_series(a: float, x: float, tol: float = 1e-14) -> float:
    """Lower regularized gamma P(a, x) by series; requires x < a + 1."""
    max_iter = max(500, int(20.0 * math.sqrt(a)) + 50)
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol:
            break
    log_pref = a * math.log(x) - x - math.lgamma(a)
    return total * math.exp(log_pref)


def _gamma_cf_core(a: float, x: float, tol: float = 1e-14) -> float:
    """Lentz continued fraction for Q(a, x) without the exp prefactor."""
    max_iter = max(500, int(20.0 * math.sqrt(a)) + 50)
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            break
    return h


def _gamma_cf(a: float, x: float, tol: float = 1e-14) -> float:
    """Upper regularized gamma Q(a, x) by continued fraction; x >= a + 1."""
    log_pref = a * math.log(x) - x - math.lgamma(a)
    return _gamma_cf_core(a, x, tol) * math.exp(log_pref)


def log_reg_upper_gamma(a: float, x: float) -> float:
    """log Q(a, x), accurate deep in the tail where Q underflows."""
    if a <= 0:
        raise ValueError(f"log_reg_upper_gamma requires a > 0, got a={a}")
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return math.log1p(-_gamma_series(a, x))
    log_pref = a * math.log(x) - x - math.lgamma(a)
    return math.log(_gamma_cf_core(a, x)) + log_pref


def reg_lower_gamma(a: float, x: float) -> float:
    """Regularized lower incomplete gamma function gamma(a, x) / Gamma(a).

    Uses the series representation for x < a + 1 and the continued fraction
    otherwise.  Follows the convention gamma(., x) = 0 for x <= 0.
    """
    if a <= 0:
        raise ValueError(f"reg_lower_gamma requires a > 0, got a={a}")
    if not math.isfinite(a):
        raise ValueError("reg_lower_gamma requires finite a")
    if math.isinf(x):
        return 1.0 if x > 0 else 0.0
    if x <= 0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return min(1.0, max(0.0, 1.0 - _gamma_cf(a, x)))


def reg_upper_gamma(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), accurate in the tail."""
    if a <= 0:
        raise ValueError(f"reg_upper_gamma requires a > 0, got a={a}")
    if math.isinf(x):
        return 0.0 if x > 0 else 1.0
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_series(a, x)))
    return min(1.0, _gamma_cf(a, x))


def chi2_cdf(dof: int, x: float) -> float:
    """CDF of a central chi-square with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError(f"chi2_cdf requires dof >= 1, got {dof}")
    if x <= 0:
        return 0.0
    return reg_lower_gamma(dof / 2.0, x / 2.0)


def chi2_sf(dof: int, x: float) -> float:
    """Survival function P[chi2(dof) >= x], accurate for large x."""
    if dof < 1:
        raise ValueError(f"chi2_sf requires dof >= 1, got {dof}")
    if x <= 0:
        return 1.0
    return reg_upper_gamma(dof / 2.0, x / 2.0)


def chi2_quantile(dof: int, p: float) -> float:
    """Inverse chi-square CDF; satisfies chi2_cdf(dof, chi2_quantile(dof, p)) = p."""
    if dof < 1:
        raise ValueError(f"chi2_quantile requires dof >= 1, got {dof}")
    if not 0.0 <= p < 1.0:
        raise ValueError(f"chi2_quantile requires 0 <= p < 1, got {p}")
    if p == 0.0:
        return 0.0
    lo, hi = 0.0, float(dof)
    while chi2_cdf(dof, hi) < p:
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            break
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi2_cdf(dof, mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def digamma(x: float) -> float:
    """Euler's digamma function for x > 0 (recurrence + asymptotic series)."""
    if x <= 0:
        raise ValueError(f"digamma requires x > 0, got {x}")
    val = 0.0
    while x < 10.0:
        val -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # asymptotic series through the x^{-10} Bernoulli term
    tail = inv2 * (1.0 / 12.0
                   - inv2 * (1.0 / 120.0
                             - inv2 * (1.0 / 252.0
                                       - inv2 * (1.0 / 240.0
                                                 - inv2 * (1.0 / 132.0)))))
    return val + math.log(x) - 0.5 * inv - tail


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a.view(np.float64) if np.iscomplexobj(a) else a)):
        raise ValueError(f"{name} contains non-finite entries")


def log_det_i_plus_aah(A: np.ndarray) -> float:
    """ln|I + A A^H| via the Gram matrix of the smaller dimension (Sylvester)."""
    A = np.asarray(A)
    if A.ndim != 2:
        raise ValueError("expected a matrix")
    _require_finite(A, "A")
    n, k = A.shape
    if n == 0 or k == 0:
        return 0.0
    if k <= n:
        G = A.conj().T @ A
    else:
        G = A @ A.conj().T
    m = G.shape[0]
    G = G + np.eye(m)
    L = np.linalg.cholesky(G)
    return float(2.0 * np.sum(np.log(np.real(np.diagonal(L)))))


@dataclass(frozen=True)
class SpectralSummary:
    """Eigenvalues (descending) of a Hermitian form plus cached scalars."""

    eigenvalues: np.ndarray
    log_det: float
    min_eig: float
    max_eig: float


def _summary_from_eigs(eigs: np.ndarray) -> SpectralSummary:
    eigs = np.sort(np.real(eigs))[::-1]
    if eigs.size and np.min(eigs) > 0:
        log_det = float(np.sum(np.log(eigs)))
    else:
        log_det = -math.inf
    mn = float(eigs[-1]) if eigs.size else 0.0
    mx = float(eigs[0]) if eigs.size else 0.0
    return SpectralSummary(eigenvalues=eigs, log_det=log_det, min_eig=mn, max_eig=mx)


def hermitian_spectrum(A: np.ndarray, tol: float = 1e-10) -> SpectralSummary:
    """Eigenvalues of a Hermitian matrix, sorted descending.

    Raises if ``A`` deviates from A = A^H by more than ``tol`` relative to its
    Frobenius norm.
    """
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    _require_finite(A, "A")
    scale = max(1.0, float(np.linalg.norm(A)))
    if float(np.linalg.norm(A - A.conj().T)) > tol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    eigs = np.linalg.eigvalsh(A)
    return _summary_from_eigs(eigs)


def similar_spectrum_f1inv(F1: np.ndarray, G: np.ndarray) -> SpectralSummary:
    """Nonzero eigenvalues of F1^{-1} G G^H via the Hermitian similar form.

    F1 must be Hermitian positive definite.  Exactly min(n, cols(G))
    eigenvalues are reported (nonnegative, descending); they coincide with the
    spectrum of F1^{-1/2} G G^H F1^{-1/2} restricted to the column span of G.
    """
    F1 = np.asarray(F1)
    G = np.asarray(G)
    if F1.ndim != 2 or F1.shape[0] != F1.shape[1]:
        raise ValueError("F1 must be square")
    n = F1.shape[0]
    if G.ndim != 2 or G.shape[0] != n:
        raise ValueError("G must have the same row dimension as F1")
    try:
        L = np.linalg.cholesky(F1)
    except np.linalg.LinAlgError as exc:
        raise ValueError("F1 is not positive definite") from exc
    import scipy.linalg as sla

    X = sla.solve_triangular(L, G.astype(complex), lower=True)
    k = G.shape[1]
    if k == 0:
        return _summary_from_eigs(np.zeros(0))
    if k <= n:
        M = X.conj().T @ X
    else:
        M = X @ X.conj().T
    eigs = np.linalg.eigvalsh(M)
    eigs = np.clip(eigs, 0.0, None)
    return _summary_from_eigs(eigs)


def real_embed(C: np.ndarray) -> np.ndarray:
    """Real 2p x 2p embedding [[Re C, -Im C], [Im C, Re C]] of a complex matrix."""
    C = np.asarray(C, dtype=complex)
    return np.block([[C.real, -C.imag], [C.imag, C.real]])


def real_embed_log_det(D: np.ndarray) -> float:
    """ln det of a real 2p x 2p embedded matrix; -inf for singular/nonpositive det.

    When D is the embedding of a complex matrix C this equals
    2 Re(ln det_C(C)).
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError("expected a square real matrix")
    _require_finite(D, "D")
    sign, logdet = np.linalg.slogdet(D)
    if sign <= 0:
        return -math.inf
    return float(logdet)


def sample_cn_matrix(rng: np.random.Generator, rows: int, cols: int,
                     variance: float) -> np.ndarray:
    """i.i.d. circularly-symmetric complex Gaussian matrix, per-entry variance ``variance``."""
    if variance <= 0:
        raise ValueError(f"variance must be positive, got {variance}")
    scale = math.sqrt(variance / 2.0)
    re = rng.standard_normal((rows, cols))
    im = rng.standard_normal((rows, cols))
    return scale * (re + 1j * im)


def sample_sphere_columns(rng: np.random.Generator, n_p: int, count: int,
                          radius_sq: float) -> np.ndarray:
    """Columns uniform on the complex n_p-sphere with squared norm exactly ``radius_sq``."""
    if n_p < 1:
        raise ValueError("n_p must be >= 1")
    if radius_sq <= 0:
        raise ValueError("radius_sq must be positive")
    Z = sample_cn_matrix(rng, n_p, count, 1.0)
    norms = np.linalg.norm(Z, axis=0)
    return Z * (math.sqrt(radius_sq) / norms)


def log_binom(n: int, k: int) -> float:
    """log of the binomial coefficient C(n, k)."""
    if k < 0 or k > n:
        raise ValueError(f"k={k} out of range for n={n}")
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_binom_pmf(K: int, p_a: float, k: int) -> float:
    """log Binom(K, p_a) pmf at k; -inf where the mass is exactly zero."""
    if k < 0 or k > K:
        raise ValueError(f"k={k} out of range for K={K}")
    if not 0.0 <= p_a <= 1.0:
        raise ValueError(f"p_a must lie in [0, 1], got {p_a}")
    if p_a == 0.0:
        return 0.0 if k == 0 else -math.inf
    if p_a == 1.0:
        return 0.0 if k == K else -math.inf
    return log_binom(K, k) + k * math.log(p_a) + (K - k) * math.log1p(-p_a)


def binom_pmf(K: int, p_a: float, k: int) -> float:
    """Binom(K, p_a) pmf at k."""
    lp = log_binom_pmf(K, p_a, k)
    return 0.0 if lp == -math.inf else math.exp(lp)
