"""Shared Chernoff kernel for the no-CSI good-region achievability bounds.

The known-K_a bound and the unknown-K_a (estimator + MAP decoder) bound use
the same per-sample structure: Gaussian codeword matrices split into
transmitted / surviving / false-alarm column groups, the Hermitian forms
F = I + A A^H built from them, and a per-sample minimization over Chernoff
variables (u, r) of

    L r n nu + b_{u,r} + L (u ln|F''| - r ln|F| - u ln|F'| + r w ln|F1| - ln|B|),

with B = (1+r) I - u F''^{-1} F + u F'^{-1} F - r w F1^{-1} F.  With the
known-K_a split (no S1,1 / S2,1 groups) F'' = F and the exponent reduces to
the (u - r) ln|F| form.  Everything is evaluated on the column span of the
sampled codewords (dimension d = min(n, columns)); on the orthogonal
complement B acts as the scalar 1 + r (1 - w).

Samples are drawn at unit variance and scaled by sqrt(P') analytically, so a
power search reuses the same draws (common random numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import linalg, mc, optim
from .linalg import EIG_SLACK

__all__ = ["GrPrep", "q1_bank", "q1_prep", "q1_log_mean", "region_tail_q2"]


@lru_cache(maxsize=32)
def q1_bank(seed: int, antithetic: bool, n: int, ka: int, fa: int,
            n_samples: int, threads: int):
    """Unit-variance codeword draws: ka transmitted plus fa false-alarm columns.

    Returned in the span-reduced basis: if ka + fa < n the QR factor R
    (d x (ka+fa), d = ka + fa) replaces the raw draws; R^H R = A^H A, so the
    Grams of every column subset are preserved and one bank serves all cells
    with at most fa false-alarm columns (slice the trailing block).
    """
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples), master_seed=seed,
                      antithetic=antithetic, threads=threads)
    cols = ka + fa

    def draw(rng):
        return mc.standard_cn(rng, n, cols)

    A = mc.draw_batch(cfg, ("gr_q1", ka, fa), n_samples, draw)
    if cols < n:
        A = np.linalg.qr(A, mode="r")
    A.setflags(write=False)
    return A


@dataclass(frozen=True)
class GrPrep:
    """Per-sample Hermitian forms shared by q1 and q2 at one (P', shapes).

    The Chernoff matrix B = (1+r) I - u S'' + u S' - r w S1 differs from
    (1 + r (1 - w)) I by a Hermitian perturbation whose range lies in the
    span of W = orth(F^{-1/2} [A_S1 | A_fa]) (rank at most md + fa), because
    each S-form is I plus a Woodbury correction generated by those columns.
    Only the compressed rho x rho blocks W^H S W are kept.
    """

    d: int
    rho: int
    ln_f: np.ndarray      # (S,)
    ln_f1: np.ndarray
    ln_fp: np.ndarray     # ln|F'|
    ln_fpp: np.ndarray    # ln|F''| (= ln|F| for the known-K_a split)
    m_prime: np.ndarray   # (S, rho, rho)  W^H (F^{1/2} F'^{-1} F^{1/2}) W
    m_one: np.ndarray     # (S, rho, rho)  compressed S1 form
    m_pp: np.ndarray | None  # compressed S'' form, None when F'' = F
    q2_eigs: np.ndarray   # (S, m) eigenvalues of A_S1^H F1^{-1} A_S1


def _key_float(x: float) -> str:
    return float(x).hex()


@lru_cache(maxsize=48)
def _q1_prep_cached(seed: int, antithetic: bool, n: int, ka: int, md: int,
                    fa: int, md1: int, fa1: int, n_samples: int, threads: int,
                    pprime_key: str, fa_bank: int) -> GrPrep:
    pprime = float.fromhex(pprime_key)
    A = q1_bank(seed, antithetic, n, ka, fa_bank, n_samples, threads)
    A = A[:, :, :ka + fa]
    A = math.sqrt(pprime) * A
    S, d = A.shape[0], A.shape[1]
    eye = np.eye(d)
    # column groups: [survivors | S1,2 | S1,1 | S2 (first fa1 form S2,1)]
    a_ka = A[:, :, :ka]
    a_surv = A[:, :, :ka - md]
    a_s1 = A[:, :, ka - md:ka]
    a_fa = A[:, :, ka:]
    aH = lambda M: np.conj(np.swapaxes(M, -1, -2))
    F = eye + a_ka @ aH(a_ka)
    F1 = eye + a_surv @ aH(a_surv)
    Fp = F1 + a_fa @ aH(a_fa)
    ln_f = linalg.logdet_hpd(F)
    ln_f1 = linalg.logdet_hpd(F1)
    ln_fp = linalg.logdet_hpd(Fp)
    # Cholesky-similar forms: eig(Fx^{-1} F) = eig(L^H Fx^{-1} L), F = L L^H,
    # and L^H F^{-1} L = I, so the rank-(md+fa) structure sits in W =
    # orth(L^{-1} [A_S1 | A_fa])
    Lc = np.linalg.cholesky(linalg.hermitize(F))
    gen = np.concatenate([a_s1, a_fa], axis=2)  # d x (md + fa)
    W = np.linalg.qr(np.linalg.solve(Lc, gen), mode="reduced")[0]
    FhW = Lc @ W
    m_prime = linalg.hermitize(aH(FhW) @ np.linalg.solve(Fp, FhW))
    m_one = linalg.hermitize(aH(FhW) @ np.linalg.solve(F1, FhW))
    if md1 > 0 or fa1 > 0:
        # F'' = I + A_{Ka \ S1,1} + A'_{S2,1}: survivors + S1,2 + S2,1 columns
        a_keep = np.concatenate([A[:, :, :ka - md1], a_fa[:, :, :fa1]], axis=2)
        Fpp = eye + a_keep @ aH(a_keep)
        ln_fpp = linalg.logdet_hpd(Fpp)
        m_pp = linalg.hermitize(aH(FhW) @ np.linalg.solve(Fpp, FhW))
    else:
        ln_fpp = ln_f
        m_pp = None
    # spectrum of F1^{-1} A_S1 A_S1^H: Gram on the smaller side
    if md > 0:
        X = np.linalg.solve(F1, a_s1)
        G = aH(a_s1) @ X if md <= d else a_s1 @ aH(X)
        q2_eigs = np.clip(np.linalg.eigvalsh(linalg.hermitize(G)), 0.0, None)
    else:
        q2_eigs = np.zeros((S, 0))
    return GrPrep(d=d, rho=W.shape[-1], ln_f=ln_f, ln_f1=ln_f1, ln_fp=ln_fp,
                  ln_fpp=ln_fpp, m_prime=m_prime, m_one=m_one, m_pp=m_pp,
                  q2_eigs=q2_eigs)


def q1_prep(cfg: mc.McConfig, n: int, ka: int, md: int, fa: int, md1: int,
            fa1: int, n_samples: int, pprime: float,
            fa_bank: int | None = None) -> GrPrep:
    """Per-sample forms; ``fa_bank >= fa`` shares one draw bank across cells."""
    fa_bank = fa if fa_bank is None else max(fa, fa_bank)
    return _q1_prep_cached(cfg.master_seed, cfg.antithetic, n, ka, md, fa,
                           md1, fa1, n_samples, cfg.threads,
                           _key_float(pprime), fa_bank)


def q1_log_mean(prep: GrPrep, n: int, L: int, omega: float, nu: float,
                b_weights=(0.0, 0.0, 0.0, 0.0), r_grid=None,
                golden_iters: int = 10, newton_iters: int = 2,
                fixed_ur=None, u_rule: str = "half1r") -> float:
    """log E[min_{u,r} exp{...}] over the prepared samples.

    ``b_weights`` = (b, b1, b', b'') enter as b_{u,r} = -u b'' + r b + u b'
    - r w b1 (all zero for the known-K_a bound).
    """
    b, b1, bp, bpp = b_weights
    S = prep.ln_f.shape[0]
    rho = prep.rho
    eye = np.eye(rho)
    comp = n - rho

    def phi(u_vec: np.ndarray, r_vec: np.ndarray) -> np.ndarray:
        u = u_vec.reshape(S, 1, 1)
        r = r_vec.reshape(S, 1, 1)
        base = 1.0 + r_vec * (1.0 - omega)
        # compressed B: the complement of span(W) carries eigenvalue `base`
        B = base.reshape(S, 1, 1) * eye \
            + u * (prep.m_prime - eye) \
            - (r * omega) * (prep.m_one - eye)
        if prep.m_pp is not None:
            B = B - u * (prep.m_pp - eye)
        lam = np.linalg.eigvalsh(linalg.hermitize(B))
        feasible = (lam[:, 0] > EIG_SLACK) & (base > EIG_SLACK)
        with np.errstate(invalid="ignore", divide="ignore"):
            ln_b = np.sum(np.log(np.maximum(lam, 1e-300)), axis=-1)
        if comp:
            ln_b = ln_b + comp * np.log1p(r_vec * (1.0 - omega))
        b_ur = -u_vec * bpp + r_vec * b + u_vec * bp - r_vec * omega * b1
        val = (L * r_vec * n * nu + b_ur
               + L * (u_vec * prep.ln_fpp - r_vec * prep.ln_f
                      - u_vec * prep.ln_fp + r_vec * omega * prep.ln_f1
                      - ln_b))
        return np.where(feasible, val, np.inf)

    if r_grid is None:
        r_grid = np.concatenate([[0.0], np.geomspace(1e-3, 10.0, 10)])
    if fixed_ur is not None:
        u0, r0 = fixed_ur
        best = phi(np.full(S, float(u0)), np.full(S, float(r0)))
        if not np.all(np.isfinite(best)):
            raise ValueError("fixed (u, r) is infeasible for some samples")
        return mc.log_mean_from_values(best).mean
    U0_GRID = np.concatenate([np.linspace(0.0, 2.0, 13),
                              np.geomspace(2.5, 12.0, 5)])
    if u_rule == "full2d":
        best = np.full(S, np.inf)
        for u0 in np.linspace(0.0, 2.0, 17):
            vals = optim.minimize_1d(lambda r: phi(np.full(S, float(u0)), r),
                                     S, r_grid, golden_iters=8)
            best = np.minimum(best, vals)
    elif u_rule == "u0":
        # no-misdetection cells: every r-term hurts, search u along r = 0
        best = optim.minimize_1d(lambda u: phi(u, np.zeros(S)), S, U0_GRID,
                                 golden_iters=golden_iters)
    else:
        f = lambda r: phi(0.5 * (1.0 + r), r)
        best = optim.minimize_1d(f, S, r_grid, golden_iters=golden_iters,
                                 newton_iters=newton_iters)
        if u_rule == "half1r+u0":
            # false-alarm-dominated cells want u near 1 with r near 0, which
            # the u = (1+r)/2 path cannot reach without paying exp(L r n nu):
            # sweep u along r = 0 as well (region slack drops out there)
            vals = optim.minimize_1d(lambda u: phi(u, np.zeros(S)), S,
                                     U0_GRID, golden_iters=golden_iters)
            best = np.minimum(best, vals)
    # (u, r) = (0, 0) gives B = I: always feasible, exponent b_{0,0} = 0
    best = np.where(np.isfinite(best), best, 0.0)
    return mc.log_mean_from_values(best).mean


def region_tail_q2(prep: GrPrep, n: int, L: int, omega: float, nu: float,
                   delta_grid: np.ndarray, b: float = 0.0, b1: float = 0.0):
    """E-term + chi-square tail of the region-complement bound, minimized
    over the delta grid (omega in (0, 1]); the leading binomial factor is the
    caller's.

    The gamma argument follows the prior-weighted form
    prod lam_i^{-1/m} (n L (1+delta)(1-w) - w (L ln|F1| - b1) + L ln|F| - b
    - n L nu) / w with b = b1 = 0 recovering the known-K_a expression.
    """
    eigs = prep.q2_eigs
    m = eigs.shape[1]
    if m == 0:
        raise ValueError("q2 tail needs a nonempty misdetected set")
    log_gm = np.sum(np.log(np.maximum(eigs, 1e-300)), axis=-1) / m  # (S,)
    gm_inv = np.exp(-log_gm)
    delta = np.asarray(delta_grid, dtype=float).reshape(-1, 1)
    core = (n * L * (1.0 + delta) * (1.0 - omega)
            - omega * (L * prep.ln_f1 - b1)
            + L * prep.ln_f - b - n * L * nu) / omega
    arg = gm_inv * core
    eterm = np.mean(linalg.reg_gamma_vec(L * m, arg), axis=-1)
    tail = linalg.reg_gamma_upper_vec(n * L, n * L * (1.0 + delta_grid))
    return eterm + tail


def clear_caches() -> None:
    q1_bank.cache_clear()
    _q1_prep_cached.cache_clear()
