"""Achievability and converse bounds with no CSI and a known number of
active users.

The decoder is the noncoherent ML rule
g(Y, c) = L ln|I + A A^H| + tr((I + A A^H)^{-1} Y Y^H); the achievability
bound is the good-region bound with prefactor C_t = C(Ka,t) C(K-Ka+t,t) M^t.
The converse combines a Fano bound under i.i.d. Gaussian codebooks with a
single-user chi-square meta-converse that holds for all codes.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.special as sps

from . import goodregion, linalg, mc, model
from .csir import DELTA_GRID, GoodRegionParams, default_region_grid
from .model import BoundResult, PowerPoint, SystemParams
from .numerics import digamma, log_binom, log_reg_upper_gamma

__all__ = [
    "ml_metric_nocsi",
    "q1t_nocsi",
    "q2t_nocsi",
    "pupe_nocsi_upper",
    "nocsi_single_user_log_m_max",
    "nocsi_converse_min_power",
]

LN2 = math.log(2.0)


def ml_metric_nocsi(Y: np.ndarray, A_decoded: np.ndarray) -> float:
    """Noncoherent ML decoding metric L ln|F| + tr(F^{-1} Y Y^H), F = I + A A^H."""
    Y = np.asarray(Y, dtype=complex)
    A = np.asarray(A_decoded, dtype=complex)
    n, L = Y.shape
    F = np.eye(n) + A @ A.conj().T
    return float(L * np.linalg.slogdet(F)[1]
                 + np.real(np.trace(linalg.solve_hpd(F, Y @ Y.conj().T))))


def _log_c_t(sp: SystemParams, t: int) -> float:
    ka = sp.ka
    return (log_binom(ka, t) + log_binom(sp.K - ka + t, t) + t * sp.ln_m)


def q1t_nocsi(sp: SystemParams, pp: PowerPoint, t: int, gr: GoodRegionParams,
              cfg: mc.McConfig, *, n_samples: int | None = None,
              fixed_ur=None) -> float:
    """log of C_t E[min_{u,r} exp{L r n nu + L((u-r)ln|F| - u ln|F'| +
    r w ln|F1| - ln|B|)}]."""
    if not 1 <= t <= sp.ka:
        raise ValueError(f"t={t} outside [1, K_a={sp.ka}]")
    n_samples = cfg.n_final if n_samples is None else n_samples
    prep = goodregion.q1_prep(cfg, sp.n, sp.ka, t, t, 0, 0, n_samples,
                              pp.Pprime)
    log_mean = goodregion.q1_log_mean(
        prep, sp.n, sp.L, gr.omega, gr.nu, r_grid=gr.r_grid(),
        golden_iters=gr.golden_iters, newton_iters=gr.newton_iters,
        fixed_ur=fixed_ur, u_rule=gr.u_rule)
    return _log_c_t(sp, t) + log_mean


def q2t_nocsi(sp: SystemParams, pp: PowerPoint, t: int, omega: float,
              nu: float, cfg: mc.McConfig, *, n_samples: int | None = None,
              delta_grid=None) -> float:
    """Region-complement bound; omega = 0 uses the closed chi-square form."""
    if not 1 <= t <= sp.ka:
        raise ValueError(f"t={t} outside [1, K_a={sp.ka}]")
    n, L = sp.n, sp.L
    if omega == 0.0:
        return float(linalg.reg_gamma_upper_vec(n * L, n * L * nu))
    n_samples = cfg.n_final if n_samples is None else n_samples
    delta_grid = DELTA_GRID if delta_grid is None else np.asarray(delta_grid)
    prep = goodregion.q1_prep(cfg, n, sp.ka, t, t, 0, 0, n_samples, pp.Pprime)
    vals = goodregion.region_tail_q2(prep, n, L, omega, nu, delta_grid)
    lbin = log_binom(sp.ka, t)
    return float(math.exp(min(lbin, 700.0)) * np.min(vals))


def _p_t(sp, pp, t, grid, cfg, n_samples, gr_template, max_q1=10, hint=None):
    template = gr_template or GoodRegionParams(0.0, 0.0)
    entries = []
    for omega, nu in grid:
        q2 = q2t_nocsi(sp, pp, t, omega, nu, cfg, n_samples=n_samples)
        entries.append((q2, omega, nu))
    if hint is not None:
        hint = tuple(hint)
        entries.sort(key=lambda e: ((e[1], e[2]) != hint, e[0]))
    else:
        entries.sort(key=lambda e: e[0])
    best = math.inf
    arg = {"omega": None, "nu": None}
    spent = 0
    for q2, omega, nu in entries:
        if max_q1 is not None and spent >= max_q1:
            break
        if q2 >= min(1.0, best):
            continue
        gr = GoodRegionParams(omega, nu, u_rule=template.u_rule,
                              r_max=template.r_max,
                              r_grid_size=template.r_grid_size,
                              golden_iters=template.golden_iters,
                              newton_iters=template.newton_iters)
        lq1 = q1t_nocsi(sp, pp, t, gr, cfg, n_samples=n_samples)
        spent += 1
        total = math.exp(min(lq1, 700.0)) + q2
        if total < best:
            best = total
            arg = {"omega": omega, "nu": nu}
    return min(1.0, best), arg


def pupe_nocsi_upper(sp: SystemParams, pp: PowerPoint, cfg: mc.McConfig, *,
                     gr_grid=None, n_samples: int | None = None,
                     eps_hint: float | None = None, t_max: int | None = None,
                     gr_template: GoodRegionParams | None = None,
                     stop_above: float | None = None,
                     max_q1: int | None = 10) -> BoundResult:
    """PUPE upper bound p0 + sum_t (t/Ka) min{1, p_t} at a fixed (P, P')."""
    ka = sp.ka
    if gr_grid is None:
        gr_grid = default_region_grid()
    p0 = model.p0_power_violation(sp, pp)
    total = p0
    per_t = []
    argmin = {"Pprime": pp.Pprime}
    tiny_run = 0
    truncated_at = None
    hint = None
    upper_t = ka if t_max is None else min(t_max, ka)
    for t in range(1, upper_t + 1):
        if stop_above is not None and total > stop_above:
            truncated_at = t - 1
            break
        p_t, arg_t = _p_t(sp, pp, t, gr_grid, cfg, n_samples, gr_template,
                          max_q1=max_q1, hint=hint)
        if arg_t.get("omega") is not None:
            hint = (arg_t["omega"], arg_t["nu"])
        term = (t / ka) * min(1.0, p_t)
        per_t.append((t, term))
        total += term
        argmin.setdefault("per_t", {})[t] = arg_t
        tail = (ka * (ka + 1) / 2 - t * (t + 1) / 2) / ka
        tiny_run = tiny_run + 1 if term < 1e-12 else 0
        if eps_hint is not None and tail < 1e-4 * eps_hint:
            truncated_at = t
            break
        if tiny_run >= 5:
            truncated_at = t
            break
    flags = {"p0": p0}
    if truncated_at is not None:
        flags["t_truncated_at"] = truncated_at
    return BoundResult(value=total, per_t_terms=per_t, argmin_params=argmin,
                       p=pp.P, flags=flags)


# ---------------------------------------------------------------------------
# converse
# ---------------------------------------------------------------------------

def _log_m_capacity_term(count: float, x: float) -> float:
    """count * log2(1 + x / count), stable when count is astronomically large."""
    if count <= 0:
        return 0.0
    ratio = x / count
    if ratio < 1e-8:
        return x / LN2 * (1.0 - 0.5 * ratio)
    return count * math.log2(1.0 + ratio)


def nocsi_fano_capacity(n: int, ka: int, J: int, P: float) -> float:
    """C = min{n log2(1 + Ka P), Ka M log2(1 + n P / M)} in bits."""
    m_count = ka * 2.0 ** min(J, 1020)
    return min(n * math.log2(1.0 + ka * P),
               _log_m_capacity_term(m_count, ka * n * P))


def nocsi_logdet_lower_bits(n: int, ka: int, P: float) -> float:
    """Digamma lower bound on E[log2 |I_Ka + X^H X|], X n x Ka i.i.d. CN(0, P)."""
    if ka <= n:
        return sum(digamma(n - i) * math.log2(math.e)
                   + math.log2(P + 1.0 / (n - i)) for i in range(ka))
    return sum(digamma(ka - i) * math.log2(math.e)
               + math.log2(P + 1.0 / (ka - i)) for i in range(n))


@lru_cache(maxsize=16)
def _wishart_eig_bank(seed: int, n: int, ka: int, n_samples: int):
    """Eigenvalues of X0^H X0 for unit-variance X0 of shape n x ka."""
    eigs = np.empty((n_samples, min(n, ka)))
    for i in range(n_samples):
        rng = mc.stream_rng(seed, ("nocsi_conv", n, ka), i)
        X = mc.standard_cn(rng, n, ka)
        G = X.conj().T @ X if ka <= n else X @ X.conj().T
        eigs[i] = np.linalg.eigvalsh(linalg.hermitize(G))
    eigs.setflags(write=False)
    return eigs


def nocsi_logdet_mc_bits(n: int, ka: int, P: float, seed: int,
                         n_samples: int) -> float:
    eigs = _wishart_eig_bank(seed, n, ka, n_samples)
    return float(np.mean(np.sum(np.log2(1.0 + P * eigs), axis=-1)))


def nocsi_single_user_log_m_max(n: int, P: float, L: int, eps: float) -> float:
    """ln of the single-user codebook-size bound 1 / P[chi2(2L) >= (1+(n+1)P) r].

    r solves P[chi2(2L) <= r] = eps.  Holds for every code under the maximum
    power constraint; the n -> n+1 blocklength shift absorbs it into an equal
    power constraint.
    """
    r = 2.0 * float(sps.gammaincinv(L, eps))
    x = (1.0 + (n + 1) * P) * r
    return -log_reg_upper_gamma(L, x / 2.0)


def nocsi_converse_min_power(sp: SystemParams, eps: float,
                             cfg: mc.McConfig | None = None, *,
                             mode: str = "closed",
                             eb_db_range=(-20.0, 60.0),
                             tol_db: float = 0.01,
                             n_samples: int | None = None) -> BoundResult:
    """Min P satisfying both the Fano condition (closed digamma form, or the
    tighter MC form) and the single-user chi-square bound; returns the larger
    of the two thresholds."""
    if not 0.0 < eps < 1.0 - 2.0 ** (-sp.J):
        raise ValueError("eps must lie in (0, 1 - 2^-J)")
    if mode not in ("closed", "mc"):
        raise ValueError(f"unknown mode {mode!r}")
    ka, n, L, J = sp.ka, sp.n, sp.L, sp.J
    b1 = (1.0 - eps) * J - model.binary_entropy_bits(eps)
    if mode == "mc":
        cfg = cfg or mc.McConfig()
        ns = n_samples if n_samples is not None else min(cfg.n_search, 500)

    def fano_ok(P: float) -> bool:
        if b1 <= 0:
            return True
        C = nocsi_fano_capacity(n, ka, J, P)
        if mode == "mc":
            T = nocsi_logdet_mc_bits(n, ka, P, cfg.master_seed, ns)
        else:
            T = nocsi_logdet_lower_bits(n, ka, P)
        return b1 <= (L / ka) * (C - T)

    target_log_m = J * LN2

    def single_user_ok(P: float) -> bool:
        return target_log_m <= nocsi_single_user_log_m_max(n, P, L, eps)

    P_of = lambda db: sp.J * 10 ** (db / 10.0) / sp.n
    lo_db, hi_db = eb_db_range
    flags = {}
    thresholds = {}
    for name, ok in (("fano", fano_ok), ("single_user", single_user_ok)):
        if ok(P_of(lo_db)):
            thresholds[name] = lo_db
            flags[f"{name}_at_floor"] = True
            continue
        if not ok(P_of(hi_db)):
            thresholds[name] = math.inf
            flags[f"{name}_infeasible"] = True
            continue
        a, b = lo_db, hi_db
        while b - a > tol_db:
            mid = 0.5 * (a + b)
            if ok(P_of(mid)):
                b = mid
            else:
                a = mid
        thresholds[name] = b
    best_db = max(thresholds.values())
    if math.isinf(best_db):
        return BoundResult(value=math.inf, feasible=False, flags=flags,
                           argmin_params={"thresholds": thresholds})
    P = P_of(best_db)
    return BoundResult(value=model.eb_db(sp, P), p=P, eb_db=model.eb_db(sp, P),
                       argmin_params={"binding": max(thresholds, key=thresholds.get),
                                      "mode": mode, "thresholds_db": thresholds},
                       flags=flags)
