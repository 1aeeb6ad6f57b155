"""Achievability and converse bounds with channel state information at the
receiver (CSIR) and a known number of active users.

Achievability combines two upper bounds on the probability of exactly t
misdecoded users: a Fano-style "good region" bound q1 + q2 parameterized by
(omega, nu) with per-sample Chernoff variables (u, r), and a Gallager
rho-trick bound.  The converse is a Fano bound on the mutual information of
the coherent MIMO channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import linalg, mc, model, optim
from .linalg import EIG_SLACK, reg_gamma_vec
from .model import BoundResult, PowerPoint, SystemParams
from .numerics import log_binom

__all__ = [
    "GoodRegionParams",
    "GallagerParams",
    "default_region_grid",
    "q1t_csir",
    "q2t_csir",
    "p1t_csir",
    "p2t_gallager",
    "p2t_knownset",
    "p2t_knownset_closed",
    "pupe_csir_upper",
    "csir_converse_min_power",
]

LN2 = math.log(2.0)

#: default grids for the region tail optimizations; the tail terms saturate
#: like chi-square large deviations, so coarse spacing past 1 suffices.
DELTA_GRID = np.concatenate([np.arange(0.0, 1.0001, 0.02), [1.5, 2.0, 3.0]])
ETA_GRID = DELTA_GRID
#: coarser grids for the 2-D (eta, delta) search of the t < n CSIR tail
DELTA_GRID_2D = np.concatenate([np.arange(0.0, 0.5001, 0.05),
                                [0.75, 1.0, 1.5, 2.0, 3.0]])
ETA_GRID_2D = DELTA_GRID_2D


@dataclass(frozen=True)
class GoodRegionParams:
    """Region parameters (omega, nu) plus the inner Chernoff search policy.

    ``u_rule`` "half1r" pins u = (1+r)/2 (optimal at omega = 0) and searches r
    by grid + golden section on [0, r_max]; "full2d" searches a 2-D (u, r)
    grid.
    """

    omega: float
    nu: float
    u_rule: str = "half1r"
    r_max: float = 10.0
    r_grid_size: int = 10
    golden_iters: int = 14
    newton_iters: int = 0

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("omega must lie in [0, 1]")
        if self.nu < 0.0:
            raise ValueError("nu must be >= 0")
        if self.u_rule not in ("half1r", "full2d"):
            raise ValueError(f"unknown u_rule {self.u_rule!r}")

    def r_grid(self) -> np.ndarray:
        return np.concatenate([[0.0], np.geomspace(1e-3, self.r_max,
                                                   self.r_grid_size)])


@dataclass(frozen=True)
class GallagerParams:
    rho: float
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.beta < 0.0 or self.rho * self.beta >= 1.0:
            raise ValueError("need 0 <= rho * beta < 1")


def default_region_grid(omegas=None, nus=None) -> list:
    """(omega, nu) grid; defaults omega in {0, .05, ..., 1}, nu in {0, .05, ..., 3}."""
    if omegas is None:
        omegas = np.arange(0.0, 1.0001, 0.05)
    if nus is None:
        nus = np.arange(0.0, 3.0001, 0.05)
    return [(float(w), float(v)) for w in omegas for v in nus]


# ---------------------------------------------------------------------------
# sample banks (unit-variance draws; P' applied analytically => common random
# numbers across every power point of a search)
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _q1_gram_bank(seed: int, antithetic: bool, n: int, t: int, t0: int,
                  n_samples: int, threads: int):
    """Unit-variance Gram blocks for the q1 Chernoff bound at overlap t0.

    Columns are ordered [S2,1-overlap (t0) | S1-only (t - t0) | S2,2-only
    (t - t0)]; A1 holds transmitted codewords on the first two blocks, A2 the
    false-alarm codewords on the first and third blocks.
    """
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples),
                      master_seed=seed, antithetic=antithetic, threads=threads)

    def draw(rng):
        ca = mc.standard_cn(rng, n, t0)
        cb = mc.standard_cn(rng, n, t - t0)
        cpa = mc.standard_cn(rng, n, t0)
        cpc = mc.standard_cn(rng, n, t - t0)
        m = 2 * t - t0
        A1 = np.zeros((n, m), dtype=complex)
        A2 = np.zeros((n, m), dtype=complex)
        A1[:, :t0] = ca
        A1[:, t0:t] = cb
        A2[:, :t0] = cpa
        A2[:, t:] = cpc
        G11 = A1.conj().T @ A1
        G12 = A1.conj().T @ A2
        G22 = A2.conj().T @ A2
        return G11, G12, G22

    G11, G12, G22 = mc.draw_batch(cfg, ("csir_q1", t, t0), n_samples, draw)
    for a in (G11, G12, G22):
        a.setflags(write=False)
    return G11, G12, G22


@lru_cache(maxsize=64)
def _q2_eig_bank(seed: int, antithetic: bool, n: int, t: int, n_samples: int,
                 threads: int):
    """Eigenvalues of the unit-variance t x t Gram of the misdecoded block."""
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples),
                      master_seed=seed, antithetic=antithetic, threads=threads)

    def draw(rng):
        A = mc.standard_cn(rng, n, t)
        return np.linalg.eigvalsh(A.conj().T @ A)

    eigs = mc.draw_batch(cfg, ("csir_q2", t), n_samples, draw)
    eigs.setflags(write=False)
    return eigs


def _q1_cell_log(sp: SystemParams, pp: PowerPoint, t: int, t0: int,
                 gr: GoodRegionParams, cfg: mc.McConfig, n_samples: int,
                 fixed_ur=None) -> float:
    """log E[min_{u,r} exp{-L(n ln(1+r(1-w)) + ln|I + B| - r n nu)}] for one t0."""
    n, L = sp.n, sp.L
    omega, nu = gr.omega, gr.nu
    G11u, G12u, G22u = _q1_gram_bank(cfg.master_seed, cfg.antithetic, n, t, t0,
                                     n_samples, cfg.threads)
    Pp = pp.Pprime
    G11 = Pp * G11u
    G12s = Pp * (G12u + np.conj(np.swapaxes(G12u, -1, -2)))
    G22 = Pp * G22u
    Gd = G11 - G12s + G22
    m = G11.shape[-1]
    S = G11.shape[0]
    eye = np.eye(m)

    def phi(u_vec: np.ndarray, r_vec: np.ndarray) -> np.ndarray:
        u = u_vec.reshape(S, 1, 1)
        r = r_vec.reshape(S, 1, 1)
        denom = 1.0 + r * (1.0 - omega)
        a = u - r * omega
        quad = a * a * G11 - u * a * G12s + u * u * G22
        B = u * Gd - r * omega * G11 - quad / denom
        B = linalg.hermitize(B)
        lam = np.linalg.eigvalsh(B)
        feasible = lam[:, 0] > -1.0 + EIG_SLACK
        with np.errstate(invalid="ignore", divide="ignore"):
            logdet = np.sum(np.log1p(np.maximum(lam, -1.0 + 1e-300)), axis=-1)
        rv = r_vec
        val = -L * (n * np.log1p(rv * (1.0 - omega)) + logdet - rv * n * nu)
        return np.where(feasible, val, np.inf)

    if fixed_ur is not None:
        u0, r0 = fixed_ur
        best = phi(np.full(S, float(u0)), np.full(S, float(r0)))
        if not np.all(np.isfinite(best)):
            raise ValueError("fixed (u, r) is infeasible for some samples")
        return mc.log_mean_from_values(best).mean
    if gr.u_rule == "full2d":
        best = np.full(S, np.inf)
        for u0 in np.linspace(0.0, 2.0, 17):
            vals = optim.minimize_1d(lambda r: phi(np.full(S, float(u0)), r),
                                     S, gr.r_grid(), golden_iters=8)
            best = np.minimum(best, vals)
    else:
        f = lambda r: phi(0.5 * (1.0 + r), r)
        best = optim.minimize_1d(f, S, gr.r_grid(),
                                 golden_iters=gr.golden_iters,
                                 newton_iters=gr.newton_iters)
    # r = 0 with u = (1+r)/2 keeps B PSD, so a feasible candidate always
    # exists; anything left at +inf falls back to the (u, r) = (0, 0) anchor
    best = np.where(np.isfinite(best), best, 0.0)
    return mc.log_mean_from_values(best).mean


def _log_c_t0(sp: SystemParams, t: int, t0: int) -> float:
    """log of C_{t0,t} = C(Ka,t) C(t,t0) C(K-Ka,t-t0) (M-1)^{t0} M^{t-t0}."""
    ka = sp.ka
    if t - t0 > sp.K - ka:
        return -math.inf
    lw = log_binom(ka, t) + log_binom(t, t0) + log_binom(sp.K - ka, t - t0)
    if t0 > 0:
        ln_m_minus_1 = math.log(2.0 ** sp.J - 1.0) if sp.J < 50 else sp.ln_m
        lw += t0 * ln_m_minus_1
    lw += (t - t0) * sp.ln_m
    return lw


def q1t_csir(sp: SystemParams, pp: PowerPoint, t: int, gr: GoodRegionParams,
             cfg: mc.McConfig, *, t0_weighted: bool = True,
             n_samples: int | None = None, fixed_ur=None) -> float:
    """log of q1(omega, nu): union-Chernoff term of the CSIR good-region bound."""
    if not 1 <= t <= sp.ka:
        raise ValueError(f"t={t} outside [1, K_a={sp.ka}]")
    n_samples = cfg.n_final if n_samples is None else n_samples
    t0_values = range(t, t + 1) if not t0_weighted else range(0, t + 1)
    cells = []
    for t0 in t0_values:
        lw = _log_c_t0(sp, t, t0)
        if lw == -math.inf:
            continue
        cell = _q1_cell_log(sp, pp, t, t0, gr, cfg, n_samples, fixed_ur=fixed_ur)
        cells.append(lw + cell)
    return mc.logsumexp_stream(np.array(cells)) if cells else -math.inf


def q2t_csir(sp: SystemParams, pp: PowerPoint, t: int, omega: float, nu: float,
             cfg: mc.McConfig, *, n_samples: int | None = None,
             eta_grid=None, delta_grid=None) -> float:
    """Probability that the received signal leaves the good region (three cases)."""
    if not 1 <= t <= sp.ka:
        raise ValueError(f"t={t} outside [1, K_a={sp.ka}]")
    n, L, ka = sp.n, sp.L, sp.ka
    if omega == 0.0:
        return float(linalg.reg_gamma_upper_vec(n * L, n * L * nu))
    n_samples = cfg.n_final if n_samples is None else n_samples
    if t < n:
        eta_grid = ETA_GRID_2D if eta_grid is None else np.asarray(eta_grid)
        delta_grid = DELTA_GRID_2D if delta_grid is None \
            else np.asarray(delta_grid)
    else:
        eta_grid = ETA_GRID if eta_grid is None else np.asarray(eta_grid)
        delta_grid = DELTA_GRID if delta_grid is None \
            else np.asarray(delta_grid)
    lbin = log_binom(ka, t)
    binom = math.exp(min(lbin, 700.0))
    eigs = pp.Pprime * _q2_eig_bank(cfg.master_seed, cfg.antithetic, n, t,
                                    n_samples, cfg.threads)
    if t < n:
        # E-term uses |I + w A1 A1^H|^{-1/t} = exp(-(1/t) sum ln(1 + w lam))
        dfac = np.exp(-np.sum(np.log1p(omega * eigs), axis=-1) / t)  # (S,)
        eta = eta_grid.reshape(-1, 1, 1)
        delta = delta_grid.reshape(1, -1, 1)
        arg = L * (t * (1.0 + eta) - n * nu + n * (1.0 + delta) * (1.0 - omega)) * dfac
        eterm = np.mean(reg_gamma_vec(t * L, arg), axis=-1)
        tails = (linalg.reg_gamma_upper_vec(t * L, t * L * (1.0 + eta_grid)).reshape(-1, 1)
                 + linalg.reg_gamma_upper_vec(n * L, n * L * (1.0 + delta_grid)).reshape(1, -1))
        total = binom * (eterm + tails)
        return float(np.min(total))
    # t >= n: |I + A1 A1^H|^{1/n}
    dfac = np.exp(np.sum(np.log1p(eigs), axis=-1) / n)  # (S,)
    eta = eta_grid.reshape(-1, 1)
    arg = n * L * (1.0 + eta - nu) / (omega * dfac)
    eterm = binom * np.mean(reg_gamma_vec(n * L, arg), axis=-1)
    tails = linalg.reg_gamma_upper_vec(n * L, n * L * (1.0 + eta_grid))
    return float(np.min(eterm + tails))


def p1t_csir(sp: SystemParams, pp: PowerPoint, t: int, grid, cfg: mc.McConfig,
             *, t0_weighted: bool = True, n_samples: int | None = None,
             gr_template: GoodRegionParams | None = None,
             max_q1: int | None = None, hint=None):
    """min over the (omega, nu) grid of q1 + q2, clamped to [0, 1].

    q2 is formula-only and cheap, so it is evaluated first and used to order
    and prune grid points before running the MC-heavy q1; at most ``max_q1``
    q1 evaluations are spent (the minimum over a grid subset is still a valid
    bound).  ``hint`` is an (omega, nu) pair tried first (warm start from a
    neighboring t or power point).
    """
    if not grid:
        raise ValueError("empty (omega, nu) grid")
    template = gr_template or GoodRegionParams(0.0, 0.0)
    entries = []
    for omega, nu in grid:
        q2 = q2t_csir(sp, pp, t, omega, nu, cfg, n_samples=n_samples)
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
        lq1 = q1t_csir(sp, pp, t, gr, cfg, t0_weighted=t0_weighted,
                       n_samples=n_samples)
        spent += 1
        total = math.exp(min(lq1, 700.0)) + q2
        if total < best:
            best = total
            arg = {"omega": omega, "nu": nu}
    return min(1.0, best), arg


@lru_cache(maxsize=64)
def _gallager_gram_bank(seed: int, antithetic: bool, L: int, t: int, t0: int,
                        n_samples: int, threads: int):
    """L x L channel Grams H1^H H1, H2^H H2 with t0 shared rows."""
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples), master_seed=seed,
                      antithetic=antithetic, threads=threads)

    def draw(rng):
        Ha = mc.standard_cn(rng, t0, L)
        Hb = mc.standard_cn(rng, t - t0, L)
        Hc = mc.standard_cn(rng, t - t0, L)
        Ga = Ha.conj().T @ Ha
        return Ga + Hb.conj().T @ Hb, Ga + Hc.conj().T @ Hc

    G1, G2 = mc.draw_batch(cfg, ("csir_gallager", t, t0), n_samples, draw)
    G1.setflags(write=False)
    G2.setflags(write=False)
    return G1, G2


def p2t_gallager(sp: SystemParams, pp: PowerPoint, t: int, cfg: mc.McConfig,
                 *, rho_grid=None, beta_fracs=(0.5, 0.75, 1.0, 1.25, 1.5),
                 n_samples: int | None = None, fixed_rho_beta=None) -> float:
    """Gallager rho-trick bound on P[F_t], minimized over a (rho, beta) grid."""
    if not 1 <= t <= sp.ka:
        raise ValueError(f"t={t} outside [1, K_a={sp.ka}]")
    n, L, ka, K = sp.n, sp.L, sp.ka, sp.K
    n_samples = cfg.n_final if n_samples is None else n_samples
    if rho_grid is None:
        rho_grid = np.linspace(0.0, 1.0, 11)
    eyeL = np.eye(L)
    pairs = []
    if fixed_rho_beta is not None:
        pairs = [fixed_rho_beta]
    else:
        for rho in rho_grid:
            for frac in beta_fracs:
                beta = frac / (1.0 + rho)
                if rho * beta < 1.0:
                    pairs.append((float(rho), float(beta)))
    best_log = math.inf
    for rho, beta in pairs:
        cells = []
        for t0 in range(0, t + 1):
            if t - t0 > K - ka:
                continue
            lw = (log_binom(ka, t) + log_binom(t, t0) + log_binom(K - ka, t - t0)
                  + rho * t * sp.ln_m)
            G1, G2 = _gallager_gram_bank(cfg.master_seed, cfg.antithetic, L, t,
                                         t0, n_samples, cfg.threads)
            ld2 = linalg.logdet_hpd(eyeL + beta * pp.Pprime * G2)
            M = eyeL + beta * (1.0 - rho * beta) * pp.Pprime * (rho * G1 + G2)
            ldm = linalg.logdet_hpd(M)
            logs = (1.0 - rho) * n * ld2 - n * ldm
            cells.append(lw + mc.log_mean_from_values(logs).mean)
        total = mc.logsumexp_stream(np.array(cells)) if cells else -math.inf
        best_log = min(best_log, total)
    return min(1.0, math.exp(min(best_log, 700.0)))


@lru_cache(maxsize=64)
def _knownset_g_bank(seed: int, antithetic: bool, t: int, n: int,
                     n_samples: int, threads: int):
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples), master_seed=seed,
                      antithetic=antithetic, threads=threads)
    G = mc.draw_batch(cfg, ("csir_knownset", t), n_samples,
                      lambda rng: mc.standard_cn(rng, t, n))
    G.setflags(write=False)
    return G


def p2t_knownset(sp: SystemParams, pp: PowerPoint, t: int, cfg: mc.McConfig,
                 *, n_samples: int | None = None, rho_n_values=None) -> float:
    """All-active Gallager bound: min over rho (rho n integer) of
    C(K,t) M^{rho t} E[|I_t + P'/(1+rho) G G^H|^{-L}], G of shape t x rho n."""
    if sp.ka != sp.K:
        raise ValueError("known-set bound requires K_a = K")
    if not 1 <= t <= sp.K:
        raise ValueError(f"t={t} outside [1, K={sp.K}]")
    n, L = sp.n, sp.L
    n_samples = cfg.n_final if n_samples is None else n_samples
    if rho_n_values is None:
        rho_n_values = np.unique(np.round(np.linspace(0, n, min(n, 40) + 1)).astype(int))
    else:
        rho_n_values = np.unique(np.asarray(rho_n_values, dtype=int))
    G = _knownset_g_bank(cfg.master_seed, cfg.antithetic, t, n, n_samples,
                         cfg.threads)
    S = G.shape[0]
    lbin = log_binom(sp.K, t)
    eye = np.eye(t)
    best = math.inf
    gram = np.zeros((S, t, t), dtype=complex)
    prev = 0
    for rho_n in rho_n_values:
        if rho_n > 0:
            block = G[:, :, prev:rho_n]
            gram = gram + block @ np.conj(np.swapaxes(block, -1, -2))
            prev = rho_n
        rho = rho_n / n
        c = pp.Pprime / (1.0 + rho)
        if rho_n == 0:
            cell = 0.0
        else:
            logdets = linalg.logdet_hpd(eye + c * linalg.hermitize(gram))
            cell = mc.log_mean_from_values(-L * logdets).mean
        best = min(best, lbin + rho * t * sp.ln_m + cell)
    return min(1.0, math.exp(min(best, 700.0)))


def _knownset_closed_log_q(sp: SystemParams, pp: PowerPoint, t: int,
                           rho_n: int) -> float:
    """log q(rho) of the closed-form all-active bound at rho = rho_n / n."""
    L = sp.L
    rho = rho_n / sp.n
    base = log_binom(sp.K, t) + rho * t * sp.ln_m
    lpc = math.log(pp.Pprime / (1.0 + rho))
    if rho_n >= t + L:
        lg = sum(math.lgamma(i - L) - math.lgamma(i)
                 for i in range(rho_n - t + 1, rho_n + 1))
        return base - L * t * lpc + lg
    if rho_n <= t - L:
        lg = sum(math.lgamma(i - L) - math.lgamma(i)
                 for i in range(t - rho_n + 1, t + 1))
        return base - L * rho_n * lpc + lg
    return 0.0  # q(rho) = 1


def p2t_knownset_closed(sp: SystemParams, pp: PowerPoint, t: int) -> float:
    """Closed-form upper bound on the all-active Gallager bound (Gamma products)."""
    if sp.ka != sp.K:
        raise ValueError("known-set bound requires K_a = K")
    best = min(_knownset_closed_log_q(sp, pp, t, rho_n)
               for rho_n in range(0, sp.n + 1))
    return min(1.0, math.exp(min(best, 700.0)))


def pupe_csir_upper(sp: SystemParams, pp: PowerPoint, cfg: mc.McConfig, *,
                    mode: str = "random-access", gr_grid=None,
                    use_goodregion: bool | None = None,
                    use_gallager: bool | None = None,
                    knownset_variant: str = "mc",
                    n_samples: int | None = None,
                    eps_hint: float | None = None,
                    t_max: int | None = None,
                    gr_template: GoodRegionParams | None = None,
                    stop_above: float | None = None,
                    max_q1: int | None = 10) -> BoundResult:
    """PUPE upper bound p0 + sum_t (t/Ka) min{1, p1t, p2t} at a fixed (P, P')."""
    if mode not in ("random-access", "known-set"):
        raise ValueError(f"unknown mode {mode!r}")
    ka = sp.ka
    if mode == "known-set" and sp.K != ka:
        raise ValueError("known-set mode requires K_a = K")
    if use_goodregion is None:
        use_goodregion = mode == "random-access"
    if use_gallager is None:
        use_gallager = mode == "known-set"
    if use_goodregion and gr_grid is None:
        gr_grid = default_region_grid()
    p0 = model.p0_power_violation(sp, pp)
    total = p0
    per_t = []
    argmin = {"Pprime": pp.Pprime}
    tiny_run = 0
    upper_t = ka if t_max is None else min(t_max, ka)
    truncated_at = None
    hint = None
    for t in range(1, upper_t + 1):
        if stop_above is not None and total > stop_above:
            truncated_at = t - 1
            break
        candidates = [1.0]
        arg_t = {}
        if use_goodregion:
            p1, arg_t = p1t_csir(sp, pp, t, gr_grid, cfg,
                                 t0_weighted=(mode == "random-access"),
                                 n_samples=n_samples, gr_template=gr_template,
                                 max_q1=max_q1, hint=hint)
            if arg_t.get("omega") is not None:
                hint = (arg_t["omega"], arg_t["nu"])
            candidates.append(p1)
        if use_gallager:
            if mode == "known-set":
                if knownset_variant in ("mc", "both"):
                    candidates.append(p2t_knownset(sp, pp, t, cfg,
                                                   n_samples=n_samples))
                if knownset_variant in ("closed", "both"):
                    candidates.append(p2t_knownset_closed(sp, pp, t))
            else:
                candidates.append(p2t_gallager(sp, pp, t, cfg,
                                               n_samples=n_samples))
        term = (t / ka) * min(candidates)
        per_t.append((t, term))
        total += term
        if arg_t:
            argmin.setdefault("per_t", {})[t] = arg_t
        # truncation: remaining worst-case tail or persistent negligible terms
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

@lru_cache(maxsize=32)
def _converse_eig_bank(seed: int, ka: int, L: int, n_samples: int):
    """Per-t eigenvalues of H_t^H H_t for nested rows of a Ka x L standard H."""
    eigs = []
    for t in range(1, ka + 1):
        rows = np.empty((n_samples, min(t, L)))
        eigs.append(rows)
    for i in range(n_samples):
        rng = mc.stream_rng(seed, "csir_conv", i)
        H = mc.standard_cn(rng, ka, L)
        for t in range(1, ka + 1):
            Ht = H[:t]
            G = Ht.conj().T @ Ht if L <= t else Ht @ Ht.conj().T
            eigs[t - 1][i] = np.linalg.eigvalsh(linalg.hermitize(G))
    for a in eigs:
        a.setflags(write=False)
    return tuple(eigs)


def csir_converse_min_power(sp: SystemParams, eps: float,
                            cfg: mc.McConfig | None = None, *,
                            mode: str = "mc",
                            eb_db_range=(-20.0, 60.0),
                            tol_db: float = 0.01,
                            n_samples: int | None = None) -> BoundResult:
    """Smallest P such that the Fano condition holds for every t in [K_a].

    ``mode="mc"`` evaluates E[log2 |I_L + P H_t^H H_t|] by Monte Carlo with
    common random numbers across P; ``mode="closed"`` uses the concavity
    relaxation min{L log2(1 + P t), t log2(1 + P L)}.
    """
    if not 0.0 < eps < 1.0 - 2.0 ** (-sp.J):
        raise ValueError("eps must lie in (0, 1 - 2^-J)")
    ka, n, L, J = sp.ka, sp.n, sp.L, sp.J
    h2 = model.binary_entropy_bits(eps)
    lhs = np.array([(t / ka - eps) * J - h2 for t in range(1, ka + 1)])
    active = lhs > 0.0
    if not np.any(active):
        P_lo = sp.J * 10 ** (eb_db_range[0] / 10.0) / sp.n
        return BoundResult(value=model.eb_db(sp, P_lo), p=P_lo,
                           eb_db=model.eb_db(sp, P_lo), feasible=True,
                           flags={"unconstrained": True})
    if mode == "mc":
        cfg = cfg or mc.McConfig()
        ns = n_samples if n_samples is not None else cfg.n_search
        banks = _converse_eig_bank(cfg.master_seed, ka, L, ns)

        def rhs(P: float) -> np.ndarray:
            out = np.empty(ka)
            for t in range(1, ka + 1):
                out[t - 1] = (n / ka) * float(
                    np.mean(np.sum(np.log2(1.0 + P * banks[t - 1]), axis=-1)))
            return out
    elif mode == "closed":
        ts = np.arange(1, ka + 1, dtype=float)

        def rhs(P: float) -> np.ndarray:
            return (n / ka) * np.minimum(L * np.log2(1.0 + P * ts),
                                         ts * np.log2(1.0 + P * L))
    else:
        raise ValueError(f"unknown mode {mode!r}")

    def feasible(P: float) -> bool:
        return bool(np.all(lhs[active] <= rhs(P)[active]))

    lo_db, hi_db = eb_db_range
    P_of = lambda db: sp.J * 10 ** (db / 10.0) / sp.n
    if feasible(P_of(lo_db)):
        P = P_of(lo_db)
        return BoundResult(value=model.eb_db(sp, P), p=P, eb_db=model.eb_db(sp, P),
                           flags={"at_range_floor": True})
    if not feasible(P_of(hi_db)):
        return BoundResult(value=math.inf, p=None, eb_db=None, feasible=False,
                           flags={"infeasible_range": eb_db_range})
    while hi_db - lo_db > tol_db:
        mid = 0.5 * (lo_db + hi_db)
        if feasible(P_of(mid)):
            hi_db = mid
        else:
            lo_db = mid
    P = P_of(hi_db)
    binding = int(np.argmax(lhs - rhs(P))) + 1
    return BoundResult(value=model.eb_db(sp, P), p=P, eb_db=model.eb_db(sp, P),
                       argmin_params={"binding_t": binding, "mode": mode})
