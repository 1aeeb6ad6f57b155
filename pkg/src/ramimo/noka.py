"""Achievability and converse bounds with no CSI and a random, unknown
number of active users (K_a ~ Binom(K, p_a)).

The receiver first estimates K_a by minimizing the energy metric
|‖Y‖_F^2 - n L (1 + K~ P')| over candidate counts, then runs a MAP decoder
whose output-list size may deviate from the estimate by at most the decoding
radius r'.  The misdetection / false-alarm bounds assemble per-(K_a, K'_a,
t, t') cells: a transition bound on the estimator landing at K'_a, and
good-region bounds on the misdetection/false-alarm counts with MAP prior
weights b, b1, b', b''.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import goodregion, linalg, mc, model, search
from .csir import DELTA_GRID, GoodRegionParams
from .model import BoundResult, PowerPoint, RandomKa, SystemParams
from .numerics import log_binom, log_binom_pmf

__all__ = [
    "KaEstimatorContext",
    "MapWeights",
    "index_sets",
    "map_weights",
    "ka_transition_prob",
    "q1_noka",
    "q2_noka",
    "q2_noka_t0",
    "md_fa_upper",
    "ebmin_noka",
    "noka_converse_min_power",
]

LN2 = math.log(2.0)


@dataclass(frozen=True)
class KaEstimatorContext:
    """Estimator outcome K'_a with decoding radius r' and its clamped window."""

    K: int
    ka_true: int
    ka_est: int
    radius: int

    def __post_init__(self):
        if not (0 <= self.ka_true <= self.K and 0 <= self.ka_est <= self.K):
            raise ValueError("counts must lie in [0, K]")
        if self.radius < 0:
            raise ValueError("decoding radius must be >= 0")

    @property
    def ka_lo(self) -> int:
        return max(0, self.ka_est - self.radius)

    @property
    def ka_hi(self) -> int:
        return min(self.K, self.ka_est + self.radius)

    @property
    def md_extra(self) -> int:
        """(K_a - K'_{a,u})^+: misdetections forced by a too-small window."""
        return max(0, self.ka_true - self.ka_hi)

    @property
    def fa_extra(self) -> int:
        """(K'_{a,l} - K_a)^+: false alarms forced by a too-large window."""
        return max(0, self.ka_lo - self.ka_true)

    def ka_hat(self, t: int, t_prime: int) -> int:
        """Decoded-list size at t extra misdetections, t' extra false alarms."""
        return self.ka_true - t - self.md_extra + t_prime + self.fa_extra


def index_sets(K: int, ka_true: int, ka_est: int, radius: int):
    """(t range, t' range for MD, t' range for FA, ka_hat) for one cell."""
    ctx = KaEstimatorContext(K=K, ka_true=ka_true, ka_est=ka_est, radius=radius)
    t_range = range(0, min(ka_true, ctx.ka_hi) + 1)

    def tbar_range(t: int) -> range:
        lo = max(0, ctx.md_extra - max(0, ka_true - ctx.ka_lo) + t)
        hi = (max(0, ctx.ka_hi - ka_true) - max(0, ctx.ka_lo - ka_true)) + t
        return range(lo, hi + 1)

    def tprime_range(t: int) -> range:
        lo = max(0, (ctx.md_extra - ctx.fa_extra
                     + max(ctx.ka_lo, 1) - ka_true + t))
        hi = (max(0, ctx.ka_hi - ka_true) - max(0, ctx.ka_lo - ka_true)) + t
        return range(lo, hi + 1)

    return t_range, tbar_range, tprime_range, ctx.ka_hat


@dataclass(frozen=True)
class MapWeights:
    """Log prior weights b, b1, b', b'' of the MAP decoding metric."""

    b: float
    b1: float
    b_prime: float
    b_pprime: float

    def as_tuple(self):
        return (self.b, self.b1, self.b_prime, self.b_pprime)


def map_weights(sp: SystemParams, ctx: KaEstimatorContext, t: int,
                t_prime: int) -> MapWeights:
    """b = ln P_Ka(k) - k ln M at the four list-size hypotheses."""
    pa, K, ln_m = sp.pa, sp.K, sp.ln_m

    def w(k: int) -> float:
        if not 0 <= k <= K:
            return -math.inf
        lp = log_binom_pmf(K, pa, k)
        return lp - k * ln_m if lp > -math.inf else -math.inf

    ka = ctx.ka_true
    return MapWeights(
        b=w(ka),
        b1=w(ka - t - ctx.md_extra),
        b_prime=w(ctx.ka_hat(t, t_prime)),
        b_pprime=w(ka - ctx.md_extra + ctx.fa_extra),
    )


# ---------------------------------------------------------------------------
# energy-based estimator transition bounds
# ---------------------------------------------------------------------------

@lru_cache(maxsize=48)
def _energy_unit_eigs(seed: int, n: int, ka: int, n_samples: int,
                      threads: int):
    """Unit-variance eigenvalues of A0 A0^H per sample, A0 of shape n x ka."""
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples),
                      master_seed=seed, threads=threads)

    def draw(rng):
        A = mc.standard_cn(rng, n, ka)
        G = A.conj().T @ A if ka <= n else A @ A.conj().T
        return np.clip(np.linalg.eigvalsh(linalg.hermitize(G)), 0.0, None)

    eigs = mc.draw_batch(cfg, ("noka_energy", ka), n_samples, draw)
    eigs.setflags(write=False)
    return eigs


class EnergyTails:
    """Bounds on P[‖Y‖_F^2 <= tau] / >= tau for one true K_a at one P'.

    Each side is the minimum of a geometric-mean chi-square form (optimized
    over the guard level eta) and a per-sample Chernoff form.
    """

    RHO_GRID = np.geomspace(1e-4, 50.0, 48)
    ETA_GRID = np.concatenate([np.arange(0.05, 2.01, 0.08), [2.5, 3.0, 4.0]])

    def __init__(self, sp: SystemParams, pp: PowerPoint, ka_true: int,
                 cfg: mc.McConfig, n_samples: int):
        n, L = sp.n, sp.L
        self.n, self.L = n, L
        if ka_true == 0:
            self.eigs = None
            return
        self.eigs = pp.Pprime * _energy_unit_eigs(cfg.master_seed, n, ka_true,
                                                  n_samples, cfg.threads)
        m = self.eigs.shape[1]
        rho = self.RHO_GRID
        lam1 = 1.0 + self.eigs[None, :, :]          # (1, S, m)
        rho3 = rho.reshape(-1, 1, 1)
        self._g_plus = (L * np.sum(np.log1p(rho3 * lam1), axis=-1)
                        + (n - m) * L * np.log1p(rho)[:, None])
        with np.errstate(invalid="ignore", divide="ignore"):
            inner = 1.0 - rho3 * lam1
            g = -L * np.sum(np.log(np.where(inner > 0, inner, np.nan)), axis=-1)
        comp = np.where(rho < 1.0, -(n - m) * L * np.log1p(-np.minimum(rho, 1.0 - 1e-12)),
                        np.inf)
        g = g + comp[:, None]
        self._g_minus = np.where(np.isfinite(g), g, np.inf)
        self._gm_inv = np.exp(-np.sum(np.log(np.maximum(self.eigs, 1e-300)),
                                      axis=-1) / m)
        self._lam_max = np.maximum(self.eigs[:, -1], 1e-300)

    def lower_tail(self, tau: float) -> float:
        """Upper bound on P[‖Y‖_F^2 <= tau]."""
        n, L = self.n, self.L
        if self.eigs is None:
            return float(linalg.reg_gamma_vec(n * L, tau))
        m = self.eigs.shape[1]
        expo = self.RHO_GRID[:, None] * tau - self._g_plus
        cher = float(np.mean(np.exp(np.clip(np.min(expo, axis=0), None, 0.0))))
        if cher < 1e-14:
            return cher
        eta = self.ETA_GRID.reshape(-1, 1)
        arg = self._gm_inv * (tau - n * L * eta)
        eta_form = (np.mean(linalg.reg_gamma_vec(L * m, arg), axis=-1)
                    + linalg.reg_gamma_vec(n * L, n * L * self.ETA_GRID))
        return float(min(np.min(eta_form), cher, 1.0))

    def upper_tail(self, tau: float) -> float:
        """Upper bound on P[‖Y‖_F^2 >= tau]."""
        n, L = self.n, self.L
        if self.eigs is None:
            return float(linalg.reg_gamma_upper_vec(n * L, tau))
        m = self.eigs.shape[1]
        with np.errstate(invalid="ignore", over="ignore"):
            expo = -self.RHO_GRID[:, None] * tau + self._g_minus
            cher = float(np.mean(np.exp(np.clip(np.min(expo, axis=0), None, 0.0))))
        if cher < 1e-14:
            return cher
        eta = self.ETA_GRID.reshape(-1, 1)
        arg = (tau - n * L * eta) / self._lam_max
        eta_form = (2.0 - np.mean(linalg.reg_gamma_vec(L * m, arg), axis=-1)
                    - linalg.reg_gamma_vec(n * L, n * L * self.ETA_GRID))
        return float(min(np.min(eta_form), cher, 1.0))


def ka_transition_prob(sp: SystemParams, pp: PowerPoint, ka_true: int,
                       ka_est: int, cfg: mc.McConfig, *,
                       n_samples: int | None = None,
                       tails: EnergyTails | None = None,
                       adjacent_only: bool = True) -> float:
    """Upper bound on P[estimator outputs K'_a | K_a active users].

    min over K~ != K'_a of the one-sided tail at threshold
    n L (1 + (K'_a + K~) P' / 2): lower tail when K'_a < K~, upper otherwise.
    Both tail bounds are monotone in the threshold, so the min over K~ is
    attained at K~ = K'_a +/- 1; ``adjacent_only=False`` scans the full range.
    """
    n_samples = cfg.n_search if n_samples is None else n_samples
    tails = tails or EnergyTails(sp, pp, ka_true, cfg, n_samples)
    n, L = sp.n, sp.L
    if adjacent_only:
        candidates = [k for k in (ka_est - 1, ka_est + 1) if 0 <= k <= sp.K]
    else:
        candidates = [k for k in range(0, sp.K + 1) if k != ka_est]
    best = 1.0
    for ka_alt in candidates:
        tau = n * L * (1.0 + 0.5 * (ka_est + ka_alt) * pp.Pprime)
        if ka_est < ka_alt:
            best = min(best, tails.lower_tail(tau))
        else:
            best = min(best, tails.upper_tail(tau))
    return best


# ---------------------------------------------------------------------------
# per-cell good-region bounds with MAP prior weights
# ---------------------------------------------------------------------------

def _log_c_cell(sp: SystemParams, ctx: KaEstimatorContext, t: int,
                t_prime: int) -> float:
    """C_{K'_a,t,t'} = C(Ka, md) C(K - min{Ka, K'au} + t, fa) M^{fa}."""
    ka = ctx.ka_true
    md = t + ctx.md_extra
    fa = t_prime + ctx.fa_extra
    top = sp.K - min(ka, ctx.ka_hi) + t
    if md > ka or fa > top or fa < 0 or md < 0:
        return -math.inf
    return log_binom(ka, md) + log_binom(top, fa) + fa * sp.ln_m


def q1_noka(sp: SystemParams, pp: PowerPoint, ctx: KaEstimatorContext,
            t: int, t_prime: int, gr: GoodRegionParams, cfg: mc.McConfig, *,
            n_samples: int | None = None, fixed_ur=None,
            zero_priors: bool = False, fa_bank: int | None = None) -> float:
    """log of C_{K'a,t,t'} E[min_{u,r} exp{L r n nu + b_{u,r} + L(u ln|F''|
    - r ln|F| - u ln|F'| + r w ln|F1| - ln|B|)}]."""
    md = t + ctx.md_extra
    fa = t_prime + ctx.fa_extra
    ka = ctx.ka_true
    if md < 1 and fa < 1:
        raise ValueError("cell needs at least one misdetection or false alarm")
    n_samples = cfg.n_search if n_samples is None else n_samples
    lw = _log_c_cell(sp, ctx, t, t_prime)
    if lw == -math.inf:
        return -math.inf
    weights = (0.0, 0.0, 0.0, 0.0) if zero_priors else \
        map_weights(sp, ctx, t, t_prime).as_tuple()
    if any(w == -math.inf for w in weights):
        return -math.inf  # zero-probability decoder hypothesis
    prep = goodregion.q1_prep(cfg, sp.n, ka, md, fa, ctx.md_extra,
                              ctx.fa_extra, n_samples, pp.Pprime,
                              fa_bank=fa_bank)
    if gr.u_rule == "half1r":
        u_rule = "u0" if md == 0 else "half1r+u0"
    else:
        u_rule = gr.u_rule
    log_mean = goodregion.q1_log_mean(
        prep, sp.n, sp.L, gr.omega, gr.nu, b_weights=weights,
        r_grid=gr.r_grid(), golden_iters=gr.golden_iters,
        newton_iters=gr.newton_iters, fixed_ur=fixed_ur, u_rule=u_rule)
    return lw + log_mean


def _prior_b(sp: SystemParams, k: int) -> float:
    if not 0 <= k <= sp.K:
        return -math.inf
    lp = log_binom_pmf(sp.K, sp.pa, k)
    return lp - k * sp.ln_m if lp > -math.inf else -math.inf


def q2_noka(sp: SystemParams, pp: PowerPoint, ctx: KaEstimatorContext,
            t: int, omega: float, nu: float, cfg: mc.McConfig, *,
            n_samples: int | None = None, delta_grid=None,
            zero_priors: bool = False, fa_hint: int = 1,
            fa_bank: int | None = None) -> float:
    """Region-complement bound for cells with misdetections (md >= 1).

    ``fa_hint`` aligns the sample bank with the q1 cell so F, F1 are shared
    per sample.
    """
    md = t + ctx.md_extra
    ka = ctx.ka_true
    if md < 1:
        raise ValueError("q2_noka requires misdetections; use q2_noka_t0")
    n, L = sp.n, sp.L
    n_samples = cfg.n_search if n_samples is None else n_samples
    if zero_priors:
        b = b1 = 0.0
    else:
        b = _prior_b(sp, ka)
        b1 = _prior_b(sp, ka - md)
        if b == -math.inf or b1 == -math.inf:
            return 1.0
    prep = goodregion.q1_prep(cfg, n, ka, md, fa_hint, 0, 0, n_samples,
                              pp.Pprime, fa_bank=fa_bank)
    if omega == 0.0:
        # omega = 0 region is S1-independent: P[tr(F^{-1} Y Y^H) >
        # n L nu - L ln|F| + b]
        arg = n * L * nu - L * prep.ln_f + b
        return float(np.mean(linalg.reg_gamma_upper_vec(n * L, arg)))
    delta_grid = DELTA_GRID if delta_grid is None else np.asarray(delta_grid)
    vals = goodregion.region_tail_q2(prep, n, L, omega, nu, delta_grid,
                                     b=b, b1=b1)
    lbin = log_binom(ka, md)
    return float(math.exp(min(lbin, 700.0)) * np.min(vals))


def q2_noka_t0(sp: SystemParams, pp: PowerPoint, ctx: KaEstimatorContext,
               omega: float, nu: float, cfg: mc.McConfig, *,
               n_samples: int | None = None, fa_hint: int = 1,
               fa_bank: int | None = None) -> float:
    """No-misdetection branch: E[1 - P(nL, n L nu / (1-w) - L ln|F| + b)]."""
    ka = ctx.ka_true
    n, L = sp.n, sp.L
    if omega >= 1.0:
        return 0.0  # threshold is infinite: the region never fails
    b = _prior_b(sp, ka)
    if b == -math.inf:
        return 1.0
    n_samples = cfg.n_search if n_samples is None else n_samples
    if ka == 0:
        arg = n * L * nu / (1.0 - omega) + b  # F = I
        return float(linalg.reg_gamma_upper_vec(n * L, arg))
    prep = goodregion.q1_prep(cfg, n, ka, 0, fa_hint, 0, 0, n_samples,
                              pp.Pprime, fa_bank=fa_bank)
    arg = n * L * nu / (1.0 - omega) - L * prep.ln_f + b
    return float(np.mean(linalg.reg_gamma_upper_vec(n * L, arg)))


# ---------------------------------------------------------------------------
# misdetection / false-alarm assembly
# ---------------------------------------------------------------------------

def binomial_truncation(K: int, pa: float, mass_tol: float = 1e-12):
    """Central Binom(K, pa) range keeping mass >= 1 - mass_tol."""
    logs = [log_binom_pmf(K, pa, k) for k in range(K + 1)]
    pmf = np.array([0.0 if lp == -math.inf else math.exp(lp) for lp in logs])
    order = np.argsort(pmf)[::-1]
    keep = np.zeros(K + 1, dtype=bool)
    acc = 0.0
    for idx in order:
        keep[idx] = True
        acc += pmf[idx]
        if acc >= 1.0 - mass_tol:
            break
    kept = np.where(keep)[0]
    return int(kept.min()), int(kept.max()), float(max(0.0, 1.0 - acc))


DEFAULT_NOKA_OMEGAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def default_noka_grid(omegas=DEFAULT_NOKA_OMEGAS, nus=None):
    if nus is None:
        # large nu entries serve the false-alarm cells: their q1 optimum
        # sits at r = 0 (nu-independent) while the region tail vanishes
        nus = np.concatenate([np.arange(0.0, 3.0001, 0.25), [4.0, 6.0]])
    return [(float(w), float(v)) for w in omegas for v in nus]


def md_fa_upper(sp: SystemParams, pp: PowerPoint, radius: int,
                cfg: mc.McConfig, *, gr_grid=None,
                n_samples: int | None = None,
                mass_tol: float = 1e-12,
                skip_below: float = 1e-9,
                gr_template: GoodRegionParams | None = None,
                t_term_tol: float = 1e-12,
                stop_above=None,
                max_q1: int = 6,
                t_consecutive: int = 5):
    """(P_MD bound, P_FA bound) for one decoding radius at a fixed (P, P').

    Quadruple sum over (K_a, K'_a, t, t') with Binom(K, p_a) weights; each
    inner term is min{1, good-region bound(s), estimator-transition bound}.
    Cells whose transition bound already caps the block contribution below
    ``skip_below`` keep that cap (still a valid term of the min) and skip the
    Monte Carlo work.  The K_a sum keeps binomial mass >= 1 - mass_tol and
    adds the dropped mass times the worst-case weight as certified slack.

    ``stop_above=(md_cap, fa_cap)`` aborts once either partial sum exceeds
    its cap (one failed target already certifies infeasibility); the returned
    pair then under-reports the bound and is only valid for that purpose.
    """
    if not isinstance(sp.activity, RandomKa):
        raise ValueError("md_fa_upper needs RandomKa activity")
    if gr_grid is None:
        gr_grid = default_noka_grid()
    n_samples = cfg.n_search if n_samples is None else n_samples
    K, pa = sp.K, sp.pa
    p0 = model.p0_power_violation(sp, pp)
    ka_lo, ka_hi, dropped = binomial_truncation(K, pa, mass_tol)
    slack = dropped * (K + 1) ** 2
    md_total = p0 + slack
    fa_total = p0 + slack
    template = gr_template or GoodRegionParams(0.0, 0.0)
    ptt_cache: dict = {}
    q2_cache: dict = {}
    tails_cache: dict = {}

    fa_banks: dict = {}

    def fa_bank_for(ka_true: int) -> int:
        if ka_true not in fa_banks:
            fa_banks[ka_true] = min(K, radius + min(ka_true, 12) + 1)
        return fa_banks[ka_true]

    def q2_cell(ctx, t, omega, nu, fa_hint):
        md = t + ctx.md_extra
        key = (ctx.ka_true, md, omega, nu)
        if key not in q2_cache:
            bank = fa_bank_for(ctx.ka_true)
            if md > 0:
                q2_cache[key] = q2_noka(sp, pp, ctx, t, omega, nu, cfg,
                                        n_samples=n_samples, fa_hint=fa_hint,
                                        fa_bank=bank)
            else:
                q2_cache[key] = q2_noka_t0(sp, pp, ctx, omega, nu, cfg,
                                           n_samples=n_samples,
                                           fa_hint=fa_hint, fa_bank=bank)
        return q2_cache[key]

    def p_tt(ctx: KaEstimatorContext, t: int, t_prime: int) -> float:
        md = t + ctx.md_extra
        fa = t_prime + ctx.fa_extra
        key = (ctx.ka_true, md, fa, ctx.md_extra, ctx.fa_extra,
               ctx.ka_hat(t, t_prime))
        if key in ptt_cache:
            return ptt_cache[key]
        best = math.inf
        entries = sorted(gr_grid,
                         key=lambda wv: q2_cell(ctx, t, wv[0], wv[1], max(fa, 1)))
        spent = 0
        for omega, nu in entries:
            if spent >= max_q1:
                break
            q2 = q2_cell(ctx, t, omega, nu, max(fa, 1))
            if q2 >= min(1.0, best):
                continue
            gr = GoodRegionParams(omega, nu, u_rule=template.u_rule,
                                  r_max=template.r_max,
                                  r_grid_size=template.r_grid_size,
                                  golden_iters=template.golden_iters,
                                  newton_iters=template.newton_iters)
            lq1 = q1_noka(sp, pp, ctx, t, t_prime, gr, cfg,
                          n_samples=n_samples,
                          fa_bank=fa_bank_for(ctx.ka_true))
            spent += 1
            total = math.exp(min(lq1, 700.0)) + q2
            best = min(best, total)
        val = min(1.0, best)
        ptt_cache[key] = val
        return val

    def done() -> bool:
        return (stop_above is not None
                and (md_total > stop_above[0] or fa_total > stop_above[1]))

    # visit high-mass K_a and near-diagonal K'_a first so an infeasible
    # evaluation crosses the stop_above caps with minimal work
    ka_order = sorted(range(ka_lo, ka_hi + 1),
                      key=lambda k: -log_binom_pmf(K, pa, k)
                      if log_binom_pmf(K, pa, k) > -math.inf else math.inf)
    for ka_true in ka_order:
        if done():
            break
        lp_ka = log_binom_pmf(K, pa, ka_true)
        if lp_ka == -math.inf:
            continue
        p_ka = math.exp(lp_ka)
        if ka_true not in tails_cache:
            tails_cache[ka_true] = EnergyTails(sp, pp, ka_true, cfg, n_samples)
        for ka_est in sorted(range(0, K + 1),
                             key=lambda k: abs(k - ka_true)):
            if done():
                break
            ctx = KaEstimatorContext(K=K, ka_true=ka_true, ka_est=ka_est,
                                     radius=radius)
            t_range, tbar_range, tp_range, _ = index_sets(
                K, ka_true, ka_est, radius)
            w_md = sum((t + ctx.md_extra) / ka_true for t in t_range
                       if t + ctx.md_extra > 0) if ka_true > 0 else 0.0
            w_fa = 0.0
            for t in t_range:
                for tp in tp_range(t):
                    fa_cnt = tp + ctx.fa_extra
                    ka_hat = ctx.ka_hat(t, tp)
                    if fa_cnt > 0 and ka_hat >= 1:
                        w_fa += fa_cnt / ka_hat
            if w_md == 0.0 and w_fa == 0.0:
                continue
            p_trans = ka_transition_prob(sp, pp, ka_true, ka_est, cfg,
                                         n_samples=n_samples,
                                         tails=tails_cache[ka_true])
            use_mc = p_ka * max(w_md, w_fa) * p_trans >= skip_below
            if ka_true >= 1 and w_md > 0.0:
                consecutive_small = 0
                for t in t_range:
                    md = t + ctx.md_extra
                    if md == 0:
                        continue
                    if use_mc:
                        s_tp = 0.0
                        for tp in tbar_range(t):
                            if _log_c_cell(sp, ctx, t, tp) == -math.inf:
                                continue
                            s_tp += p_tt(ctx, t, tp)
                            if s_tp >= 1.0:
                                break
                        inner = min(1.0, s_tp, p_trans)
                    else:
                        inner = min(1.0, p_trans)
                    contrib = p_ka * (md / ka_true) * inner
                    md_total += contrib
                    consecutive_small = consecutive_small + 1 \
                        if contrib < t_term_tol else 0
                    if consecutive_small >= t_consecutive:
                        break
            if w_fa > 0.0:
                consecutive_small = 0
                for t in t_range:
                    row = 0.0
                    for tp in tp_range(t):
                        fa_cnt = tp + ctx.fa_extra
                        ka_hat = ctx.ka_hat(t, tp)
                        if fa_cnt <= 0 or ka_hat < 1:
                            continue
                        if _log_c_cell(sp, ctx, t, tp) == -math.inf:
                            continue
                        if use_mc:
                            inner = min(1.0, p_tt(ctx, t, tp), p_trans)
                        else:
                            inner = min(1.0, p_trans)
                        row += p_ka * (fa_cnt / ka_hat) * inner
                    fa_total += row
                    consecutive_small = consecutive_small + 1 \
                        if row < t_term_tol else 0
                    if consecutive_small >= t_consecutive:
                        break
    return md_total, fa_total


def ebmin_noka(sp: SystemParams, targets, radius_range=None,
               cfg: mc.McConfig | None = None, *,
               eb_db_range=(-10.0, 40.0), coarse_db: float = 0.1,
               refine_db: float = 0.01,
               pprime_divisors=(1.05, 1.2, 2.0),
               gr_grid=None, n_samples: int | None = None,
               skip_below: float = 1e-9) -> BoundResult:
    """Minimum E_b over decoding radii with md/fa targets met jointly."""
    cfg = cfg or mc.McConfig()
    radius_range = range(0, 26) if radius_range is None else radius_range
    eps_md, eps_fa = targets.eps_md, targets.eps_fa
    best = None
    flags = {}
    for radius in radius_range:
        def feasible(db: float) -> bool:
            P = sp.J * 10 ** (db / 10.0) / sp.n
            for c in pprime_divisors:
                pp = PowerPoint(P=P, Pprime=P / c)
                md, fa = md_fa_upper(sp, pp, radius, cfg, gr_grid=gr_grid,
                                     n_samples=n_samples,
                                     skip_below=skip_below,
                                     stop_above=(eps_md, eps_fa))
                if md <= eps_md and fa <= eps_fa:
                    return True
            return False

        db, non_monotone = search.first_feasible_db(
            feasible, eb_db_range[0], eb_db_range[1], coarse_db, refine_db)
        if non_monotone:
            flags.setdefault("non_monotone_db", {})[radius] = non_monotone
        if db is not None and (best is None or db < best[1]):
            best = (radius, db)
    if best is None:
        return BoundResult(value=math.inf, feasible=False,
                           flags={"infeasible_range": eb_db_range, **flags})
    radius, db = best
    P = sp.J * 10 ** (db / 10.0) / sp.n
    return BoundResult(value=db, p=P, eb_db=db,
                       argmin_params={"radius": radius}, flags=flags)


# ---------------------------------------------------------------------------
# converse
# ---------------------------------------------------------------------------

def noka_converse_min_power(sp: SystemParams, targets,
                            cfg: mc.McConfig | None = None, *,
                            eb_db_range=(-20.0, 60.0), tol_db: float = 0.01,
                            n_samples: int | None = None,
                            mass_tol: float = 1e-12) -> BoundResult:
    """Min P for the Fano condition (binomial-weighted Gaussian-codebook
    bound) and the single-user random-access chi-square bound."""
    if not isinstance(sp.activity, RandomKa):
        raise ValueError("noka converse needs RandomKa activity")
    from .nocsi import (_log_m_capacity_term, _wishart_eig_bank,
                        nocsi_single_user_log_m_max)
    eps_md, eps_fa = targets.eps_md, targets.eps_fa
    n, L, K, J, pa = sp.n, sp.L, sp.K, sp.J, sp.pa
    cfg = cfg or mc.McConfig()
    ns = n_samples if n_samples is not None else min(cfg.n_search, 500)

    h_w = model.binary_entropy_bits(pa) + pa * J
    fano_applies = eps_md + eps_fa <= 1.0 - 1.0 / (1.0 + 2.0 ** h_w)
    b1 = ((1.0 - eps_md - eps_fa) * h_w
          - model.binary_entropy_bits(min(eps_md + eps_fa, 1.0)))
    ka_lo, ka_hi, _ = binomial_truncation(K, pa, mass_tol)

    def fano_ok(P: float) -> bool:
        if not fano_applies or b1 <= 0:
            return True
        C = min(n * math.log2(1.0 + pa * K * P),
                _log_m_capacity_term(K * 2.0 ** min(J, 1020), pa * K * n * P))
        T = 0.0
        for ka in range(max(ka_lo, 1), ka_hi + 1):
            lp = log_binom_pmf(K, pa, ka)
            if lp == -math.inf:
                continue
            eigs = _wishart_eig_bank(cfg.master_seed, n, ka, ns)
            T += math.exp(lp) * float(np.mean(np.sum(np.log2(1.0 + P * eigs),
                                                     axis=-1)))
        return b1 <= (L / K) * (C - T)

    eps1 = 1.0 if pa >= 1.0 else min(1.0, eps_fa / (1.0 - pa))
    eps2 = min(1.0, eps_md / pa) if pa > 0 else 1.0
    target_log_m = J * LN2 - math.log(eps1)
    single_vacuous = eps2 >= 1.0

    def single_ok(P: float) -> bool:
        if single_vacuous:
            return True
        return target_log_m <= nocsi_single_user_log_m_max(n, P, L, eps2)

    if (not fano_applies or b1 <= 0) and single_vacuous:
        return BoundResult(value=-math.inf, feasible=True,
                           flags={"unconstrained": True})
    P_of = lambda db: sp.J * 10 ** (db / 10.0) / sp.n
    lo_db, hi_db = eb_db_range
    flags = {}
    thresholds = {}
    for name, ok in (("fano", fano_ok), ("single_user", single_ok)):
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
        return BoundResult(value=math.inf, feasible=False, flags=flags)
    P = P_of(best_db)
    return BoundResult(value=model.eb_db(sp, P), p=P, eb_db=model.eb_db(sp, P),
                       argmin_params={"thresholds_db": thresholds,
                                      "fano_applies": fano_applies},
                       flags=flags)
