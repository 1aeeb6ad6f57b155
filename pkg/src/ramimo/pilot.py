"""Achievability bound for the pilot-assisted MMSE + nearest-neighbor scheme
(all users active).

Users spend n_p channel uses on pilots of per-symbol power P_p (columns of
norm sqrt(n_p P_p)), the receiver forms MMSE channel estimates, and the data
phase runs a nearest-neighbor decoder that treats the estimate as exact.  The
good region is the omega = 0 sphere; the Chernoff exponent involves the real
2 n_d x 2 n_d matrix D, evaluated here through its complex n_d x n_d
equivalent (the embedding determinant is |det_C|^2) and reduced to t x t
eigenproblems through the low rank of the misdecoded-column covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import goodregion, linalg, mc, model, optim
from .linalg import EIG_SLACK
from .model import BoundResult, PowerPoint, SystemParams
from .numerics import log_binom, sample_sphere_columns

__all__ = [
    "PilotConfig",
    "MmseCovariances",
    "mmse_covariances",
    "pilot_matrix",
    "q1t_pilot",
    "q2t_pilot",
    "pupe_pilot_upper",
    "ebmin_pilot",
]


@dataclass(frozen=True)
class PilotConfig:
    """Pilot length, per-symbol pilot power, and the pilot construction."""

    n_p: int
    P_p: float
    kind: str = "orthogonal"  # orthogonal | sphere | dft

    def __post_init__(self):
        if self.n_p < 1:
            raise ValueError("n_p must be >= 1")
        if self.P_p <= 0:
            raise ValueError("P_p must be positive")
        if self.kind not in ("orthogonal", "sphere", "dft"):
            raise ValueError(f"unknown pilot kind {self.kind!r}")

    def validate(self, sp: SystemParams, P_total: float) -> None:
        if self.n_p >= sp.n:
            raise ValueError("pilot length must leave room for data")
        if self.n_p > sp.K:
            raise ValueError("pilot length must not exceed K")
        if self.kind == "orthogonal" and self.n_p != sp.K:
            raise ValueError("orthogonal pilots require n_p = K")
        if self.n_p * self.P_p >= sp.n * P_total:
            raise ValueError("pilot energy exhausts the power budget")

    def n_d(self, sp: SystemParams) -> int:
        return sp.n - self.n_p


@dataclass(frozen=True)
class MmseCovariances:
    """Estimate / error covariances of the per-antenna MMSE channel estimate."""

    sig_hat: np.ndarray    # I - (I + B^H B)^{-1}
    sig_tilde: np.ndarray  # (I + B^H B)^{-1}


def mmse_covariances(B: np.ndarray) -> MmseCovariances:
    B = np.asarray(B, dtype=complex)
    K = B.shape[1]
    M = np.eye(K) + B.conj().T @ B
    sig_tilde = linalg.hermitize(np.linalg.inv(M))
    return MmseCovariances(sig_hat=np.eye(K) - sig_tilde, sig_tilde=sig_tilde)


def pilot_matrix(rng, pc: PilotConfig, K: int) -> np.ndarray:
    """One pilot matrix draw (deterministic given the stream for dft/sphere)."""
    radius_sq = pc.n_p * pc.P_p
    if pc.kind == "orthogonal":
        return math.sqrt(radius_sq) * np.eye(K, dtype=complex)[:pc.n_p]
    if pc.kind == "sphere":
        return sample_sphere_columns(rng, pc.n_p, K, radius_sq)
    # subsampled DFT: n_p distinct rows of the K-point DFT matrix, columns
    # rescaled to norm sqrt(n_p P_p)
    rows = rng.choice(K, size=pc.n_p, replace=False)
    j = np.arange(K)
    F = np.exp(-2j * math.pi * np.outer(rows, j) / K) / math.sqrt(K)
    return math.sqrt(radius_sq / (pc.n_p / K)) * F


@lru_cache(maxsize=2)
def _pilot_base(seed: int, n_d: int, K: int, kind: str, n_p: int,
                pp_key: str, pprime_key: str, n_samples: int, threads: int):
    """Per-sample data: scaled codewords, sigma2 eigensystem, Sigma-hat."""
    P_p = float.fromhex(pp_key)
    pprime = float.fromhex(pprime_key)
    pc = PilotConfig(n_p=n_p, P_p=P_p, kind=kind)
    cfg = mc.McConfig(n_search=1, n_final=max(1, n_samples),
                      master_seed=seed, threads=threads)
    sqrtP = math.sqrt(pprime)

    def draw(rng):
        A = sqrtP * mc.standard_cn(rng, n_d, K)
        Afa = sqrtP * mc.standard_cn(rng, n_d, K)
        if kind == "orthogonal":
            c2 = 1.0 / (1.0 + n_p * P_p)
            sig_hat = (1.0 - c2) * np.eye(K)
            sig_tilde = c2 * np.eye(K)
        else:
            B = pilot_matrix(rng, pc, K)
            cov = mmse_covariances(B)
            sig_hat, sig_tilde = cov.sig_hat, cov.sig_tilde
        sigma2 = linalg.hermitize(A @ sig_tilde @ A.conj().T)
        lam, E = np.linalg.eigh(sigma2)
        return A, Afa, np.asarray(sig_hat, complex), np.clip(lam, 0.0, None), E

    A, Afa, sig_hat, lam, E = mc.draw_batch(cfg, ("pilot_q1", K, kind, n_p),
                                            n_samples, draw)
    for a in (A, Afa, sig_hat, lam, E):
        a.setflags(write=False)
    return A, Afa, sig_hat, lam, E


def _pilot_t_prep(base, t: int):
    """Per-t data: V = (A_S1 - A'_S1) sqrt(Sigma-hat_S1S1), Grams, E^H V."""
    A, Afa, sig_hat, lam, E = base
    D = A[:, :, :t] - Afa[:, :, :t]
    sub = linalg.hermitize(sig_hat[:, :t, :t])
    w, U = np.linalg.eigh(sub)
    root = (U * np.sqrt(np.clip(w, 0.0, None))[:, None, :]) \
        @ np.conj(np.swapaxes(U, -1, -2))
    V = D @ root
    Gv = np.conj(np.swapaxes(V, -1, -2)) @ V           # (S, t, t)
    GE = np.conj(np.swapaxes(E, -1, -2)) @ V           # (S, n_d, t)
    return Gv, GE, lam


def _q1_phi(Gv, GE, lam, n_d: int, L: int, nu: float, u_vec, r_vec):
    """Batched exponent r n_d L nu - (L/2) ln|D| with feasibility +inf."""
    S, t = Gv.shape[0], Gv.shape[-1]
    u = u_vec.reshape(S, 1, 1)
    r = r_vec.reshape(S, 1, 1)
    eye = np.eye(t)
    M1 = eye + u * Gv
    try:
        C = np.linalg.cholesky(linalg.hermitize(M1))
    except np.linalg.LinAlgError:
        return np.full(S, np.inf)
    ln_pd1 = 2.0 * np.sum(np.log(np.real(np.diagonal(C, axis1=-2, axis2=-1))),
                          axis=-1)
    scale = ((1.0 + lam) / (1.0 + r_vec[:, None] * (1.0 + lam)))
    Tr = np.conj(np.swapaxes(GE, -1, -2)) @ (scale[:, :, None] * GE)
    Y = np.linalg.solve(C, Tr)
    M = np.linalg.solve(C, np.conj(np.swapaxes(Y, -1, -2)))
    eig = np.linalg.eigvalsh(linalg.hermitize(
        np.conj(np.swapaxes(M, -1, -2))))
    eig = (u_vec ** 2)[:, None] * eig
    feasible = eig[:, -1] < 1.0 - EIG_SLACK
    with np.errstate(invalid="ignore", divide="ignore"):
        ln_pd3 = np.sum(np.log(np.maximum(1.0 - eig, 1e-300)), axis=-1)
    ln_pd2 = np.sum(np.log1p(r_vec[:, None] * (1.0 + lam)), axis=-1)
    val = r_vec * n_d * L * nu - L * (ln_pd1 + ln_pd2 + ln_pd3)
    return np.where(feasible, val, np.inf)


def q1t_pilot(sp: SystemParams, pc: PilotConfig, pp: PowerPoint, t: int,
              nu: float, cfg: mc.McConfig, *, n_samples: int | None = None,
              fixed_ur=None, r_grid=None, u_rule: str = "half1r") -> float:
    """log of C(K,t) M^t E[min_{u,r} exp{r n_d L nu - (L/2) ln|D|}]."""
    if sp.ka != sp.K:
        raise ValueError("pilot bound assumes all users active")
    if not 1 <= t <= sp.K:
        raise ValueError(f"t={t} outside [1, K={sp.K}]")
    n_samples = cfg.n_final if n_samples is None else n_samples
    n_d, L = pc.n_d(sp), sp.L
    base = _pilot_base(cfg.master_seed, n_d, sp.K, pc.kind, pc.n_p,
                       float(pc.P_p).hex(), float(pp.Pprime).hex(),
                       n_samples, cfg.threads)
    Gv, GE, lam = _pilot_t_prep(base, t)
    S = Gv.shape[0]

    def phi(u_vec, r_vec):
        return _q1_phi(Gv, GE, lam, n_d, L, nu, u_vec, r_vec)

    if r_grid is None:
        r_grid = np.concatenate([[0.0], np.geomspace(1e-3, 10.0, 10)])
    if fixed_ur is not None:
        u0, r0 = fixed_ur
        best = phi(np.full(S, float(u0)), np.full(S, float(r0)))
        if not np.all(np.isfinite(best)):
            raise ValueError("fixed (u, r) is infeasible for some samples")
    elif u_rule == "full2d":
        best = np.full(S, np.inf)
        for u0 in np.linspace(0.0, 2.0, 17):
            vals = optim.minimize_1d(lambda r: phi(np.full(S, float(u0)), r),
                                     S, r_grid, golden_iters=8)
            best = np.minimum(best, vals)
        best = np.where(np.isfinite(best), best, 0.0)
    else:
        f = lambda r: phi(0.5 * (1.0 + r), r)
        best = optim.minimize_1d(f, S, r_grid, golden_iters=12)
        # (u, r) = (0, 0) has D = I: always feasible
        best = np.where(np.isfinite(best), best, 0.0)
    lw = log_binom(sp.K, t) + t * sp.ln_m
    return lw + mc.log_mean_from_values(best).mean


def q2t_pilot(sp: SystemParams, pc: PilotConfig, pp: PowerPoint, nu: float,
              cfg: mc.McConfig, *, n_samples: int | None = None,
              eta_grid_size: int = 24) -> float:
    """min of the Chernoff-determinant form and the (eta, gamma) form."""
    n_samples = cfg.n_final if n_samples is None else n_samples
    n_d, L, K = pc.n_d(sp), sp.L, sp.K
    base = _pilot_base(cfg.master_seed, n_d, sp.K, pc.kind, pc.n_p,
                       float(pc.P_p).hex(), float(pp.Pprime).hex(),
                       n_samples, cfg.threads)
    lam = base[3]
    S = lam.shape[0]
    lam_max = np.maximum(lam[:, -1], 1e-300)
    # form 1: per-sample min over delta in [0, 1/(1 + lam_max))
    dmax = 1.0 / (1.0 + lam_max)

    def obj(frac):
        delta = frac * dmax
        with np.errstate(invalid="ignore", divide="ignore"):
            ln_det = np.sum(np.log(np.maximum(
                1.0 - delta[:, None] * (1.0 + lam), 1e-300)), axis=-1)
        return -delta * n_d * L * nu - L * ln_det

    vals = optim.minimize_1d(obj, S, np.linspace(0.0, 0.999, 12),
                             golden_iters=12)
    form1 = math.exp(min(mc.log_mean_from_values(vals).mean, 700.0))
    # form 2: min over eta in [0, nu]
    n_star = min(K, n_d)
    etas = np.linspace(0.0, nu, eta_grid_size) if nu > 0 else np.array([0.0])
    arg = n_d * L * (nu - etas[:, None]) / lam_max
    eterm = np.mean(linalg.reg_gamma_vec(L * n_star, arg), axis=-1)
    form2 = float(np.min(2.0 - linalg.reg_gamma_vec(n_d * L, n_d * L * etas)
                         - eterm))
    return min(form1, form2, 1.0)


def p0_pilot(sp: SystemParams, pc: PilotConfig, pp: PowerPoint) -> float:
    """K P[||c||^2 > n P - n_p P_p] with c of length n_d at variance P'."""
    n_d = pc.n_d(sp)
    return sp.K * model.power_tail_prob(n_d, n_d * pp.P, pp.Pprime)


def pupe_pilot_upper(sp: SystemParams, pc: PilotConfig, pp: PowerPoint,
                     cfg: mc.McConfig, *, nu_grid=None,
                     n_samples: int | None = None,
                     eps_hint: float | None = None,
                     t_max: int | None = None,
                     stop_above: float | None = None) -> BoundResult:
    """p0 + sum_t (t/K) min{1, p_t}, p_t = min over the nu grid of q1 + q2.

    ``pp.P`` is the maximum per-symbol data power (n P - n_p P_p) / n_d.
    """
    if sp.ka != sp.K:
        raise ValueError("pilot bound assumes all users active")
    if nu_grid is None:
        nu_grid = np.arange(0.2, 3.001, 0.1)
    K = sp.K
    p0 = p0_pilot(sp, pc, pp)
    q2_by_nu = {float(nu): q2t_pilot(sp, pc, pp, float(nu), cfg,
                                     n_samples=n_samples)
                for nu in nu_grid}
    total = p0
    per_t = []
    argmin = {"Pprime": pp.Pprime, "n_p": pc.n_p, "P_p": pc.P_p}
    tiny_run = 0
    truncated_at = None
    upper_t = K if t_max is None else min(t_max, K)
    for t in range(1, upper_t + 1):
        if stop_above is not None and total > stop_above:
            truncated_at = t - 1
            break
        best, arg = math.inf, None
        for nu, q2 in sorted(q2_by_nu.items(), key=lambda kv: kv[1]):
            if q2 >= min(1.0, best):
                continue
            lq1 = q1t_pilot(sp, pc, pp, t, nu, cfg, n_samples=n_samples)
            tot = math.exp(min(lq1, 700.0)) + q2
            if tot < best:
                best, arg = tot, nu
        term = (t / K) * min(1.0, best)
        per_t.append((t, term))
        total += term
        argmin.setdefault("per_t", {})[t] = {"nu": arg}
        tail = (K * (K + 1) / 2 - t * (t + 1) / 2) / K
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


def ebmin_pilot(sp: SystemParams, eps: float, cfg: mc.McConfig, *,
                n_p: int, kind: str = "orthogonal", alphas=None,
                eb_db_range=(-10.0, 40.0), coarse_db: float = 0.1,
                refine_db: float = 0.01, pprime_divisors=(1.05, 1.2, 2.0),
                nu_grid=None, n_samples: int | None = None,
                t_max: int | None = None) -> BoundResult:
    """Minimum E_b for the pilot scheme.

    ``alphas`` grids the pilot energy fraction alpha = n_p P_p / (n P)
    (defaults to {0.05, ..., 0.95}); ``alphas=None`` with kind-P_p semantics
    is expressed by passing an explicit list.  The reported E_b uses the total
    budget n P.
    """
    from . import search as search_mod
    if alphas is None:
        alphas = np.arange(0.05, 0.951, 0.05)
    n_d = sp.n - n_p

    def feasible(db: float) -> bool:
        P = sp.J * 10 ** (db / 10.0) / sp.n
        for alpha in alphas:
            P_p = alpha * sp.n * P / n_p
            P_d = (1.0 - alpha) * sp.n * P / n_d
            if P_d <= 0 or P_p <= 0:
                continue
            pc = PilotConfig(n_p=n_p, P_p=P_p, kind=kind)
            try:
                pc.validate(sp, P)
            except ValueError:
                continue
            for c in pprime_divisors:
                pp = PowerPoint(P=P_d, Pprime=P_d / c)
                res = pupe_pilot_upper(sp, pc, pp, cfg, nu_grid=nu_grid,
                                       n_samples=n_samples, eps_hint=eps,
                                       t_max=t_max, stop_above=eps)
                if res.value <= eps:
                    return True
        return False

    db, non_monotone = search_mod.first_feasible_db(
        feasible, eb_db_range[0], eb_db_range[1], coarse_db, refine_db)
    if db is None:
        return BoundResult(value=math.inf, feasible=False,
                           flags={"infeasible_range": eb_db_range})
    P = sp.J * 10 ** (db / 10.0) / sp.n
    flags = {"non_monotone_db": non_monotone} if non_monotone else {}
    return BoundResult(value=db, p=P, eb_db=db, flags=flags,
                       argmin_params={"n_p": n_p, "kind": kind})
