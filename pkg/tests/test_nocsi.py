"""Tests for the no-CSI (known K_a) achievability and converse bounds."""

import math

import numpy as np
import pytest

from ramimo import linalg, mc, model, nocsi
from ramimo.csir import GoodRegionParams
from ramimo.model import KnownKa, PowerPoint, SystemParams

CFG = mc.McConfig(n_search=200, n_final=400, master_seed=321)


def small_sp(n=4, J=2, K=6, L=2, ka=3):
    return SystemParams(n=n, J=J, K=K, L=L, activity=KnownKa(ka))


class TestMlMetric:
    def test_zero_codewords(self):
        rng = np.random.default_rng(1)
        Y = mc.standard_cn(rng, 5, 3)
        g = nocsi.ml_metric_nocsi(Y, np.zeros((5, 0)))
        assert g == pytest.approx(float(np.sum(np.abs(Y) ** 2)), abs=1e-10)

    def test_zero_observation(self):
        rng = np.random.default_rng(2)
        A = mc.standard_cn(rng, 5, 2)
        g = nocsi.ml_metric_nocsi(np.zeros((5, 3)), A)
        expected = 3 * np.linalg.slogdet(np.eye(5) + A @ A.conj().T)[1]
        assert g == pytest.approx(float(expected), abs=1e-10)

    def test_dense_oracle(self):
        rng = np.random.default_rng(3)
        Y = mc.standard_cn(rng, 2, 2)
        A = mc.standard_cn(rng, 2, 2)
        F = np.eye(2) + A @ A.conj().T
        expected = (2 * math.log(abs(np.linalg.det(F)))
                    + np.real(np.trace(np.linalg.inv(F) @ Y @ Y.conj().T)))
        assert nocsi.ml_metric_nocsi(Y, A) == pytest.approx(expected, abs=1e-10)


class TestQ1:
    def test_scalar_hand_evaluation(self):
        # n = L = 1, K = K_a = 2, t = 1, fixed (u, r) = (0.5, 0):
        # exponent = 0.5 (ln F - ln F') - ln B, B = 0.5 + 0.5 F / F'
        sp = SystemParams(n=1, J=1, K=2, L=1, activity=KnownKa(2))
        pp = PowerPoint(P=2.0, Pprime=1.1)
        gr = GoodRegionParams(omega=0.3, nu=0.8)
        n_samples = 48
        got = nocsi.q1t_nocsi(sp, pp, 1, gr, CFG, n_samples=n_samples,
                              fixed_ur=(0.5, 0.0))
        logs = []
        for i in range(n_samples):
            rng = mc.stream_rng(CFG.master_seed, ("gr_q1", 2, 1), i)
            A = math.sqrt(pp.Pprime) * mc.standard_cn(rng, 1, 3)
            a_surv, a_s1, a_fa = A[0, 0], A[0, 1], A[0, 2]
            F = 1 + abs(a_surv) ** 2 + abs(a_s1) ** 2
            F1 = 1 + abs(a_surv) ** 2
            Fp = F1 + abs(a_fa) ** 2
            B = 0.5 + 0.5 * F / Fp - 0.0  # r = 0 kills the omega term
            logs.append(0.5 * math.log(F) - 0.5 * math.log(Fp) - math.log(B))
        lc = nocsi._log_c_t(sp, 1)
        expected = lc + math.log(np.mean(np.exp(logs)))
        assert got == pytest.approx(expected, abs=1e-10)

    def test_zero_ur_gives_prefactor(self):
        sp = small_sp()
        pp = PowerPoint(P=1.0, Pprime=0.8)
        gr = GoodRegionParams(omega=0.4, nu=0.6)
        got = nocsi.q1t_nocsi(sp, pp, 2, gr, CFG, n_samples=16,
                              fixed_ur=(0.0, 0.0))
        assert got == pytest.approx(nocsi._log_c_t(sp, 2), abs=1e-12)

    def test_omega_one_u_equals_r_cancellation(self):
        # at omega = 1 and u = r the (u - r) ln|F| term cancels and the
        # exponent is L(r n nu + r ln F1 - r ln F' - ln B),
        # B = 1 + r F/F' - r F/F1
        sp = SystemParams(n=1, J=1, K=2, L=1, activity=KnownKa(2))
        pp = PowerPoint(P=2.0, Pprime=1.0)
        r0 = 0.05  # small enough to keep B > 0 on every sample
        nu = 0.5
        gr = GoodRegionParams(omega=1.0, nu=nu)
        got = nocsi.q1t_nocsi(sp, pp, 1, gr, CFG, n_samples=32,
                              fixed_ur=(r0, r0))
        logs = []
        for i in range(32):
            rng = mc.stream_rng(CFG.master_seed, ("gr_q1", 2, 1), i)
            A = math.sqrt(pp.Pprime) * mc.standard_cn(rng, 1, 3)
            a_surv, a_s1, a_fa = A[0, 0], A[0, 1], A[0, 2]
            F = 1 + abs(a_surv) ** 2 + abs(a_s1) ** 2
            F1 = 1 + abs(a_surv) ** 2
            Fp = F1 + abs(a_fa) ** 2
            B = 1.0 + r0 * F / Fp - r0 * F / F1
            logs.append(r0 * nu + r0 * math.log(F1) - r0 * math.log(Fp)
                        - math.log(B))
        expected = nocsi._log_c_t(sp, 1) + math.log(np.mean(np.exp(logs)))
        assert got == pytest.approx(expected, abs=1e-10)


class TestQ2:
    def test_large_nu_leaves_tail_only(self):
        sp = small_sp()
        pp = PowerPoint(P=1.0, Pprime=0.8)
        omega = 0.5
        nu = 1e9  # gamma argument <= 0 for every sample: E-term vanishes
        got = nocsi.q2t_nocsi(sp, pp, 1, omega, nu, CFG, n_samples=32,
                              delta_grid=[0.25])
        expected = (math.comb(sp.ka, 1)
                    * float(linalg.reg_gamma_upper_vec(sp.n * sp.L,
                                                       sp.n * sp.L * 1.25)))
        assert got == pytest.approx(expected, rel=1e-9)

    def test_delta_min_property(self):
        sp = small_sp()
        pp = PowerPoint(P=1.0, Pprime=0.8)
        full = nocsi.q2t_nocsi(sp, pp, 1, 0.5, 1.2, CFG, n_samples=64)
        at_one = nocsi.q2t_nocsi(sp, pp, 1, 0.5, 1.2, CFG, n_samples=64,
                                 delta_grid=[1.0])
        assert full <= at_one + 1e-12

    def test_omega_zero_closed_form(self):
        sp = small_sp(n=2, L=1)
        pp = PowerPoint(P=1.0, Pprime=0.5)
        got = nocsi.q2t_nocsi(sp, pp, 1, 0.0, 1.5, CFG)
        expected = float(linalg.reg_gamma_upper_vec(2, 3.0))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_bound_dominates_simulated_region_event(self):
        # t = 1, n = 2, L = 1: direct simulation of P[G^c] with explicit H, Z
        n, L, ka, t = 2, 1, 2, 1
        sp = SystemParams(n=n, J=1, K=3, L=L, activity=KnownKa(ka))
        pp = PowerPoint(P=0.4, Pprime=0.2)
        omega, nu = 0.5, 1.8
        trials = 30_000
        rng = np.random.default_rng(7)
        hits = 0
        for i in range(trials):
            A = math.sqrt(pp.Pprime) * mc.standard_cn(rng, n, ka)
            H = mc.standard_cn(rng, ka, L)
            Z = mc.standard_cn(rng, n, L)
            Y = A @ H + Z
            g_full = nocsi.ml_metric_nocsi(Y, A)
            bad = False
            for s1 in range(ka):
                keep = [k for k in range(ka) if k != s1]
                g_sub = nocsi.ml_metric_nocsi(Y, A[:, keep])
                if g_full > omega * g_sub + nu * n * L:
                    bad = True
                    break
            hits += bad
        phat = hits / trials
        se = math.sqrt(max(phat * (1 - phat), 1e-12) / trials)
        bound = nocsi.q2t_nocsi(sp, pp, t, omega, nu, CFG, n_samples=400)
        assert bound >= phat - 3 * se


class TestPupe:
    def test_all_terms_forced_to_one(self):
        # grid {(0, 0)}: q2 = 1 everywhere so every p_t clamps to 1
        sp = small_sp(ka=3)
        pp = PowerPoint(P=1.0, Pprime=0.9)
        res = nocsi.pupe_nocsi_upper(sp, pp, CFG, gr_grid=[(0.0, 0.0)],
                                     n_samples=16)
        p0 = model.p0_power_violation(sp, pp)
        assert res.value == pytest.approx(p0 + (sp.ka + 1) / 2.0, abs=1e-12)

    def test_crn_monotone_in_power(self):
        sp = small_sp(n=32, ka=2, K=3)
        grid = [(0.0, 1.1), (0.0, 1.4), (0.5, 1.1)]
        vals = []
        for P in (0.5, 1.0, 2.0, 4.0):
            pp = PowerPoint(P=P, Pprime=P / 1.2)
            vals.append(nocsi.pupe_nocsi_upper(sp, pp, CFG, gr_grid=grid,
                                               n_samples=96).value)
        assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


class TestConverse:
    def test_single_user_exponential_closed_form(self):
        # L = 1: bound reduces to M <= (1 - eps)^{-(1 + (n+1) P)}
        got = nocsi.nocsi_single_user_log_m_max(1, 1.0, 1, 0.5)
        assert got == pytest.approx(math.log(8.0), rel=1e-12)
        for n, P, eps in [(50, 0.3, 0.01), (10, 2.0, 0.2)]:
            got = nocsi.nocsi_single_user_log_m_max(n, P, 1, eps)
            expected = -(1 + (n + 1) * P) * math.log1p(-eps)
            assert got == pytest.approx(expected, rel=1e-9)

    def test_vacuous_fano_when_b1_nonpositive(self):
        sp = SystemParams(n=20, J=1, K=4, L=2, activity=KnownKa(4))
        res = nocsi.nocsi_converse_min_power(sp, 0.49, mode="closed")
        assert res.flags.get("fano_at_floor")

    def test_digamma_branches_agree_at_ka_equals_n(self):
        n = ka = 7
        P = 0.8
        a = sum(nocsi.digamma(n - i) * math.log2(math.e)
                + math.log2(P + 1.0 / (n - i)) for i in range(ka))
        b = sum(nocsi.digamma(ka - i) * math.log2(math.e)
                + math.log2(P + 1.0 / (ka - i)) for i in range(n))
        assert a == pytest.approx(b, abs=1e-9)
        assert nocsi.nocsi_logdet_lower_bits(n, ka, P) == pytest.approx(a, abs=1e-12)

    def test_mc_logdet_dominates_digamma_bound(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = int(rng.integers(2, 30))
            ka = int(rng.integers(1, 30))
            P = float(rng.uniform(0.05, 3.0))
            eigs = nocsi._wishart_eig_bank(17, n, ka, 300)
            per = np.sum(np.log2(1.0 + P * eigs), axis=-1)
            mean, se = float(np.mean(per)), float(np.std(per, ddof=1) / math.sqrt(300))
            assert mean >= nocsi.nocsi_logdet_lower_bits(n, ka, P) - 3 * se

    def test_mc_mode_at_least_closed(self):
        sp = SystemParams(n=60, J=12, K=8, L=4, activity=KnownKa(8))
        cfg = mc.McConfig(n_search=400, n_final=400, master_seed=5)
        r_mc = nocsi.nocsi_converse_min_power(sp, 0.01, cfg, mode="mc")
        r_cl = nocsi.nocsi_converse_min_power(sp, 0.01, mode="closed")
        assert r_mc.p >= r_cl.p * (1.0 - 0.02)
