"""Tests for the pilot-assisted MMSE scheme bound."""

import math

import numpy as np
import pytest

from ramimo import linalg, mc, model, numerics, pilot
from ramimo.model import KnownKa, PowerPoint, SystemParams
from ramimo.pilot import PilotConfig

CFG = mc.McConfig(n_search=150, n_final=300, master_seed=555)


def allactive_sp(n=10, J=2, K=4, L=2):
    return SystemParams(n=n, J=J, K=K, L=L, activity=KnownKa(K))


class TestMmse:
    def test_orthogonal_closed_form(self):
        # n_p P_p = 1: Sigma-hat = Sigma-tilde = I/2
        B = pilot.pilot_matrix(None, PilotConfig(n_p=3, P_p=1.0 / 3.0), 3)
        cov = pilot.mmse_covariances(B)
        assert np.allclose(cov.sig_hat, 0.5 * np.eye(3), atol=1e-12)
        assert np.allclose(cov.sig_tilde, 0.5 * np.eye(3), atol=1e-12)

    def test_zero_pilots(self):
        cov = pilot.mmse_covariances(np.zeros((2, 3)))
        assert np.allclose(cov.sig_hat, 0.0, atol=1e-14)
        assert np.allclose(cov.sig_tilde, np.eye(3), atol=1e-14)

    def test_sum_to_identity_and_inverse_oracle(self):
        rng = np.random.default_rng(3)
        B = mc.standard_cn(rng, 4, 5)
        cov = pilot.mmse_covariances(B)
        assert np.allclose(cov.sig_hat + cov.sig_tilde, np.eye(5), atol=1e-10)
        direct = np.linalg.inv(np.eye(5) + B.conj().T @ B)
        assert np.allclose(cov.sig_tilde, direct, atol=1e-10)

    def test_pilot_constructions(self):
        rng = np.random.default_rng(4)
        for kind, n_p, K in [("sphere", 3, 5), ("dft", 3, 5)]:
            B = pilot.pilot_matrix(rng, PilotConfig(n_p=n_p, P_p=0.7, kind=kind), K)
            norms = np.sum(np.abs(B) ** 2, axis=0)
            assert np.allclose(norms, n_p * 0.7, atol=1e-10)

    def test_config_validation(self):
        sp = allactive_sp()
        with pytest.raises(ValueError):
            PilotConfig(n_p=sp.K, P_p=1.0, kind="orthogonal").validate(sp, 0.01)
        with pytest.raises(ValueError):
            PilotConfig(n_p=3, P_p=1.0, kind="orthogonal").validate(sp, 10.0)


class TestQ1:
    def test_zero_ur_gives_prefactor(self):
        sp = allactive_sp()
        pc = PilotConfig(n_p=sp.K, P_p=0.5)
        pp = PowerPoint(P=1.0, Pprime=0.8)
        got = pilot.q1t_pilot(sp, pc, pp, 2, 0.9, CFG, n_samples=16,
                              fixed_ur=(0.0, 0.0))
        expected = numerics.log_binom(sp.K, 2) + 2 * sp.ln_m
        assert got == pytest.approx(expected, abs=1e-12)

    def test_exponent_matches_paper_matrix(self):
        # reconstruct per-sample sigma_1, sigma_2 and compare the engine's
        # exponent against -(L) ln|det_C(D)| with D in its complex form
        sp = allactive_sp(n=8, K=3, L=2)
        pc = PilotConfig(n_p=sp.K, P_p=0.6)
        pp = PowerPoint(P=1.0, Pprime=0.7)
        t, nu, u, r = 2, 0.8, 0.35, 0.15
        n_d = pc.n_d(sp)
        n_samples = 12
        got = pilot.q1t_pilot(sp, pc, pp, t, nu, CFG, n_samples=n_samples,
                              fixed_ur=(u, r))
        c2 = 1.0 / (1.0 + pc.n_p * pc.P_p)
        logs = []
        for i in range(n_samples):
            rng = mc.stream_rng(CFG.master_seed,
                                ("pilot_q1", sp.K, "orthogonal", pc.n_p), i)
            A = math.sqrt(pp.Pprime) * mc.standard_cn(rng, n_d, sp.K)
            Afa = math.sqrt(pp.Pprime) * mc.standard_cn(rng, n_d, sp.K)
            D_t = A[:, :t] - Afa[:, :t]
            s1 = (1.0 - c2) * D_t @ D_t.conj().T
            s2 = c2 * A @ A.conj().T
            Dc = ((1 + r) * np.eye(n_d) + u * (1 - u + r) * s1 + r * s2
                  - u * (u - r) * (s1 @ s2))
            sign, logdet = np.linalg.slogdet(Dc)
            assert sign.real > 0
            # the real-embedded determinant equals |det_C|^2
            emb = numerics.real_embed_log_det(numerics.real_embed(Dc))
            assert emb == pytest.approx(2 * logdet.real, rel=1e-8)
            logs.append(r * n_d * sp.L * nu - sp.L * logdet.real)
        lw = numerics.log_binom(sp.K, t) + t * sp.ln_m
        expected = lw + math.log(np.mean(np.exp(logs)))
        assert got == pytest.approx(expected, rel=1e-8)

    def test_origin_always_feasible(self):
        sp = allactive_sp()
        pc = PilotConfig(n_p=sp.K, P_p=2.0)
        pp = PowerPoint(P=3.0, Pprime=2.0)
        got = pilot.q1t_pilot(sp, pc, pp, 1, 1.0, CFG, n_samples=32)
        assert math.isfinite(got)
        # the searched minimum can never exceed the (0, 0) anchor value
        anchor = pilot.q1t_pilot(sp, pc, pp, 1, 1.0, CFG, n_samples=32,
                                 fixed_ur=(0.0, 0.0))
        assert got <= anchor + 1e-12


class TestQ2:
    def test_delta_zero_keeps_value_at_most_one(self):
        sp = allactive_sp()
        pc = PilotConfig(n_p=sp.K, P_p=0.5)
        pp = PowerPoint(P=1.0, Pprime=0.8)
        val = pilot.q2t_pilot(sp, pc, pp, 1.2, CFG, n_samples=64)
        assert 0.0 <= val <= 1.0

    def test_nu_zero_clamps_to_one(self):
        sp = allactive_sp()
        pc = PilotConfig(n_p=sp.K, P_p=0.5)
        pp = PowerPoint(P=1.0, Pprime=0.8)
        assert pilot.q2t_pilot(sp, pc, pp, 0.0, CFG, n_samples=32) == 1.0

    def test_bound_dominates_simulated_residual_event(self):
        # direct simulation of P[||Z_d + A H~||_F^2 > n_d L nu] with MMSE
        # error covariance Sigma-tilde
        sp = allactive_sp(n=6, K=3, L=2)
        pc = PilotConfig(n_p=sp.K, P_p=0.8)
        pp = PowerPoint(P=0.8, Pprime=0.4)
        nu = 1.6
        n_d = pc.n_d(sp)
        c2 = 1.0 / (1.0 + pc.n_p * pc.P_p)
        trials = 50_000
        rng = np.random.default_rng(21)
        hits = 0
        for _ in range(trials):
            A = math.sqrt(pp.Pprime) * mc.standard_cn(rng, n_d, sp.K)
            Ht = math.sqrt(c2) * mc.standard_cn(rng, sp.K, sp.L)
            Z = mc.standard_cn(rng, n_d, sp.L)
            resid = Z + A @ Ht
            hits += float(np.sum(np.abs(resid) ** 2)) > n_d * sp.L * nu
        phat = hits / trials
        se = math.sqrt(max(phat * (1 - phat), 1e-12) / trials)
        bound = pilot.q2t_pilot(sp, pc, pp, nu, CFG, n_samples=400)
        assert bound >= phat - 3 * se


class TestPupe:
    def test_all_terms_forced_to_one(self):
        # nu = 0 makes q2 = 1 at every grid point, so every p_t clamps to 1
        sp = allactive_sp(K=3)
        pc = PilotConfig(n_p=sp.K, P_p=0.5)
        pp = PowerPoint(P=1.0, Pprime=0.9)
        res = pilot.pupe_pilot_upper(sp, pc, pp, CFG, nu_grid=[0.0],
                                     n_samples=16)
        p0 = pilot.p0_pilot(sp, pc, pp)
        assert res.value == pytest.approx(p0 + (sp.K + 1) / 2.0, abs=1e-12)

    def test_useless_pilots_hurt(self):
        # tiny pilot power: worse bound than a balanced split (paired seeds)
        sp = allactive_sp(n=12, K=3, L=3)
        P_total = 2.0
        nu_grid = [0.9, 1.2, 1.5]

        def value(alpha):
            P_p = alpha * sp.n * P_total / sp.K
            n_d = sp.n - sp.K
            P_d = (1 - alpha) * sp.n * P_total / n_d
            pc = PilotConfig(n_p=sp.K, P_p=P_p)
            pp = PowerPoint(P=P_d, Pprime=P_d / 1.2)
            return pilot.pupe_pilot_upper(sp, pc, pp, CFG, nu_grid=nu_grid,
                                          n_samples=96).value

        assert value(0.001) >= value(0.4) - 1e-9

    def test_orthogonal_vs_sphere_regression_band(self):
        sp = allactive_sp(n=12, K=3, L=2)
        pp = PowerPoint(P=1.5, Pprime=1.0)
        vals = {}
        for kind in ("orthogonal", "sphere"):
            pc = PilotConfig(n_p=sp.K, P_p=1.0, kind=kind)
            vals[kind] = pilot.pupe_pilot_upper(sp, pc, pp, CFG,
                                                nu_grid=[1.0, 1.3],
                                                n_samples=96).value
        # same seed, same shapes: recorded tolerance band, not a theorem
        assert vals["orthogonal"] == pytest.approx(vals["sphere"], rel=0.5)


def test_ebmin_pilot_smoke():
    # the P' < P backoff tail needs either large n_d or a generous divisor
    sp = allactive_sp(n=32, J=2, K=3, L=4)
    res = pilot.ebmin_pilot(sp, 0.1, CFG, n_p=sp.K, alphas=[0.3, 0.5],
                            eb_db_range=(-5.0, 25.0), coarse_db=1.0,
                            refine_db=0.5, pprime_divisors=(2.0,),
                            nu_grid=[0.9, 1.2, 1.5], n_samples=64)
    assert res.feasible
    assert math.isfinite(res.value)
