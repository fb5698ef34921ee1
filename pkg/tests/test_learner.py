import numpy as np
import pytest

from greybox.dataset import Sample, build_data_matrix, cost_J
from greybox.errors import SolverFailure
from greybox.learner import (LearnReport, learn_constraint_modified,
                             learn_cost_modified, learn_least_squares)
from greybox.model import LtiSystem

from conftest import random_hurwitz


def make_system(n, l, rng, S_eta=None, hurwitz_margin=0.3):
    A = random_hurwitz(rng, n, hurwitz_margin)
    S_eta = np.eye(n) if S_eta is None else np.asarray(S_eta, dtype=float)
    return LtiSystem(A=A, B_u=rng.normal(size=(n, l)), S_eta=S_eta,
                     B_omega=np.zeros((n, 1)), C=np.eye(n), D_nu=np.eye(n))


def synth_samples(rng, sys, Theta, B, N, noise=0.0):
    n, l = sys.dims.n, sys.dims.l
    out = []
    for i in range(N):
        x = rng.normal(size=n)
        u = rng.normal(size=l)
        eta = Theta @ x + B @ u + noise * rng.normal(size=Theta.shape[0])
        out.append(Sample(x_hat=x, u=u, eta_hat=eta, t=5.0 + i))
    return out


def stable_target(rng, sys):
    """A Theta* such that A + S_eta Theta* stays Hurwitz."""
    n_eta, n = sys.dims.n_eta, sys.dims.n
    while True:
        Theta = 0.2 * rng.normal(size=(n_eta, n))
        if np.linalg.eigvals(sys.A + sys.S_eta @ Theta).real.max() < -0.05:
            return Theta


class TestCostModified:
    def test_noiseless_data_recovers_optimal_cost(self):
        rng = np.random.default_rng(10)
        sys = make_system(3, 1, rng)
        Theta = stable_target(rng, sys)
        B = 0.3 * rng.normal(size=(3, 1))
        samples = synth_samples(rng, sys, Theta, B, N=60)
        dm = build_data_matrix(samples, sys, lift=True, t_min=None)
        rep = learn_cost_modified(sys, dm)
        assert rep.status == "optimal"
        assert rep.achieved_J <= cost_J(dm, Theta, B) + 1e-4
        assert rep.spectral_abscissa < 0

    def test_zero_data_still_certifies_stability(self):
        rng = np.random.default_rng(1)
        sys = make_system(2, 1, rng)
        zeros = [Sample(x_hat=np.zeros(2), u=np.zeros(1), eta_hat=np.zeros(2),
                        t=float(i)) for i in range(3)]
        dm = build_data_matrix(zeros, sys, lift=True, t_min=None)
        assert not dm.D.any()
        rep = learn_cost_modified(sys, dm)
        assert rep.spectral_abscissa < 0
        assert rep.achieved_J <= rep.trace_W + 1e-9

    def test_requires_lifted_layout(self):
        rng = np.random.default_rng(2)
        sys = make_system(2, 1, rng, S_eta=[[1.0], [0.0]])
        samples = synth_samples(rng, sys, np.zeros((1, 2)), np.zeros((1, 1)), 5)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        with pytest.raises(ValueError, match="lifted"):
            learn_cost_modified(sys, dm)

    def test_appendix_bound_holds_at_optimum(self):
        # the surrogate lower bound 2P - W^-1 <= P W P must hold pointwise,
        # and the cost block built with the true product must stay PSD
        rng = np.random.default_rng(4)
        sys = make_system(3, 1, rng)
        Theta = stable_target(rng, sys)
        samples = synth_samples(rng, sys, Theta, np.zeros((3, 1)), 80, noise=0.05)
        dm = build_data_matrix(samples, sys, lift=True, t_min=None)
        rep = learn_cost_modified(sys, dm)
        P = rep.model.certificate
        # reconstruct W from the certified trace via re-solving is overkill;
        # re-derive S, R and W via the public quantities instead
        S = P @ rep.model.Theta_l
        R = P @ rep.model.B_l
        # rebuild a W consistent with the bound: use the certified upper bound
        # matrix from a fresh solve to keep this purely a property check
        from greybox.sdp import SdpProblem

        n, l = 3, 1
        Dt = dm.D_factor
        k = Dt.shape[0]
        p = SdpProblem()
        Pv = p.sym("P", n)
        Sv = p.mat("S", n, n)
        Rv = p.mat("R", n, l)
        Wv = p.sym("W", n)
        p.add_lmi("stab", sys.A.T @ Pv + Pv @ sys.A + Sv.T + Sv, "<0")
        Ttil = p.block([[Sv, Rv, -1.0 * Pv]])
        p.add_lmi("cost", p.block([
            [2.0 * Pv, Ttil @ Dt.T, np.eye(n)],
            [None, np.eye(k), np.zeros((k, n))],
            [None, None, Wv]]), ">=0")
        p.add_lmi("P_pd", Pv, ">0")
        p.minimize(Wv.trace())
        sol = p.solve()
        P, S, R, W = (sol.values[v] for v in ("P", "S", "R", "W"))
        PWP = P @ W @ P
        lower = 2 * P - np.linalg.inv(W)
        scale = 1.0 + np.abs(np.linalg.eigvalsh(PWP)).max()
        assert np.linalg.eigvalsh(PWP - lower).min() >= -1e-6 * scale
        Ttil_v = np.hstack([S, R, -P])
        substituted = np.block([
            [PWP, Ttil_v @ Dt.T],
            [Dt @ Ttil_v.T, np.eye(k)]])
        sub_scale = 1.0 + np.abs(np.linalg.eigvalsh(substituted)).max()
        assert np.linalg.eigvalsh(substituted).min() >= -1e-6 * sub_scale


class TestConstraintModified:
    def test_exact_data_near_optimal_with_certificate(self):
        rng = np.random.default_rng(20)
        A = -np.eye(2)
        sys = LtiSystem(A=A, B_u=rng.normal(size=(2, 1)), S_eta=np.eye(2),
                        B_omega=np.zeros((2, 1)), C=np.eye(2), D_nu=np.eye(2))
        Theta = stable_target(rng, sys)
        B = 0.2 * rng.normal(size=(2, 1))
        samples = synth_samples(rng, sys, Theta, B, 50)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        rep = learn_constraint_modified(sys, dm)
        assert rep.achieved_J <= cost_J(dm, Theta, B) + 1e-4
        Q = rep.model.certificate
        Acl = sys.A + sys.S_eta @ rep.model.Theta_l
        assert np.linalg.eigvalsh(Acl @ Q + Q @ Acl.T).max() < 0
        assert rep.gamma_bar is not None

    def test_nothing_to_learn_returns_near_zero(self):
        rng = np.random.default_rng(21)
        sys = make_system(2, 1, rng, S_eta=[[1.0], [0.0]])
        samples = synth_samples(rng, sys, np.zeros((1, 2)), np.zeros((1, 1)), 40)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        rep = learn_constraint_modified(sys, dm)
        assert rep.achieved_J <= 1e-6
        assert np.linalg.norm(rep.model.Theta_l) <= 1e-3 * np.linalg.norm(sys.A)

    def test_rejects_unstable_known_dynamics(self):
        rng = np.random.default_rng(22)
        sys = LtiSystem(A=[[0.1, 0.0], [0.0, -1.0]], B_u=np.zeros((2, 1)),
                        S_eta=np.eye(2), B_omega=np.zeros((2, 1)),
                        C=np.eye(2), D_nu=np.eye(2))
        samples = synth_samples(rng, sys, np.zeros((2, 2)), np.zeros((2, 1)), 5)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        with pytest.raises(ValueError, match="Hurwitz"):
            learn_constraint_modified(sys, dm)

    def test_all_gamma_infeasible_reported(self):
        rng = np.random.default_rng(23)
        sys = LtiSystem(A=-0.01 * np.eye(2), B_u=np.zeros((2, 1)),
                        S_eta=np.eye(2), B_omega=np.zeros((2, 1)),
                        C=np.eye(2), D_nu=np.eye(2))
        samples = synth_samples(rng, sys, np.zeros((2, 2)), np.zeros((2, 1)), 5)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        with pytest.raises(SolverFailure, match="every gamma_bar"):
            learn_constraint_modified(sys, dm, gamma_grid=[1e15])

    def test_line_search_prefers_smaller_gamma_on_ties(self):
        rng = np.random.default_rng(24)
        sys = make_system(2, 0, rng)
        samples = synth_samples(rng, sys, np.zeros((2, 2)), np.zeros((2, 0)), 10)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        rep = learn_constraint_modified(sys, dm, gamma_grid=[0.5, 1.0, 2.0])
        # zero-uncertainty data: every gamma achieves (near) zero cost
        assert rep.gamma_bar == 0.5


class TestLeastSquares:
    def test_exact_interpolation(self):
        rng = np.random.default_rng(30)
        sys = make_system(3, 2, rng)
        Theta = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        samples = synth_samples(rng, sys, Theta, B, 60)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        rep = learn_least_squares(sys, dm)
        np.testing.assert_allclose(rep.model.Theta_l, Theta, atol=1e-8)
        np.testing.assert_allclose(rep.model.B_l, B, atol=1e-8)
        assert rep.trace_W is None and rep.model.certificate is None

    def test_rank_deficient_regressor_flagged(self):
        rng = np.random.default_rng(31)
        sys = make_system(3, 0, rng)
        x = rng.normal(size=3)
        samples = [Sample(x_hat=x, u=np.zeros(0), eta_hat=np.zeros(3), t=i)
                   for i in range(5)]
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        rep = learn_least_squares(sys, dm)
        assert rep.diagnostics["regressor_rank_deficient"]

    def test_reports_positive_abscissa_when_fit_is_unstable(self):
        rng = np.random.default_rng(32)
        sys = make_system(2, 0, rng)
        Theta_bad = np.array([[3.0, 0.0], [0.0, 3.0]])  # destabilizing truth
        samples = synth_samples(rng, sys, Theta_bad, np.zeros((2, 0)), 30)
        dm = build_data_matrix(samples, sys, lift=False, t_min=None)
        rep = learn_least_squares(sys, dm)
        assert rep.spectral_abscissa > 0  # reported, not raised


class TestCrossRouteProperties:
    def _shared(self, seed=40, noise=0.05):
        rng = np.random.default_rng(seed)
        sys = make_system(3, 1, rng)
        Theta = stable_target(rng, sys)
        B = 0.2 * rng.normal(size=(3, 1))
        samples = synth_samples(rng, sys, Theta, B, 80, noise=noise)
        dm_l = build_data_matrix(samples, sys, lift=True, t_min=None)
        dm_p = build_data_matrix(samples, sys, lift=False, t_min=None)
        return sys, dm_l, dm_p

    def test_certified_bound_and_dominance(self):
        sys, dm_l, dm_p = self._shared()
        r1 = learn_cost_modified(sys, dm_l)
        r2 = learn_constraint_modified(sys, dm_p)
        ls_l = learn_least_squares(sys, dm_l)
        ls_p = learn_least_squares(sys, dm_p)
        for rep in (r1, r2):
            assert rep.achieved_J <= rep.trace_W * (1 + 1e-6) + 1e-9
            assert rep.spectral_abscissa < 0
        assert ls_l.achieved_J <= r1.achieved_J + 1e-8 * (1 + ls_l.achieved_J)
        assert ls_p.achieved_J <= r2.achieved_J + 1e-8 * (1 + ls_p.achieved_J)

    def test_scaling_robustness(self):
        # scaling every sample by 1e3 must leave the recovered gains intact
        rng = np.random.default_rng(50)
        sys = make_system(3, 1, rng)
        Theta = stable_target(rng, sys)
        samples = synth_samples(rng, sys, Theta, np.zeros((3, 1)), 80, noise=0.02)
        scaled = [Sample(x_hat=1e3 * s.x_hat, u=1e3 * s.u,
                         eta_hat=1e3 * s.eta_hat, t=s.t) for s in samples]
        dm = build_data_matrix(samples, sys, lift=True, t_min=None)
        dm_s = build_data_matrix(scaled, sys, lift=True, t_min=None)
        r = learn_cost_modified(sys, dm)
        r_s = learn_cost_modified(sys, dm_s)
        rel = (np.linalg.norm(r.model.Theta_l - r_s.model.Theta_l)
               / np.linalg.norm(r.model.Theta_l))
        assert rel < 1e-4


class TestReportSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(60)
        sys = make_system(2, 1, rng)
        Theta = stable_target(rng, sys)
        samples = synth_samples(rng, sys, Theta, np.zeros((2, 1)), 30, noise=0.1)
        dm = build_data_matrix(samples, sys, lift=True, t_min=None)
        rep = learn_cost_modified(sys, dm)
        path = tmp_path / "report.json"
        rep.save(path)
        back = LearnReport.load(path)
        np.testing.assert_array_equal(back.model.Theta_l, rep.model.Theta_l)
        np.testing.assert_array_equal(back.model.certificate,
                                      rep.model.certificate)
        assert back.trace_W == rep.trace_W
        assert back.achieved_J == rep.achieved_J
