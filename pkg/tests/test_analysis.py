import numpy as np
import pytest

from greybox.analysis import (CertificateReport, h2_norm, h2_norm_quadrature,
                              hinf_norm, hinf_norm_grid, spectral_abscissa,
                              verify_certificate)
from greybox.errors import GreyboxError
from greybox.model import augment

from conftest import random_hurwitz


class TestSpectralAbscissa:
    def test_negative_identity(self):
        assert spectral_abscissa(-np.eye(3)) == pytest.approx(-1.0)

    def test_marginal_rotation(self):
        assert spectral_abscissa([[0.0, 1.0], [-1.0, 0.0]]) == pytest.approx(0.0, abs=1e-12)

    def test_bench_matches_characteristic_polynomial_roots(self, bench):
        # independent oracle: roots of det(sI - A) via companion form
        coeffs = np.poly(bench.A)
        roots = np.roots(coeffs)
        assert spectral_abscissa(bench.A) == pytest.approx(
            roots.real.max(), rel=1e-9)
        assert spectral_abscissa(bench.A) < 0

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            spectral_abscissa(np.zeros((2, 3)))


class TestHinfNorm:
    def test_first_order_lag_dc_gain(self):
        val = hinf_norm([[-1.0]], [[1.0]], [[1.0]])
        assert val == pytest.approx(1.0, rel=1e-5)

    def test_resonant_peak_closed_form(self):
        # 1/(s^2 + 2 zeta s + 1) with zeta = 0.1:
        # peak 1/(2 zeta sqrt(1 - zeta^2)) at w = sqrt(1 - 2 zeta^2)
        zeta = 0.1
        N = [[0.0, 1.0], [-1.0, -2 * zeta]]
        B = [[0.0], [1.0]]
        C = [[1.0, 0.0]]
        exact = 1.0 / (2 * zeta * np.sqrt(1 - zeta ** 2))
        assert hinf_norm(N, B, C) == pytest.approx(exact, rel=1e-5)
        _, peak_freq = hinf_norm_grid(N, B, C)
        assert peak_freq == pytest.approx(np.sqrt(1 - 2 * zeta ** 2), rel=1e-2)

    def test_non_hurwitz_rejected(self):
        with pytest.raises(GreyboxError):
            hinf_norm([[1.0]], [[1.0]], [[1.0]])

    def test_zero_gain(self):
        assert hinf_norm(-np.eye(2), np.zeros((2, 1)), np.ones((1, 2))) == 0.0


class TestH2Norm:
    def test_first_order_lag(self):
        # |1/(1+iw)|^2 integrates to pi, so the norm is 1/sqrt(2)
        assert h2_norm([[-1.0]], [[1.0]], [[1.0]]) == pytest.approx(
            1 / np.sqrt(2), rel=1e-12)

    def test_zero_output(self):
        assert h2_norm(-np.eye(2), np.eye(2), np.zeros((1, 2))) == 0.0

    def test_non_hurwitz_rejected(self):
        with pytest.raises(GreyboxError):
            h2_norm([[0.5]], [[1.0]], [[1.0]])

    def test_quadrature_matches_closed_form(self):
        assert h2_norm_quadrature([[-1.0]], [[1.0]], [[1.0]]) == pytest.approx(
            1 / np.sqrt(2), rel=1e-9)


class TestCrossValidation:
    def test_oracles_agree_on_random_stable_systems(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            A = random_hurwitz(rng, n, margin=rng.uniform(0.3, 1.0))
            B = rng.normal(size=(n, 2))
            C = rng.normal(size=(2, n))
            hb = hinf_norm(A, B, C)
            hg, _ = hinf_norm_grid(A, B, C)
            assert abs(hb - hg) <= 1e-3 * hb
            h2l = h2_norm(A, B, C)
            h2q = h2_norm_quadrature(A, B, C)
            assert abs(h2l - h2q) <= 1e-3 * h2l


class TestVerifyCertificate:
    def test_identity_plant_exact(self):
        rep = verify_certificate("thm1", A=-np.eye(2), Theta_l=np.zeros((2, 2)),
                                 B_l=np.zeros((2, 0)), S_eta_l=np.eye(2),
                                 P=np.eye(2))
        assert rep.ok()
        assert {e.name for e in rep.entries} == {"lyapunov", "P_pd"}

    def test_corrupted_parameters_detected(self):
        # negative control: flip the sign of a stabilizing correction
        A = np.array([[0.2]])  # unstable alone
        Theta_ok = np.array([[-1.0]])
        P = np.array([[1.0]])
        good = verify_certificate("thm1", A=A, Theta_l=Theta_ok,
                                  B_l=np.zeros((1, 0)), S_eta_l=np.eye(1), P=P)
        assert good.ok()
        bad = verify_certificate("thm1", A=A, Theta_l=-Theta_ok,
                                 B_l=np.zeros((1, 0)), S_eta_l=np.eye(1), P=P)
        assert not bad.ok()
        assert bad.worst().margin < 0

    def test_thm2_form_uses_congruence_side(self):
        A = -np.eye(2)
        rep = verify_certificate("thm2", A=A, S_eta=np.eye(2),
                                 Theta_l=np.zeros((2, 2)), Q=2 * np.eye(2))
        assert rep.ok()

    def test_prop1_entries_cover_all_constraints(self, small_sys):
        from greybox.estimator import design_filter

        aug = augment(small_sys, 1)
        fd = design_filter(aug, small_sys.D_nu, epsilon=1e-3, gamma_max=5.0)
        rep = verify_certificate("prop1", aug=aug, D_nu=fd.D_nu, E=fd.E, K=fd.K,
                                 Pi=fd.Pi, Z=fd.Z, lam=fd.lambda_star,
                                 gam=fd.gamma_star, epsilon=fd.epsilon,
                                 gamma_max=fd.gamma_max)
        names = {e.name for e in rep.entries}
        assert {"iss_decay", "hinf", "h2", "coupling", "Pi_pd",
                "gam_minus_trZ", "gam_pos", "lam_pos", "gam_cap"} == names
        assert rep.ok()

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            verify_certificate("thm3")

    def test_report_serializes(self):
        rep = CertificateReport(kind="thm1")
        rep.add("x", ">0", np.eye(2))
        d = rep.to_json_dict()
        assert d["kind"] == "thm1" and d["entries"][0]["margin"] == 1.0
