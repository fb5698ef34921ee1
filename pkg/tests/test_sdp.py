import numpy as np
import pytest

from greybox.errors import SolverUnavailable
from greybox.sdp import SdpProblem


class TestSolveExamples:
    def test_trace_minimization_forced_identity(self):
        p = SdpProblem()
        W = p.sym("W", 2)
        p.add_lmi("W_ge_I", W - np.eye(2), ">=0")
        p.minimize(W.trace())
        sol = p.solve()
        assert sol.status == "optimal"
        assert sol.objective == pytest.approx(2.0, abs=1e-6)
        np.testing.assert_allclose(sol.values["W"], np.eye(2), atol=1e-6)

    def test_lyapunov_feasibility_stable_plant(self):
        p = SdpProblem()
        A = -np.eye(2)
        P = p.sym("P", 2)
        p.add_lmi("lyap", A.T @ P + P @ A, "<0")
        p.add_lmi("P_pd", P, ">0")
        p.minimize(P.trace())
        assert p.solve().status == "optimal"

    def test_lyapunov_solution_checked_by_eigensolver(self):
        A = np.array([[0.0, 1.0], [-1.0, -1.0]])
        p = SdpProblem()
        P = p.sym("P", 2)
        p.add_lmi("lyap", A.T @ P + P @ A, "<0")
        p.add_lmi("P_ge_I", P - np.eye(2), ">=0")
        p.minimize(P.trace())
        sol = p.solve()
        assert sol.status == "optimal"
        Pv = sol.values["P"]
        assert np.linalg.eigvalsh(A.T @ Pv + Pv @ A).max() < 0
        assert np.linalg.eigvalsh(Pv).min() > 0

    def test_antistable_plant_infeasible(self):
        p = SdpProblem()
        A = np.eye(2)
        P = p.sym("P", 2)
        p.add_lmi("lyap", A.T @ P + P @ A, "<0")
        p.add_lmi("P_ge_I", P - np.eye(2), ">=0")
        p.minimize(P.trace())
        assert p.solve().status == "infeasible"

    def test_round_trip_certification(self):
        # every optimal return must pass the substituted-block eigencheck
        rng = np.random.default_rng(0)
        for _ in range(5):
            A = rng.normal(size=(3, 3))
            A = A - (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(3)
            p = SdpProblem()
            P = p.sym("P", 3)
            p.add_lmi("lyap", A.T @ P + P @ A, "<0")
            p.add_lmi("P_ge_I", P - np.eye(3), ">=0")
            p.minimize(P.trace())
            sol = p.solve()
            assert sol.status == "optimal"
            for lmi in p.constraints:
                val = lmi.expr.value(_flatten(p, sol.values))
                sym = (val + val.T) / 2
                eigs = np.linalg.eigvalsh(sym)
                scale = 1.0 + np.abs(eigs).max()
                if lmi.sense in ("<0", "<=0"):
                    assert eigs.max() <= 1e-6 * scale
                else:
                    assert eigs.min() >= -1e-6 * scale


def _flatten(p, values):
    x = np.zeros(p._nparams)
    for v in p.variables:
        val = values[v.name]
        if v.kind == "scalar":
            x[v.offset] = val
        elif v.kind == "mat":
            x[v.offset:v.offset + v.nparams] = np.asarray(val).ravel()
        else:
            k = v.shape[0]
            idx = v.offset
            for i in range(k):
                for j in range(i, k):
                    x[idx] = val[i, j]
                    idx += 1
    return x


class TestModeling:
    def test_block_mirror_fills_transpose(self):
        p = SdpProblem()
        X = p.mat("X", 2, 1)
        blk = p.block([[np.eye(2), X], [None, np.ones((1, 1))]])
        assert blk.shape == (3, 3)
        x = np.array([1.0, 2.0])
        val = blk.value(x)
        np.testing.assert_array_equal(val[:2, 2], [1.0, 2.0])
        np.testing.assert_array_equal(val[2, :2], [1.0, 2.0])

    def test_asymmetric_block_rejected(self):
        p = SdpProblem()
        X = p.mat("X", 2, 2)
        with pytest.raises(ValueError, match="asymmetric"):
            p.add_lmi("bad", X, ">=0")

    def test_cross_problem_expressions_rejected(self):
        p1, p2 = SdpProblem(), SdpProblem()
        X1 = p1.sym("X", 2)
        X2 = p2.sym("X", 2)
        with pytest.raises(ValueError, match="different problem"):
            _ = X1 + X2

    def test_duplicate_names_rejected(self):
        p = SdpProblem()
        p.sym("X", 2)
        with pytest.raises(ValueError, match="duplicate"):
            p.mat("X", 1, 1)

    def test_scalar_scale_builds_lambda_identity(self):
        p = SdpProblem()
        lam = p.scalar("lam")
        expr = lam.scale(-np.eye(3))
        val = expr.value(np.array([2.0]))
        np.testing.assert_array_equal(val, -2.0 * np.eye(3))

    def test_strictness_shift_applied(self):
        p = SdpProblem(eps_lmi=1e-3)
        X = p.sym("X", 2)
        p.add_lmi("X_pd", X, ">0")
        p.minimize(X.trace())
        cf = p.canonicalize()
        np.testing.assert_allclose(cf.blocks[0].F0, -1e-3 * np.eye(2))

    def test_unknown_sense_rejected(self):
        p = SdpProblem()
        X = p.sym("X", 1)
        with pytest.raises(ValueError, match="sense"):
            p.add_lmi("bad", X, ">=")


class TestCanonicalDump:
    def test_dump_lists_objective_and_cones(self):
        p = SdpProblem()
        W = p.sym("W", 2)
        lam = p.scalar("lam")
        p.add_lmi("W_ge_I", W - np.eye(2), ">=0")
        p.add_lmi("lam_pos", lam, ">0")
        p.minimize(lam + W.trace())
        text = p.canonicalize().dump()
        assert "nvars 4" in text
        assert "cones 2 sizes 2 1" in text
        assert "objective" in text and "block W_ge_I" in text

    def test_missing_objective_rejected(self):
        p = SdpProblem()
        p.sym("W", 2)
        with pytest.raises(ValueError, match="objective"):
            p.canonicalize()


class TestBackend:
    def test_unknown_backend_raises(self):
        p = SdpProblem()
        W = p.sym("W", 1)
        p.add_lmi("w", W, ">=0")
        p.minimize(W.trace())
        with pytest.raises(SolverUnavailable):
            p.solve(backend="nonexistent")
