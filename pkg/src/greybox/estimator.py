"""Synthesis and runtime stepping of the uncertainty/state estimation filter.

The filter

    dz/dt  = N z + G u + L y_s
    xa_hat = z - E y_s
    eta_hat = C_bar_1 xa_hat,   xs_hat = C_bar_2 xa_hat

reconstructs the plant state and the uncertainty signal from inputs and
outputs only. Its gains (E, K) come from a semidefinite program that
minimizes the worst-case gain from disturbance and model mismatch to
the estimation error while capping the noise-to-error energy gain; the
returned design carries both norm certificates and is re-verified
against independently computed norms before it is accepted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from . import analysis
from .errors import DimensionMismatch, SimulationError, SolverFailure
from .model import AugmentedSystem
from .sdp import SdpProblem

#: identity tolerance for the derived-gain relations (relative)
GAIN_IDENTITY_RTOL = 1e-10

#: slack allowed when re-verifying the norm certificates
NORM_CERT_RTOL = 1e-4


@dataclass(frozen=True)
class FilterDesign:
    """Estimator gains, derived matrices, and performance certificates."""

    E: np.ndarray
    K: np.ndarray
    M: np.ndarray
    N: np.ndarray
    G: np.ndarray
    L: np.ndarray
    lambda_star: float
    gamma_star: float
    Pi: np.ndarray
    Z: np.ndarray
    iss_gain_bound: float
    epsilon: float
    gamma_max: float
    aug: AugmentedSystem
    D_nu: np.ndarray

    @property
    def B_nu_a(self) -> np.ndarray:
        """Error-system input map for col[nu, dnu/dt]."""
        return np.hstack([self.K @ self.D_nu, -self.E @ self.D_nu])

    def to_json_dict(self) -> dict:
        return {
            "E": self.E.tolist(), "K": self.K.tolist(), "M": self.M.tolist(),
            "N": self.N.tolist(), "G": self.G.tolist(), "L": self.L.tolist(),
            "lambda_star": self.lambda_star, "gamma_star": self.gamma_star,
            "Pi": self.Pi.tolist(), "Z": self.Z.tolist(),
            "iss_gain_bound": self.iss_gain_bound,
            "epsilon": self.epsilon, "gamma_max": self.gamma_max,
            "D_nu": self.D_nu.tolist(),
            "aug": {"A_a": self.aug.A_a.tolist(), "B_ua": self.aug.B_ua.tolist(),
                    "B_omega_a": self.aug.B_omega_a.tolist(),
                    "C_a": self.aug.C_a.tolist(),
                    "C_bar_a": self.aug.C_bar_a.tolist(),
                    "r": self.aug.r, "n": self.aug.n, "n_eta": self.aug.n_eta},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FilterDesign":
        a = d["aug"]
        aug = AugmentedSystem(A_a=a["A_a"], B_ua=a["B_ua"],
                              B_omega_a=a["B_omega_a"], C_a=a["C_a"],
                              C_bar_a=a["C_bar_a"], r=a["r"], n=a["n"],
                              n_eta=a["n_eta"])
        arrays = {k: np.asarray(d[k], dtype=np.float64)
                  for k in ("E", "K", "M", "N", "G", "L", "Pi", "Z", "D_nu")}
        return cls(lambda_star=d["lambda_star"], gamma_star=d["gamma_star"],
                   iss_gain_bound=d["iss_gain_bound"], epsilon=d["epsilon"],
                   gamma_max=d["gamma_max"], aug=aug, **arrays)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "FilterDesign":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class FilterState:
    """Runtime state of the filter and its most recent outputs."""

    z: np.ndarray
    eta_hat: np.ndarray
    x_hat_s: np.ndarray
    x_hat_a: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, fd: FilterDesign, y0=None, t0: float = 0.0) -> "FilterState":
        """Start from a zero augmented-state estimate (z0 = E y0)."""
        y0 = np.zeros(fd.E.shape[1]) if y0 is None else np.asarray(y0, dtype=np.float64)
        z0 = fd.E @ y0
        return _make_state(fd, z0, y0, t0)


def _make_state(fd: FilterDesign, z, y, t) -> FilterState:
    x_hat_a = z - fd.E @ y
    return FilterState(z=z, eta_hat=fd.aug.C_bar_1 @ x_hat_a,
                       x_hat_s=fd.aug.C_bar_2 @ x_hat_a, x_hat_a=x_hat_a, t=t)


def detectability_check(aug: AugmentedSystem, tol: float = 1e-7) -> bool:
    """PBH rank test at every candidate unstable eigenvalue of A_a.

    The augmentation adds integrator chains at the origin, so the chain
    must be observable through the measurement for any estimator design
    to exist.
    """
    A_a, C_a = aug.A_a, aug.C_a
    n_a = A_a.shape[0]
    eigs = np.linalg.eigvals(A_a)
    scale = max(1.0, float(np.abs(eigs).max()))
    for lam in eigs[eigs.real >= -tol * scale]:
        pencil = np.vstack([lam * np.eye(n_a) - A_a, C_a.astype(complex)])
        if np.linalg.matrix_rank(pencil, tol=1e-10 * scale) < n_a:
            return False
    return True


def design_filter(aug: AugmentedSystem, D_nu, epsilon: float,
                  gamma_max: float, verify: bool = True) -> FilterDesign:
    """Mixed-norm estimator synthesis (minimize the disturbance gain).

    Solves, over (Pi, F, H, Z, lambda, gamma) with Sbar the Lyapunov
    expression of the error dynamics in the transformed gains,

        minimize  lambda
        s.t.      Sbar + epsilon I <= 0                      (ISS decay)
                  [Sbar, -(Pi + F C_a) B_omega_a, C_bar_a^T
                   *,    -lambda I,               0
                   *,    *,                       -lambda I] < 0
                  [Sbar, H D_nu, -F D_nu
                   *,    -gamma I, 0
                   *,    *,        -gamma I] < 0
                  [Pi, C_bar_a^T; *, Z] > 0,  Pi > 0
                  gamma - tr(Z) > 0, gamma > 0, lambda > 0
                  gamma <= gamma_max

    then recovers E = Pi^-1 F, K = Pi^-1 H and independently verifies
    that N is Hurwitz and that the achieved H-infinity and H2 norms sit
    below the certified lambda*, gamma*.
    """
    if epsilon <= 0 or gamma_max <= 0:
        raise ValueError("epsilon and gamma_max must be positive")
    D_nu = np.asarray(D_nu, dtype=np.float64)
    if D_nu.shape[0] != aug.C_a.shape[0]:
        raise DimensionMismatch("D_nu", D_nu.shape, "C_a", aug.C_a.shape,
                                "noise map must have m rows")
    if not detectability_check(aug):
        raise SolverFailure(
            "(A_a, C_a) is not detectable: the uncertainty integrator chain "
            "is invisible from the measurements; reduce r or change C")

    A_a, C_a, B_wa, Cbar = aug.A_a, aug.C_a, aug.B_omega_a, aug.C_bar_a
    n_a = A_a.shape[0]
    m = C_a.shape[0]
    n_w = B_wa.shape[1]
    m_nu = D_nu.shape[1]
    ne_n = Cbar.shape[0]

    p = SdpProblem()
    Pi = p.sym("Pi", n_a)
    F = p.mat("F", n_a, m)
    H = p.mat("H", n_a, m)
    Z = p.sym("Z", ne_n)
    lam = p.scalar("lam")
    gam = p.scalar("gam")

    Sbar = (A_a.T @ Pi + (A_a.T @ C_a.T) @ F.T - C_a.T @ H.T
            + Pi @ A_a + F @ (C_a @ A_a) - H @ C_a)
    p.add_lmi("iss_decay", Sbar + epsilon * np.eye(n_a), "<=0")
    PiMBw = Pi @ B_wa + F @ (C_a @ B_wa)
    p.add_lmi("hinf", p.block([
        [Sbar, -1.0 * PiMBw, Cbar.T],
        [None, lam.scale(-np.eye(n_w)), np.zeros((n_w, ne_n))],
        [None, None, lam.scale(-np.eye(ne_n))]]), "<0")
    p.add_lmi("h2", p.block([
        [Sbar, H @ D_nu, -1.0 * (F @ D_nu)],
        [None, gam.scale(-np.eye(m_nu)), np.zeros((m_nu, m_nu))],
        [None, None, gam.scale(-np.eye(m_nu))]]), "<0")
    p.add_lmi("coupling", p.block([[Pi, Cbar.T], [None, Z]]), ">0")
    p.add_lmi("Pi_pd", Pi, ">0")
    p.add_lmi("gam_minus_trZ", gam - Z.trace(), ">0")
    p.add_lmi("gam_pos", gam, ">0")
    p.add_lmi("lam_pos", lam, ">0")
    p.add_lmi("gam_cap", -1.0 * gam + gamma_max, ">=0")
    p.minimize(lam)

    sol = p.solve()
    if sol.status == "infeasible":
        raise SolverFailure(
            f"estimator design infeasible at epsilon={epsilon:g}, "
            f"gamma_max={gamma_max:g}; typical causes: gamma_max too small "
            "for the required noise rejection, epsilon too large, or the "
            "chain order r too long for the available measurements")
    if not sol.ok:
        raise SolverFailure(f"estimator design failed: {sol.solver_status}")

    Pi_v, F_v, H_v = sol.values["Pi"], sol.values["F"], sol.values["H"]
    lam_v, gam_v, Z_v = sol.values["lam"], sol.values["gam"], sol.values["Z"]
    cho = cho_factor(Pi_v)
    E = cho_solve(cho, F_v)
    K = cho_solve(cho, H_v)
    M = np.eye(n_a) + E @ C_a
    N = M @ A_a - K @ C_a
    G = M @ aug.B_ua
    L = K @ (np.eye(m) + C_a @ E) - M @ A_a @ E
    iss_inputs = np.hstack([M @ B_wa, -K @ D_nu, E @ D_nu])
    iss_gain = 2.0 * float(np.linalg.norm(Pi_v @ iss_inputs, 2)) / epsilon

    fd = FilterDesign(E=E, K=K, M=M, N=N, G=G, L=L,
                      lambda_star=float(lam_v), gamma_star=float(gam_v),
                      Pi=Pi_v, Z=Z_v, iss_gain_bound=iss_gain,
                      epsilon=float(epsilon), gamma_max=float(gamma_max),
                      aug=aug, D_nu=D_nu)
    if verify:
        _verify_design(fd)
    return fd


def _verify_design(fd: FilterDesign) -> None:
    """Mandatory post-solve checks, all computed independently."""
    aug = fd.aug
    if analysis.spectral_abscissa(fd.N) >= 0:
        raise SolverFailure("recovered filter dynamics matrix is not Hurwitz")
    hinf = analysis.hinf_norm(fd.N, -fd.M @ aug.B_omega_a, aug.C_bar_a)
    if hinf > fd.lambda_star * (1.0 + NORM_CERT_RTOL):
        raise SolverFailure(
            f"H-infinity certificate violated: {hinf:g} > {fd.lambda_star:g}")
    h2 = analysis.h2_norm(fd.N, fd.B_nu_a, aug.C_bar_a)
    if h2 > fd.gamma_star * (1.0 + NORM_CERT_RTOL):
        raise SolverFailure(f"H2 certificate violated: {h2:g} > {fd.gamma_star:g}")


def design_filter_sweep(aug: AugmentedSystem, D_nu, epsilon: float,
                        lo: float = 1e-2, hi: float = 1e2,
                        per_decade: int = 4) -> FilterDesign:
    """Coarse gamma_max sweep keeping the design with the smallest lambda*."""
    n_pts = int(np.round(per_decade * np.log10(hi / lo))) + 1
    best: Optional[FilterDesign] = None
    for gmax in np.logspace(np.log10(lo), np.log10(hi), n_pts):
        try:
            fd = design_filter(aug, D_nu, epsilon, float(gmax))
        except SolverFailure:
            continue
        if best is None or fd.lambda_star < best.lambda_star:
            best = fd
    if best is None:
        raise SolverFailure("no feasible gamma_max in the sweep range")
    return best


def _stage_values(sig, dim: int) -> np.ndarray:
    arr = np.asarray(sig, dtype=np.float64)
    if arr.ndim <= 1:
        arr = np.tile(np.atleast_1d(arr), (3, 1))
    if arr.shape != (3, dim):
        raise DimensionMismatch("stage samples", arr.shape, "(3, dim)", (3, dim))
    return arr


def step_filter(fd: FilterDesign, state: FilterState, u, y_s,
                dt: float) -> FilterState:
    """Advance the filter one RK4 step of dz/dt = N z + G u + L y_s.

    ``u`` and ``y_s`` may be single vectors (held constant across the
    step) or (3, dim) arrays giving the stage samples at t, t + dt/2,
    and t + dt; the latter reproduces a synchronized co-simulation
    exactly.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    us = _stage_values(u, fd.G.shape[1])
    ys = _stage_values(y_s, fd.L.shape[1])

    z = state.z
    with np.errstate(over="ignore", invalid="ignore"):  # guard below reports
        f = us @ fd.G.T + ys @ fd.L.T
        k1 = fd.N @ z + f[0]
        k2 = fd.N @ (z + 0.5 * dt * k1) + f[1]
        k3 = fd.N @ (z + 0.5 * dt * k2) + f[1]
        k4 = fd.N @ (z + dt * k3) + f[2]
        z_next = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(z_next)):
        raise SimulationError(f"filter state diverged at t={state.t + dt:g} s")
    return _make_state(fd, z_next, ys[2], state.t + dt)
