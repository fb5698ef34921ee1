"""Fixed-step continuous-time simulation of plants, filters, and error systems.

Everything simulated here is LTI with an exogenous forcing term, so the
classical 4th-order Runge-Kutta step

    x+ = x + h/6 (k1 + 2 k2 + 2 k3 + k4)

collapses to the affine recursion x[k+1] = A_d x[k] + w[k] with
propagator matrices precomputed from the dynamics matrix and the
forcing sampled on the half grid. The sequential recursion runs in the
compiled kernel (NumPy fallback when unavailable). Fixed stepping keeps
plant and filter exactly synchronized and makes every run reproducible.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from ._kernels import affine_recursion
from .dataset import Sample
from .errors import SimulationError
from .model import LtiSystem, TrueUncertainty
from .signals import SignalSpec

#: hard cap on dt relative to the fastest time constant 1/rho(M)
DT_SAFETY = 1e-2

#: state-norm threshold treated as a blow-up
BLOWUP_NORM = 1e12

Uncertainty = Union[TrueUncertainty, SignalSpec, None]


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled named channel groups over a time grid."""

    times: np.ndarray
    channels: Dict[str, np.ndarray]
    dt: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        object.__setattr__(self, "times", times)
        for name, arr in self.channels.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.shape[0] != times.size:
                raise ValueError(f"channel {name!r} has {arr.shape[0]} rows, "
                                 f"expected {times.size}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"channel {name!r} contains non-finite values")
            self.channels[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def to_csv(self, path) -> None:
        header = ["t"]
        for name, arr in self.channels.items():
            header += [f"{name}_{i + 1}" for i in range(arr.shape[1])]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            stacked = np.hstack([self.times[:, None]]
                                + [arr for arr in self.channels.values()])
            for row in stacked:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = np.array([[float(v) for v in row] for row in reader])
        groups: Dict[str, List[int]] = {}
        for i, col in enumerate(header[1:], start=1):
            base = col.rsplit("_", 1)[0]
            groups.setdefault(base, []).append(i)
        channels = {name: rows[:, idx] for name, idx in groups.items()}
        times = rows[:, 0]
        dt = float(times[1] - times[0]) if times.size > 1 else 0.0
        return cls(times=times, channels=channels, dt=dt)


def _rk4_propagators(M: np.ndarray, h: float):
    """Exact RK4 update matrices for dx/dt = M x + f(t).

    x+ = Ad x + B1 f(t) + B2 f(t + h/2) + B3 f(t + h), algebraically
    identical to the classical four-stage step.
    """
    n = M.shape[0]
    eye = np.eye(n)
    M2, M3 = M @ M, M @ M @ M
    M4 = M2 @ M2
    Ad = eye + h * M + (h ** 2 / 2) * M2 + (h ** 3 / 6) * M3 + (h ** 4 / 24) * M4
    B1 = (h / 6) * (eye + h * M + (h ** 2 / 2) * M2 + (h ** 3 / 4) * M3)
    B2 = (h / 6) * (4 * eye + 2 * h * M + (h ** 2 / 2) * M2)
    B3 = (h / 6) * eye
    return Ad, B1, B2, B3


def _check_grid(T: float, dt: float):
    if dt <= 0 or T <= 0:
        raise SimulationError(f"need positive horizon and step, got T={T}, dt={dt}")
    nsteps = int(round(T / dt))
    if abs(nsteps * dt - T) > 1e-9 * max(T, 1.0):
        raise SimulationError(f"dt={dt} does not divide the horizon T={T}")
    return nsteps


def _check_step(M: np.ndarray, dt: float):
    rho = float(np.abs(np.linalg.eigvals(M)).max()) if M.size else 0.0
    if rho > 0 and dt > DT_SAFETY / rho:
        raise SimulationError(
            f"dt={dt:g} too large for dynamics with spectral radius {rho:.3g} "
            f"(need dt <= {DT_SAFETY / rho:.3g})")


def simulate_lti(M, forcing: Callable[[np.ndarray], np.ndarray], x0,
                 T: float, dt: float):
    """Integrate dx/dt = M x + f(t) with fixed-step RK4.

    ``forcing`` is evaluated vectorized on the half grid. Returns
    (times, X) with X[k] the state at times[k]. Raises on blow-up,
    naming the first bad time.
    """
    M = np.asarray(M, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    nsteps = _check_grid(T, dt)
    _check_step(M, dt)
    t_half = np.arange(2 * nsteps + 1) * (dt / 2.0)
    F = np.asarray(forcing(t_half), dtype=np.float64)
    if F.shape != (t_half.size, M.shape[0]):
        raise SimulationError(f"forcing returned shape {F.shape}, "
                              f"expected {(t_half.size, M.shape[0])}")
    if not np.all(np.isfinite(F)):
        raise SimulationError("forcing produced non-finite values")
    Ad, B1, B2, B3 = _rk4_propagators(M, dt)
    W = F[0:-1:2] @ B1.T + F[1::2] @ B2.T + F[2::2] @ B3.T
    X = affine_recursion(Ad, W, x0)
    bad = ~np.isfinite(X).all(axis=1) | (np.abs(X).max(axis=1) > BLOWUP_NORM)
    if np.any(bad):
        k = int(np.argmax(bad))
        raise SimulationError(f"state blew up at t={k * dt:g} s")
    times = np.arange(nsteps + 1) * dt
    return times, X


def _plant_parts(sys: LtiSystem, uncertainty: Uncertainty):
    """Dynamics matrix and per-time forcing builder for one plant."""
    n = sys.dims.n
    M = np.array(sys.A)
    B_in = np.array(sys.B_u)
    eta_sig = None
    if isinstance(uncertainty, TrueUncertainty):
        M = M + sys.S_eta @ uncertainty.Theta_a
        B_in = B_in + sys.S_eta @ uncertainty.B_a
    elif isinstance(uncertainty, SignalSpec):
        if uncertainty.dim != sys.dims.n_eta:
            raise SimulationError(
                f"uncertainty signal has dim {uncertainty.dim}, plant expects "
                f"{sys.dims.n_eta}")
        eta_sig = uncertainty
    elif uncertainty is not None:
        raise TypeError("uncertainty must be TrueUncertainty, SignalSpec, or None")

    def forcing(t, u_spec, omega_spec):
        out = np.zeros((t.size, n))
        if u_spec is not None:
            out += u_spec.eval(t) @ B_in.T
        if omega_spec is not None and sys.dims.n_omega:
            out += omega_spec.eval(t) @ sys.B_omega.T
        if eta_sig is not None:
            out += eta_sig.eval(t) @ sys.S_eta.T
        return out

    return M, forcing


def _true_eta(sys: LtiSystem, uncertainty: Uncertainty, times, X, u_spec):
    if isinstance(uncertainty, TrueUncertainty):
        vals = X @ uncertainty.Theta_a.T
        if u_spec is not None:
            vals = vals + u_spec.eval(times) @ uncertainty.B_a.T
        return vals
    if isinstance(uncertainty, SignalSpec):
        return uncertainty.eval(times)
    return None


def simulate_plant(sys: LtiSystem, uncertainty: Uncertainty,
                   u: Optional[SignalSpec], omega: Optional[SignalSpec],
                   nu: Optional[SignalSpec], x0, T: float, dt: float) -> Trajectory:
    """Simulate the (true) plant and record x_s, y_s, u, and eta_true.

    ``uncertainty`` may be the plant's hidden state-feedback term, an
    exogenous signal on the uncertainty channel, or None. The true
    uncertainty channel is recorded for later comparison only; nothing
    downstream of the estimator may read it.
    """
    M, forcing = _plant_parts(sys, uncertainty)
    times, X = simulate_lti(M, lambda t: forcing(t, u, omega), x0, T, dt)
    Y = X @ sys.C.T
    if nu is not None and sys.dims.m_nu:
        Y = Y + nu.eval(times) @ sys.D_nu.T
    channels = {"x_s": X, "y_s": Y}
    channels["u"] = u.eval(times) if u is not None else np.zeros((times.size, sys.dims.l))
    eta = _true_eta(sys, uncertainty, times, X, u)
    if eta is not None:
        channels["eta_true"] = eta
    return Trajectory(times=times, channels=channels, dt=dt)


def cosimulate(sys: LtiSystem, uncertainty: Uncertainty, fd,
               u: Optional[SignalSpec], omega: Optional[SignalSpec],
               nu: Optional[SignalSpec], x0, T: float, dt: float,
               z0: Optional[np.ndarray] = None) -> Trajectory:
    """Advance plant and filter on the same grid with the same scheme.

    The filter block of the joint dynamics reads the plant only through
    y_s = C x_s + D_nu nu, so the information structure of runtime
    estimation is preserved exactly. By default the filter starts from
    a zero estimate of the augmented state (z0 = E y_s(0)).
    """
    n = sys.dims.n
    aug = fd.aug
    n_z = aug.n_a
    Mp, plant_forcing = _plant_parts(sys, uncertainty)
    Mj = np.zeros((n + n_z, n + n_z))
    Mj[:n, :n] = Mp
    Mj[n:, :n] = fd.L @ sys.C
    Mj[n:, n:] = fd.N

    def forcing(t):
        out = np.zeros((t.size, n + n_z))
        out[:, :n] = plant_forcing(t, u, omega)
        if u is not None:
            out[:, n:] += u.eval(t) @ fd.G.T
        if nu is not None and sys.dims.m_nu:
            out[:, n:] += nu.eval(t) @ (fd.L @ sys.D_nu).T
        return out

    x0 = np.asarray(x0, dtype=np.float64).ravel()
    y0 = sys.C @ x0
    if nu is not None and sys.dims.m_nu:
        y0 = y0 + sys.D_nu @ nu.eval(np.array([0.0]))[0]
    if z0 is None:
        z0 = fd.E @ y0  # zero initial estimate of the augmented state
    state0 = np.concatenate([x0, np.asarray(z0, dtype=np.float64).ravel()])
    times, XZ = simulate_lti(Mj, forcing, state0, T, dt)
    X, Z = XZ[:, :n], XZ[:, n:]
    Y = X @ sys.C.T
    if nu is not None and sys.dims.m_nu:
        Y = Y + nu.eval(times) @ sys.D_nu.T
    Xa_hat = Z - Y @ fd.E.T
    channels = {"x_s": X, "y_s": Y}
    channels["u"] = u.eval(times) if u is not None else np.zeros((times.size, sys.dims.l))
    eta = _true_eta(sys, uncertainty, times, X, u)
    if eta is not None:
        channels["eta_true"] = eta
    channels["z"] = Z
    channels["etahat"] = Xa_hat @ aug.C_bar_1.T
    channels["xhat"] = Xa_hat @ aug.C_bar_2.T
    return Trajectory(times=times, channels=channels, dt=dt)


def simulate_error_system(fd, omega_a: Optional[SignalSpec],
                          nu: Optional[SignalSpec], e0, T: float,
                          dt: float) -> Trajectory:
    """Integrate the filter error dynamics directly.

    de/dt = N e - M B_omega_a omega_a + [K D_nu, -E D_nu] col[nu, dnu/dt]
    with performance output e_d = C_bar_a e. ``nu`` must provide an
    exact derivative (any SignalSpec does).
    """
    aug = fd.aug
    MBw = fd.M @ aug.B_omega_a
    Bnu = fd.B_nu_a

    def forcing(t):
        out = np.zeros((t.size, aug.n_a))
        if omega_a is not None:
            out -= omega_a.eval(t) @ MBw.T
        if nu is not None and Bnu.shape[1]:
            nu_a = np.hstack([nu.eval(t), nu.derivative(t)])
            out += nu_a @ Bnu.T
        return out

    times, Evals = simulate_lti(fd.N, forcing, e0, T, dt)
    return Trajectory(times=times,
                      channels={"e": Evals, "e_d": Evals @ aug.C_bar_a.T},
                      dt=dt)


def extract_dataset(traj: Trajectory, rate_hz: float, t_min: float) -> List[Sample]:
    """Subsample (xhat, u, etahat) from a co-simulation trajectory.

    Keeps samples strictly after ``t_min`` at the requested rate; never
    reads the true state or true uncertainty channels. The rate must
    divide the trajectory's grid rate.
    """
    for needed in ("xhat", "u", "etahat"):
        if needed not in traj.channels:
            raise ValueError(f"trajectory lacks channel {needed!r}; "
                             "run the estimator first")
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    stride_f = 1.0 / (rate_hz * traj.dt)
    stride = int(round(stride_f))
    if stride < 1 or abs(stride - stride_f) > 1e-9 * stride_f:
        raise ValueError(f"rate {rate_hz} Hz does not divide the grid rate "
                         f"{1.0 / traj.dt:g} Hz")
    idx = np.arange(0, traj.times.size, stride)
    idx = idx[traj.times[idx] > t_min]
    if idx.size == 0:
        raise ValueError(f"no samples remain after t_min={t_min} s")
    return [Sample(x_hat=traj["xhat"][k], u=traj["u"][k],
                   eta_hat=traj["etahat"][k], t=float(traj.times[k]))
            for k in idx]


@dataclass(frozen=True)
class RmseResult:
    """Per-output RMSE of a candidate model against the true plant."""

    values: np.ndarray
    divergent: bool
    times: Optional[np.ndarray] = None
    y_true: Optional[np.ndarray] = None
    y_model: Optional[np.ndarray] = None


def evaluate_rmse(sys_true: LtiSystem, model: LtiSystem, u: Optional[SignalSpec],
                  x0, T: float, dt: float, keep_series: bool = False) -> RmseResult:
    """Compare noiseless output responses of the true plant and a model.

    Both are driven by the same input from the same initial state with
    no disturbance or noise. An unstable model is reported as divergent
    (RMSE values set to inf if it actually blew up) rather than raised.
    """
    if model.dims.m != sys_true.dims.m:
        raise ValueError("model and plant output dimensions differ")
    ref = simulate_plant(sys_true, sys_true.true_uncertainty, u, None, None,
                         x0, T, dt)
    from .analysis import spectral_abscissa  # local import avoids cycle at load

    divergent = spectral_abscissa(model.A) >= 0
    try:
        out = simulate_plant(model, None, u, None, None, x0, T, dt)
        err = out["y_s"] - ref["y_s"]
        values = np.sqrt(np.mean(err ** 2, axis=0))
        y_model = out["y_s"]
    except SimulationError:
        values = np.full(sys_true.dims.m, np.inf)
        y_model = None
        divergent = True
    return RmseResult(values=values, divergent=divergent,
                      times=ref.times if keep_series else None,
                      y_true=ref["y_s"] if keep_series else None,
                      y_model=y_model if keep_series else None)
