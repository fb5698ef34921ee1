"""Labeled samples, the Gram data matrix, and the quadratic fit cost.

A sample is one time instant of (state estimate, input, uncertainty
estimate). Stacking each sample as d_i = col[x_hat, u, eta_hat] (with
eta_hat optionally lifted through S_eta) gives the Gram matrix

    D = sum_i d_i d_i^T,

and the fit quality of model parameters (Theta_l, B_l) is

    J = sum_i ||Theta_l x_hat_i + B_l u_i - eta_hat_i||^2 = tr(T D T^T)

with T = [Theta_l, B_l, -I]. Only D and its factor are needed by the
learners, never the raw samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch
from .model import LtiSystem

#: samples earlier than this are presumed estimator transients
DEFAULT_T_MIN = 2.0

_FACTOR_RTOL = 1e-14  # eigenvalues below rtol*max are treated as zero


@dataclass(frozen=True)
class Sample:
    """One labeled data point: (x_hat, u, eta_hat) at time t."""

    x_hat: np.ndarray
    u: np.ndarray
    eta_hat: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        for name in ("x_hat", "u", "eta_hat"):
            vec = np.atleast_1d(np.asarray(getattr(self, name), dtype=np.float64))
            if vec.ndim != 1 or not np.all(np.isfinite(vec)):
                raise ValueError(f"sample field {name} must be a finite vector")
            vec.setflags(write=False)
            object.__setattr__(self, name, vec)


@dataclass(frozen=True)
class DataMatrix:
    """Gram matrix D with a factor D_tilde satisfying D = D_tilde^T D_tilde.

    ``q`` is the label dimension: n when the labels were lifted through
    S_eta (so the residual identity block is n x n), n_eta otherwise.
    """

    D: np.ndarray
    D_factor: np.ndarray
    sample_count: int
    n: int
    l: int
    q: int
    lifted: bool

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        F = np.asarray(self.D_factor, dtype=np.float64)
        n_d = self.n + self.l + self.q
        if D.shape != (n_d, n_d):
            raise DimensionMismatch("D", D.shape, "(n+l+q, n+l+q)", (n_d, n_d))
        if not np.allclose(D, D.T, atol=1e-12 * (1.0 + np.abs(D).max(initial=0.0))):
            raise ValueError("D must be symmetric")
        scale = np.linalg.norm(D)
        min_eig = np.linalg.eigvalsh(D).min() if n_d else 0.0
        if min_eig < -1e-10 * max(scale, 1.0):
            raise ValueError(f"D is not positive semidefinite (min eig {min_eig:g})")
        if np.linalg.norm(F.T @ F - D) > 1e-9 * (1.0 + scale):
            raise ValueError("factor residual exceeds tolerance")
        D.setflags(write=False)
        F.setflags(write=False)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "D_factor", F)

    @property
    def n_d(self) -> int:
        return self.n + self.l + self.q


def _psd_factor(D: np.ndarray) -> np.ndarray:
    """Factor a PSD matrix as F^T F via eigendecomposition.

    D is generically singular (few samples, collinear data), so a plain
    triangular factorization would fail; eigenvalue clipping always
    works and any factor with F^T F = D is equally valid downstream.
    Rows belonging to numerically zero eigenvalues are dropped.
    """
    w, V = np.linalg.eigh(D)
    keep = w > _FACTOR_RTOL * max(w.max(initial=0.0), 0.0)
    if not np.any(keep):
        return np.zeros((0, D.shape[0]))
    return np.sqrt(w[keep])[:, None] * V[:, keep].T


def build_data_matrix(samples: Sequence[Sample], sys: LtiSystem, *,
                      lift: bool, t_min: Optional[float] = DEFAULT_T_MIN) -> DataMatrix:
    """Accumulate the Gram matrix D from labeled samples.

    With ``lift`` set, each eta_hat is replaced by S_eta @ eta_hat
    before stacking, so the fitted target is exactly the uncertainty
    term as it enters the state equation (the cost-modified learner
    needs this: its residual block is n x n). Samples with t < t_min
    are discarded as estimator transients; pass ``t_min=None`` to keep
    everything.
    """
    if t_min is not None:
        samples = [s for s in samples if s.t >= t_min]
    if not samples:
        raise ValueError("no samples left to build the data matrix "
                         "(empty list, or all discarded by t_min)")
    n, _, l, n_eta, _, _ = sys.dims
    q = n if lift else n_eta
    n_d = n + l + q
    D = np.zeros((n_d, n_d))
    for s in samples:
        if s.x_hat.shape != (n,):
            raise DimensionMismatch("x_hat", s.x_hat.shape, "A", sys.A.shape)
        if s.u.shape != (l,):
            raise DimensionMismatch("u", s.u.shape, "B_u", sys.B_u.shape)
        if s.eta_hat.shape != (n_eta,):
            raise DimensionMismatch("eta_hat", s.eta_hat.shape, "S_eta", sys.S_eta.shape)
        label = sys.S_eta @ s.eta_hat if lift else s.eta_hat
        d = np.concatenate([s.x_hat, s.u, label])
        D += np.outer(d, d)
    return DataMatrix(D=D, D_factor=_psd_factor(D), sample_count=len(samples),
                      n=n, l=l, q=q, lifted=lift)


def residual_map(dm: DataMatrix, Theta_l, B_l) -> np.ndarray:
    """Assemble T = [Theta_l, B_l, -I] conformable with dm."""
    Theta_l = np.atleast_2d(np.asarray(Theta_l, dtype=np.float64))
    B_l = np.atleast_2d(np.asarray(B_l, dtype=np.float64))
    if Theta_l.shape != (dm.q, dm.n):
        raise DimensionMismatch("Theta_l", Theta_l.shape, "D x-block", (dm.q, dm.n))
    if B_l.shape != (dm.q, dm.l):
        raise DimensionMismatch("B_l", B_l.shape, "D u-block", (dm.q, dm.l))
    return np.hstack([Theta_l, B_l, -np.eye(dm.q)])


def cost_J(dm: DataMatrix, Theta_l, B_l) -> float:
    """Quadratic fit cost tr(T D T^T) of the parameters against the data."""
    T = residual_map(dm, Theta_l, B_l)
    val = float(np.trace(T @ dm.D @ T.T))
    return max(val, 0.0)  # clip the roundoff-negative case


def save_samples_csv(samples: Sequence[Sample], path) -> None:
    """Write samples in the dataset CSV format.

    Header: ``t, xhat_1..xhat_n, u_1..u_l, etahat_1..etahat_q``.
    """
    if not samples:
        raise ValueError("nothing to write")
    n, l, q = samples[0].x_hat.size, samples[0].u.size, samples[0].eta_hat.size
    header = (["t"] + [f"xhat_{i+1}" for i in range(n)]
              + [f"u_{i+1}" for i in range(l)] + [f"etahat_{i+1}" for i in range(q)])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s in samples:
            writer.writerow([repr(float(s.t))] + [repr(float(v)) for v in s.x_hat]
                            + [repr(float(v)) for v in s.u] + [repr(float(v)) for v in s.eta_hat])


def load_samples_csv(path) -> list:
    """Read samples written by :func:`save_samples_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        n = sum(1 for h in header if h.strip().startswith("xhat_"))
        l = sum(1 for h in header if h.strip().startswith("u_"))
        q = sum(1 for h in header if h.strip().startswith("etahat_"))
        out = []
        for row in reader:
            vals = [float(v) for v in row]
            out.append(Sample(t=vals[0], x_hat=vals[1:1 + n],
                              u=vals[1 + n:1 + n + l],
                              eta_hat=vals[1 + n + l:1 + n + l + q]))
    return out
