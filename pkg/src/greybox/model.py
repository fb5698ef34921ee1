"""Plant, uncertainty-model, and augmented-dynamics types.

A plant is a continuous-time LTI system

    dx/dt = A x + B_u u + S_eta eta(x, u) + B_omega omega
    y     = C x + D_nu nu

where ``eta`` is an unknown uncertainty entering through the channel
matrix ``S_eta``. A learned :class:`UncertaintyModel` replaces ``eta``
with the linear map ``Theta_l x + B_l u`` injected through ``S_eta_l``,
and :func:`augment` builds the integrator-chain extension used by the
uncertainty/state estimation filter.

All types are immutable after construction (arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import DimensionMismatch


def _freeze(a) -> np.ndarray:
    """Return a read-only float64 copy of ``a`` (2-D)."""
    out = np.array(a, dtype=np.float64)
    if out.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={out.ndim}")
    if out.size and not np.all(np.isfinite(out)):
        raise ValueError("matrix contains non-finite entries")
    out.setflags(write=False)
    return out


class Dims(NamedTuple):
    n: int
    m: int
    l: int
    n_eta: int
    n_omega: int
    m_nu: int


@dataclass(frozen=True)
class TrueUncertainty:
    """Hidden linear uncertainty used only by synthetic benchmarks.

    ``eta(x, u) = Theta_a x + B_a u``. Read exclusively by the
    simulation layer; learners and estimators never see it.
    """

    Theta_a: np.ndarray
    B_a: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Theta_a", _freeze(self.Theta_a))
        object.__setattr__(self, "B_a", _freeze(self.B_a))
        if self.B_a.shape[0] != self.Theta_a.shape[0]:
            raise DimensionMismatch("Theta_a", self.Theta_a.shape, "B_a", self.B_a.shape,
                                    "row counts must agree")

    def eval(self, x, u):
        return self.Theta_a @ x + self.B_a @ u


@dataclass(frozen=True)
class LtiSystem:
    """Known plant matrices plus, optionally, the hidden true uncertainty."""

    A: np.ndarray
    B_u: np.ndarray
    S_eta: np.ndarray
    B_omega: np.ndarray
    C: np.ndarray
    D_nu: np.ndarray
    true_uncertainty: Optional[TrueUncertainty] = field(default=None)

    def __post_init__(self):
        for name in ("A", "B_u", "S_eta", "B_omega", "C", "D_nu"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        n = self.A.shape[0]
        if n < 1 or self.A.shape[1] != n:
            raise DimensionMismatch("A", self.A.shape, "A", self.A.shape,
                                    "state matrix must be square, n >= 1")
        for name, rows in (("B_u", n), ("S_eta", n), ("B_omega", n)):
            mat = getattr(self, name)
            if mat.shape[0] != rows:
                raise DimensionMismatch("A", self.A.shape, name, mat.shape,
                                        "row count must equal n")
        if self.C.shape[1] != n:
            raise DimensionMismatch("A", self.A.shape, "C", self.C.shape,
                                    "C must have n columns")
        m = self.C.shape[0]
        if m < 1:
            raise ValueError("output dimension m must be >= 1")
        if self.D_nu.shape[0] != m:
            raise DimensionMismatch("C", self.C.shape, "D_nu", self.D_nu.shape,
                                    "row count must equal m")
        n_eta = self.S_eta.shape[1]
        if n_eta and np.linalg.matrix_rank(self.S_eta) < n_eta:
            # the channel matrix only marks where eta enters; rank
            # deficiency is legal but usually a modelling mistake
            warnings.warn("S_eta is column-rank deficient", stacklevel=2)
        if self.true_uncertainty is not None:
            tu = self.true_uncertainty
            if tu.Theta_a.shape != (n_eta, n):
                raise DimensionMismatch("Theta_a", tu.Theta_a.shape,
                                        "S_eta", self.S_eta.shape,
                                        f"expected ({n_eta}, {n})")
            if tu.B_a.shape != (n_eta, self.B_u.shape[1]):
                raise DimensionMismatch("B_a", tu.B_a.shape, "B_u", self.B_u.shape,
                                        f"expected ({n_eta}, {self.B_u.shape[1]})")

    @property
    def dims(self) -> Dims:
        return Dims(n=self.A.shape[0], m=self.C.shape[0], l=self.B_u.shape[1],
                    n_eta=self.S_eta.shape[1], n_omega=self.B_omega.shape[1],
                    m_nu=self.D_nu.shape[1])

    def to_json_dict(self) -> dict:
        d = {
            "A": self.A.tolist(),
            "B_u": self.B_u.tolist(),
            "S_eta": self.S_eta.tolist(),
            "B_omega": self.B_omega.tolist(),
            "C": self.C.tolist(),
            "D_nu": self.D_nu.tolist(),
        }
        if self.true_uncertainty is not None:
            d["true_uncertainty"] = {
                "Theta_a": self.true_uncertainty.Theta_a.tolist(),
                "B_a": self.true_uncertainty.B_a.tolist(),
            }
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "LtiSystem":
        tu = None
        if "true_uncertainty" in d and d["true_uncertainty"] is not None:
            tu = TrueUncertainty(Theta_a=d["true_uncertainty"]["Theta_a"],
                                 B_a=d["true_uncertainty"]["B_a"])
        return cls(A=d["A"], B_u=d["B_u"], S_eta=d["S_eta"],
                   B_omega=d["B_omega"], C=d["C"], D_nu=d["D_nu"],
                   true_uncertainty=tu)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LtiSystem":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_dict(json.load(fh))


@dataclass(frozen=True)
class UncertaintyModel:
    """Learned linear uncertainty ``eta_l(x, u) = Theta_l x + B_l u``.

    ``certificate`` is the Lyapunov matrix returned by the learner (P
    for the cost-modified route, Q for the constraint-modified route);
    it is None for the plain least-squares route, which certifies
    nothing.
    """

    Theta_l: np.ndarray
    B_l: np.ndarray
    S_eta_l: np.ndarray
    provenance: str
    certificate: Optional[np.ndarray] = None

    _PROVENANCES = ("cost-modified", "constraint-modified", "least-squares")

    def __post_init__(self):
        object.__setattr__(self, "Theta_l", _freeze(self.Theta_l))
        object.__setattr__(self, "B_l", _freeze(self.B_l))
        object.__setattr__(self, "S_eta_l", _freeze(self.S_eta_l))
        if self.certificate is not None:
            object.__setattr__(self, "certificate", _freeze(self.certificate))
        if self.provenance not in self._PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        q = self.Theta_l.shape[0]
        if self.B_l.shape[0] != q:
            raise DimensionMismatch("Theta_l", self.Theta_l.shape, "B_l", self.B_l.shape,
                                    "row counts must agree")
        if self.S_eta_l.shape[1] != q:
            raise DimensionMismatch("S_eta_l", self.S_eta_l.shape,
                                    "Theta_l", self.Theta_l.shape,
                                    "S_eta_l needs one column per model channel")

    @property
    def n_eta_l(self) -> int:
        return self.Theta_l.shape[0]

    def to_json_dict(self) -> dict:
        return {
            "Theta_l": self.Theta_l.tolist(),
            "B_l": self.B_l.tolist(),
            "S_eta_l": self.S_eta_l.tolist(),
            "provenance": self.provenance,
            "certificate": None if self.certificate is None else self.certificate.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "UncertaintyModel":
        return cls(Theta_l=d["Theta_l"], B_l=d["B_l"], S_eta_l=d["S_eta_l"],
                   provenance=d["provenance"],
                   certificate=None if d.get("certificate") is None else d["certificate"])


@dataclass(frozen=True)
class AugmentedSystem:
    """Plant extended with an order-r integrator chain per uncertainty channel.

    The augmented state is col[x, zeta_1, ..., zeta_r] where zeta_1
    stands for the uncertainty value and zeta_{j+1} for its j-th time
    derivative. ``C_bar_a`` stacks the selector of zeta_1 over the
    selector of x, so it extracts col[eta, x] from the augmented state.
    """

    A_a: np.ndarray
    B_ua: np.ndarray
    B_omega_a: np.ndarray
    C_a: np.ndarray
    C_bar_a: np.ndarray
    r: int
    n: int
    n_eta: int

    def __post_init__(self):
        for name in ("A_a", "B_ua", "B_omega_a", "C_a", "C_bar_a"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def n_a(self) -> int:
        return self.n + self.r * self.n_eta

    @property
    def C_bar_1(self) -> np.ndarray:
        """Selector of the uncertainty value (first chain block)."""
        return self.C_bar_a[: self.n_eta]

    @property
    def C_bar_2(self) -> np.ndarray:
        """Selector of the plant state."""
        return self.C_bar_a[self.n_eta:]


def extended_model(sys: LtiSystem, um: UncertaintyModel) -> LtiSystem:
    """Fold a learned uncertainty model into the plant.

    Returns a plant with dynamics ``A + S_eta_l Theta_l`` and input map
    ``B_u + S_eta_l B_l``; outputs are unchanged and the uncertainty
    channel is removed (the model is now part of the dynamics).
    """
    n, l = sys.dims.n, sys.dims.l
    if um.S_eta_l.shape[0] != n:
        raise DimensionMismatch("S_eta_l", um.S_eta_l.shape, "A", sys.A.shape,
                                "S_eta_l must have n rows")
    if um.Theta_l.shape[1] != n:
        raise DimensionMismatch("Theta_l", um.Theta_l.shape, "A", sys.A.shape,
                                "Theta_l must have n columns")
    if um.B_l.shape[1] != l:
        raise DimensionMismatch("B_l", um.B_l.shape, "B_u", sys.B_u.shape,
                                "B_l must have l columns")
    return LtiSystem(
        A=sys.A + um.S_eta_l @ um.Theta_l,
        B_u=sys.B_u + um.S_eta_l @ um.B_l,
        S_eta=np.zeros((n, 0)),
        B_omega=sys.B_omega,
        C=sys.C,
        D_nu=sys.D_nu,
    )


def augment(sys: LtiSystem, r: int) -> AugmentedSystem:
    """Build the integrator-chain augmentation of order ``r``.

    With d_n = (r - 1) n_eta the augmented blocks are

        A_a = [A  S_eta  0      B_ua = [B_u    B_omega_a = [B_omega  0
               0  0      I_dn           0 ]                 0        0
               0  0      0  ]                               0        I_n_eta]

    and the measurement C_a = [C 0]. Requires r >= 1: the chain must at
    least carry the uncertainty value itself.
    """
    if int(r) != r or r < 1:
        raise ValueError(f"chain order r must be a positive integer, got {r!r}")
    r = int(r)
    n, m, l, n_eta, n_omega, _ = sys.dims
    if n_eta == 0:
        raise ValueError("cannot augment a plant without an uncertainty channel")
    d_n = (r - 1) * n_eta
    n_a = n + r * n_eta

    A_a = np.zeros((n_a, n_a))
    A_a[:n, :n] = sys.A
    A_a[:n, n:n + n_eta] = sys.S_eta
    if d_n:
        A_a[n:n + d_n, n + n_eta:] = np.eye(d_n)

    B_ua = np.zeros((n_a, l))
    B_ua[:n] = sys.B_u

    B_omega_a = np.zeros((n_a, n_omega + n_eta))
    B_omega_a[:n, :n_omega] = sys.B_omega
    B_omega_a[n_a - n_eta:, n_omega:] = np.eye(n_eta)

    C_a = np.zeros((m, n_a))
    C_a[:, :n] = sys.C

    C_bar_a = np.zeros((n_eta + n, n_a))
    C_bar_a[:n_eta, n:n + n_eta] = np.eye(n_eta)
    C_bar_a[n_eta:, :n] = np.eye(n)

    return AugmentedSystem(A_a=A_a, B_ua=B_ua, B_omega_a=B_omega_a, C_a=C_a,
                           C_bar_a=C_bar_a, r=r, n=n, n_eta=n_eta)
