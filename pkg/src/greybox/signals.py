"""Deterministic signal generators for inputs, disturbances, and noise.

Estimation and error-dynamics analysis need signals with exact time
derivatives (the filter error system is driven by the derivative of the
measurement noise), so every generator except 'filtered-random' is
analytic; 'filtered-random' differentiates its smoothing spline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class SignalSpec:
    """A vector-valued time signal with exact derivatives.

    Use the classmethod constructors; the generic fields are kind
    specific and serialize to/from plain JSON dicts.
    """

    kind: str
    dim: int
    params: dict = field(default_factory=dict)

    _KINDS = ("multisine", "constant", "ramp", "polynomial", "filtered-random")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.dim < 0:
            raise ValueError("dim must be nonnegative")

    # ---- constructors ---------------------------------------------------
    @classmethod
    def zero(cls, dim: int) -> "SignalSpec":
        return cls.constant(np.zeros(dim))

    @classmethod
    def constant(cls, values) -> "SignalSpec":
        values = np.atleast_1d(np.asarray(values, dtype=np.float64))
        return cls(kind="constant", dim=values.size,
                   params={"values": values.tolist()})

    @classmethod
    def ramp(cls, rates, offsets=None) -> "SignalSpec":
        rates = np.atleast_1d(np.asarray(rates, dtype=np.float64))
        offsets = np.zeros_like(rates) if offsets is None else \
            np.atleast_1d(np.asarray(offsets, dtype=np.float64))
        return cls(kind="ramp", dim=rates.size,
                   params={"rates": rates.tolist(), "offsets": offsets.tolist()})

    @classmethod
    def polynomial(cls, coeffs) -> "SignalSpec":
        """coeffs[j, k] multiplies t**k in channel j."""
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=np.float64))
        return cls(kind="polynomial", dim=coeffs.shape[0],
                   params={"coeffs": coeffs.tolist()})

    @classmethod
    def multisine(cls, amplitudes, frequencies_rad_s, phases=None,
                  seed: Optional[int] = None) -> "SignalSpec":
        """Sum of sinusoids; random phases are drawn from ``seed``."""
        amplitudes = np.atleast_2d(np.asarray(amplitudes, dtype=np.float64))
        freqs = np.atleast_1d(np.asarray(frequencies_rad_s, dtype=np.float64))
        if amplitudes.shape[1] != freqs.size:
            raise ValueError("amplitudes must have one column per frequency")
        if phases is None:
            rng = np.random.default_rng(seed)
            phases = rng.uniform(0.0, 2.0 * np.pi, size=amplitudes.shape)
        phases = np.atleast_2d(np.asarray(phases, dtype=np.float64))
        if phases.shape != amplitudes.shape:
            raise ValueError("phases must match amplitudes in shape")
        return cls(kind="multisine", dim=amplitudes.shape[0],
                   params={"amplitudes": amplitudes.tolist(),
                           "frequencies_rad_s": freqs.tolist(),
                           "phases": phases.tolist(),
                           "seed": seed})

    @classmethod
    def filtered_random(cls, dim: int, amplitude: float, knot_dt: float = 0.25,
                        seed: int = 0, duration: float = 120.0) -> "SignalSpec":
        """Cubic-spline interpolation of seeded random knots.

        Smooth enough to differentiate (the derivative comes from the
        spline itself, never from finite differences). The knot grid is
        fixed by ``duration`` so the signal does not depend on the
        evaluation window; evaluating past the duration extrapolates.
        """
        if knot_dt <= 0 or duration <= 0:
            raise ValueError("knot_dt and duration must be positive")
        return cls(kind="filtered-random", dim=dim,
                   params={"amplitude": float(amplitude),
                           "knot_dt": float(knot_dt), "seed": int(seed),
                           "duration": float(duration)})

    # ---- evaluation -----------------------------------------------------
    @property
    def differentiable(self) -> bool:
        return True  # every kind provides a derivative; see class docstring

    def _spline(self):
        from scipy.interpolate import CubicSpline

        knot_dt = self.params["knot_dt"]
        n_knots = int(np.ceil(self.params["duration"] / knot_dt)) + 5
        rng = np.random.default_rng(self.params["seed"])
        values = self.params["amplitude"] * rng.normal(size=(n_knots, self.dim))
        knots = (np.arange(n_knots) - 2) * knot_dt  # two knots before t=0
        return CubicSpline(knots, values, axis=0)

    def eval(self, t) -> np.ndarray:
        """Evaluate on times ``t``; returns shape (len(t), dim)."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if self.dim == 0:
            return np.zeros((t.size, 0))
        if self.kind == "constant":
            return np.tile(np.asarray(self.params["values"]), (t.size, 1))
        if self.kind == "ramp":
            rates = np.asarray(self.params["rates"])
            offsets = np.asarray(self.params["offsets"])
            return t[:, None] * rates[None, :] + offsets[None, :]
        if self.kind == "polynomial":
            coeffs = np.asarray(self.params["coeffs"])  # (dim, deg+1)
            powers = t[:, None] ** np.arange(coeffs.shape[1])[None, :]
            return powers @ coeffs.T
        if self.kind == "multisine":
            amp = np.asarray(self.params["amplitudes"])  # (dim, K)
            w = np.asarray(self.params["frequencies_rad_s"])
            ph = np.asarray(self.params["phases"])
            arg = t[:, None, None] * w[None, None, :] + ph[None, :, :]
            return np.sum(amp[None, :, :] * np.sin(arg), axis=2)
        # filtered-random
        return self._spline()(t)

    def derivative(self, t, order: int = 1) -> np.ndarray:
        """Exact time derivative of the given order, shape (len(t), dim)."""
        if order < 1:
            raise ValueError("order must be >= 1")
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if self.dim == 0:
            return np.zeros((t.size, 0))
        if self.kind == "constant":
            return np.zeros((t.size, self.dim))
        if self.kind == "ramp":
            if order == 1:
                return np.tile(np.asarray(self.params["rates"]), (t.size, 1))
            return np.zeros((t.size, self.dim))
        if self.kind == "polynomial":
            coeffs = np.asarray(self.params["coeffs"])
            for _ in range(order):
                deg = coeffs.shape[1]
                coeffs = coeffs[:, 1:] * np.arange(1, deg)[None, :] if deg > 1 \
                    else np.zeros((self.dim, 1))
            powers = t[:, None] ** np.arange(coeffs.shape[1])[None, :]
            return powers @ coeffs.T
        if self.kind == "multisine":
            amp = np.asarray(self.params["amplitudes"])
            w = np.asarray(self.params["frequencies_rad_s"])
            ph = np.asarray(self.params["phases"])
            # d/dt sin(wt + p) = w sin(wt + p + pi/2)
            arg = (t[:, None, None] * w[None, None, :] + ph[None, :, :]
                   + order * np.pi / 2.0)
            gain = w[None, None, :] ** order
            return np.sum(amp[None, :, :] * gain * np.sin(arg), axis=2)
        spline = self._spline()
        return spline.derivative(order)(t)

    def amplitude_bound(self, t_max: Optional[float] = None) -> np.ndarray:
        """Per-channel bound on |signal| (over [0, t_max] where it matters)."""
        if self.dim == 0:
            return np.zeros(0)
        if self.kind == "constant":
            return np.abs(np.asarray(self.params["values"]))
        if self.kind == "multisine":
            return np.sum(np.abs(np.asarray(self.params["amplitudes"])), axis=1)
        if self.kind == "ramp":
            if t_max is None:
                raise ValueError("ramp bound needs t_max")
            return (np.abs(np.asarray(self.params["offsets"]))
                    + np.abs(np.asarray(self.params["rates"])) * t_max)
        if self.kind == "polynomial":
            if t_max is None:
                raise ValueError("polynomial bound needs t_max")
            coeffs = np.abs(np.asarray(self.params["coeffs"]))
            powers = t_max ** np.arange(coeffs.shape[1])
            return coeffs @ powers
        raise ValueError("no closed-form bound for filtered-random signals")

    # ---- serialization ---------------------------------------------------
    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim, "params": dict(self.params)}

    @classmethod
    def from_json_dict(cls, d: dict) -> "SignalSpec":
        return cls(kind=d["kind"], dim=int(d["dim"]), params=dict(d["params"]))
