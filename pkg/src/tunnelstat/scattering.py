"""Exact one-particle scattering amplitudes for piecewise 1D barriers.

Units are hbar = 1. A left-incident plane wave of momentum ``p`` is written

    psi(x) = exp(i p x) + BR exp(-i p x)    left of the barrier,
    psi(x) = BT exp(i p x)                  right of the barrier,

with the phases referred to the global origin ``x = 0``.

The amplitudes are obtained by carrying the state vector ``(psi, psi')``
from the right edge of the barrier to the left edge with 2x2 transfer
matrices. Under-barrier segments use hyperbolic propagators with the growing
exponential factored out, and the running product is renormalised after every
element while the scale is accumulated as a logarithm. This keeps the
transparency of very opaque barriers (``|BT|^2`` far below the smallest
double) available as :attr:`AmplitudePair.log_T`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

FLUX_TOL = 1e-10


class FluxError(ArithmeticError):
    """Raised when ``|BT|^2 + |BR|^2`` departs from one beyond tolerance."""


def _as_float_tuple(values: Sequence[float]) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


@dataclass(frozen=True)
class DeltaComb:
    """Sum of delta barriers ``sum_j strengths[j] * delta(x - positions[j])``."""

    positions: tuple[float, ...]
    strengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "positions", _as_float_tuple(self.positions))
        object.__setattr__(self, "strengths", _as_float_tuple(self.strengths))
        if len(self.positions) == 0:
            raise ValueError("DeltaComb needs at least one position")
        if len(self.positions) != len(self.strengths):
            raise ValueError(
                f"{len(self.positions)} positions but {len(self.strengths)} strengths"
            )
        if np.any(np.diff(self.positions) <= 0):
            raise ValueError("delta positions must be strictly ascending")
        if not np.all(np.isfinite(self.positions + self.strengths)):
            raise ValueError("delta positions and strengths must be finite")

    @property
    def extent(self) -> tuple[float, float]:
        return self.positions[0], self.positions[-1]

    def mirrored(self) -> "DeltaComb":
        return DeltaComb(
            tuple(-x for x in reversed(self.positions)), tuple(reversed(self.strengths))
        )

    def _elements(self):
        out = []
        for i, (x, omega) in enumerate(zip(self.positions, self.strengths)):
            out.append(("delta", omega))
            if i + 1 < len(self.positions):
                out.append(("segment", 0.0, self.positions[i + 1] - x))
        return out


@dataclass(frozen=True)
class Rectangular:
    """Rectangular barrier of ``height`` on ``[left, left + width]``."""

    height: float
    width: float
    left: float = 0.0

    def __post_init__(self):
        if not (self.width > 0 and np.isfinite(self.width)):
            raise ValueError(f"barrier width must be positive, got {self.width}")
        if not (np.isfinite(self.height) and np.isfinite(self.left)):
            raise ValueError("barrier height and left edge must be finite")

    @property
    def extent(self) -> tuple[float, float]:
        return self.left, self.left + self.width

    def mirrored(self) -> "Rectangular":
        return Rectangular(self.height, self.width, -(self.left + self.width))

    def _elements(self):
        return [("segment", float(self.height), float(self.width))]


@dataclass(frozen=True)
class PiecewiseConstant:
    """Potential equal to ``heights[j]`` on ``[breakpoints[j], breakpoints[j+1])``.

    Zero outside the outermost breakpoints.
    """

    breakpoints: tuple[float, ...]
    heights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", _as_float_tuple(self.breakpoints))
        object.__setattr__(self, "heights", _as_float_tuple(self.heights))
        if len(self.breakpoints) < 2:
            raise ValueError("need at least two breakpoints")
        if len(self.heights) != len(self.breakpoints) - 1:
            raise ValueError(
                f"{len(self.breakpoints)} breakpoints need {len(self.breakpoints) - 1} "
                f"heights, got {len(self.heights)}"
            )
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly ascending")
        if not np.all(np.isfinite(self.breakpoints + self.heights)):
            raise ValueError("breakpoints and heights must be finite")

    @property
    def extent(self) -> tuple[float, float]:
        return self.breakpoints[0], self.breakpoints[-1]

    def mirrored(self) -> "PiecewiseConstant":
        return PiecewiseConstant(
            tuple(-x for x in reversed(self.breakpoints)), tuple(reversed(self.heights))
        )

    def _elements(self):
        widths = np.diff(self.breakpoints)
        return [("segment", v, float(w)) for v, w in zip(self.heights, widths)]


BarrierSpec = Union[DeltaComb, Rectangular, PiecewiseConstant]


def double_delta(omega: float, d: float = 1.0) -> DeltaComb:
    """``omega * [delta(x) + delta(x - d)]``."""
    return DeltaComb((0.0, d), (omega, omega))


@dataclass(frozen=True)
class AmplitudePair:
    BT: complex
    BR: complex
    # log|BT|^2, finite even when |BT|^2 underflows
    log_T: float = field(default=float("nan"))

    @property
    def transparency(self) -> float:
        return float(np.exp(self.log_T))


def _check_spec(spec) -> None:
    if not isinstance(spec, (DeltaComb, Rectangular, PiecewiseConstant)):
        raise TypeError(f"not a barrier spec: {spec!r}")


def _segment_backward(p2: np.ndarray, V: float, w: float, m: float):
    """Backward propagator across a flat segment, plus its log scale.

    Maps ``(psi, psi')`` at the right end to the left end.
    """
    q2 = p2 - 2.0 * m * V
    n = p2.shape[0]
    P = np.empty((n, 2, 2), dtype=complex)
    log_scale = np.zeros(n)

    prop = q2 >= 0
    if np.any(prop):
        q = np.sqrt(q2[prop])
        c = np.cos(q * w)
        # sin(qw)/q, finite as q -> 0
        s_over_q = w * np.sinc(q * w / np.pi)
        P[prop, 0, 0] = c
        P[prop, 0, 1] = -s_over_q
        P[prop, 1, 0] = q * np.sin(q * w)
        P[prop, 1, 1] = c

    ev = ~prop
    if np.any(ev):
        kappa = np.sqrt(-q2[ev])
        e2 = np.exp(-2.0 * kappa * w)
        ch = 0.5 * (1.0 + e2)
        sh = -0.5 * np.expm1(-2.0 * kappa * w)
        with np.errstate(divide="ignore", invalid="ignore"):
            sh_over_k = np.where(kappa * w > 1e-12, sh / kappa, w)
        P[ev, 0, 0] = ch
        P[ev, 0, 1] = -sh_over_k
        P[ev, 1, 0] = -kappa * sh
        P[ev, 1, 1] = ch
        log_scale[ev] = kappa * w
    return P, log_scale


def _amplitude_arrays(spec: BarrierSpec, p: np.ndarray, m: float):
    """Vectorised amplitudes: returns ``(BT, BR, log_T)`` arrays."""
    _check_spec(spec)
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        raise ValueError("momenta must be positive")
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    n = p.shape[0]
    p2 = p * p
    M = np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()
    L = np.zeros(n)
    for elem in spec._elements():
        if elem[0] == "delta":
            P = np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)).copy()
            P[:, 1, 0] = -2.0 * m * elem[1]
            ls = 0.0
        else:
            P, ls = _segment_backward(p2, elem[1], elem[2], m)
        M = M @ P
        s = np.max(np.abs(M), axis=(1, 2))
        M /= s[:, None, None]
        L += np.log(s) + ls

    xl, xr = spec.extent
    psi = M[:, 0, 0] + 1j * p * M[:, 0, 1]
    dpsi = M[:, 1, 0] + 1j * p * M[:, 1, 1]
    a = 0.5 * (psi + dpsi / (1j * p))
    b = 0.5 * (psi - dpsi / (1j * p))
    log_T = -2.0 * L - 2.0 * np.log(np.abs(a))
    BT = np.exp(-1j * p * (xr - xl) - L) / a
    BR = b / a * np.exp(2j * p * xl)
    return BT, BR, log_T


def _flux_defect(BR: np.ndarray, log_T: np.ndarray) -> np.ndarray:
    return np.abs(np.abs(BR) ** 2 + np.exp(log_T) - 1.0)


def amplitudes(spec: BarrierSpec, p: float, m: float = 1.0) -> AmplitudePair:
    """Transmission and reflection amplitudes for a left-incident wave."""
    BT, BR, log_T = _amplitude_arrays(spec, np.array([float(p)]), m)
    defect = _flux_defect(BR, log_T)[0]
    if not defect <= FLUX_TOL:
        raise FluxError(f"flux not conserved at p={p}: |BT|^2+|BR|^2-1 = {defect:.3e}")
    return AmplitudePair(complex(BT[0]), complex(BR[0]), float(log_T[0]))


def transparency(spec: BarrierSpec, p, m: float = 1.0):
    """``|BT(p)|^2``; accepts a scalar or an array of momenta."""
    return np.exp(log_transparency(spec, p, m))


def log_transparency(spec: BarrierSpec, p, m: float = 1.0):
    """``log |BT(p)|^2``, finite for arbitrarily opaque barriers."""
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    _, BR, log_T = _amplitude_arrays(spec, arr, m)
    bad = np.flatnonzero(~(_flux_defect(BR, log_T) <= FLUX_TOL))
    if bad.size:
        raise FluxError(f"flux not conserved at p={arr[bad[0]]}")
    return float(log_T[0]) if np.ndim(p) == 0 else log_T


@dataclass(frozen=True)
class AmplitudeTable:
    """Amplitudes sampled on an ascending momentum grid."""

    p_grid: np.ndarray
    BT: np.ndarray
    BR: np.ndarray
    m: float = 1.0
    log_T: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.p_grid, dtype=float)
        BT = np.asarray(self.BT, dtype=complex)
        BR = np.asarray(self.BR, dtype=complex)
        if not (p.shape == BT.shape == BR.shape and p.ndim == 1):
            raise ValueError("p_grid, BT and BR must be 1D arrays of equal length")
        if p.size and (np.any(p <= 0) or np.any(np.diff(p) <= 0)):
            raise ValueError("p_grid must be positive and strictly ascending")
        if self.log_T is None:
            with np.errstate(divide="ignore"):
                log_T = 2.0 * np.log(np.abs(BT))
        else:
            log_T = np.asarray(self.log_T, dtype=float)
            if log_T.shape != p.shape:
                raise ValueError("log_T must match p_grid")
        for name, val in (("p_grid", p), ("BT", BT), ("BR", BR), ("log_T", log_T)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    def __len__(self) -> int:
        return self.p_grid.size

    def __getitem__(self, i: int) -> AmplitudePair:
        return AmplitudePair(complex(self.BT[i]), complex(self.BR[i]), float(self.log_T[i]))

    @property
    def pairs(self) -> list[AmplitudePair]:
        return [self[i] for i in range(len(self))]

    @property
    def transparency(self) -> np.ndarray:
        return np.exp(self.log_T)


def build_table(spec: BarrierSpec, p_grid, m: float = 1.0) -> AmplitudeTable:
    """Tabulate amplitudes on ``p_grid`` with pointwise flux checks."""
    p = np.asarray(p_grid, dtype=float).ravel()
    if p.size == 0:
        return AmplitudeTable(p, np.zeros(0, complex), np.zeros(0, complex), m, np.zeros(0))
    if np.any(np.diff(p) <= 0):
        raise ValueError("p_grid must be strictly ascending")
    bad = np.flatnonzero(~(p > 0))
    if bad.size:
        raise ValueError(f"non-positive momentum {p[bad[0]]} at grid index {bad[0]}")
    BT, BR, log_T = _amplitude_arrays(spec, p, m)
    defect = _flux_defect(BR, log_T)
    bad = np.flatnonzero(~(defect <= FLUX_TOL))
    if bad.size:
        i = bad[0]
        raise FluxError(
            f"flux not conserved at grid index {i} (p={p[i]}): defect {defect[i]:.3e}"
        )
    return AmplitudeTable(p, BT, BR, m, log_T)
