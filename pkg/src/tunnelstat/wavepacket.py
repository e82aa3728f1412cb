"""Gaussian one-particle launch states.

A packet emitted from ``x0`` at time ``t_emit`` has the momentum amplitude

    A(p) = sigma^(1/2) (2 pi)^(-1/4) exp(-(p - p0)^2 sigma^2 / 4),

so ``|A|^2`` is a normal density with standard deviation ``1/sigma`` and the
position density at emission is proportional to ``exp(-2 (x - x0)^2 / sigma^2)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .quadrature import oscillatory_sum, panel_rule, refine_edges

# half-width of the momentum window, in units of 1/sigma
SUPPORT_WIDTHS = 10.0
MIN_P0_SIGMA = 5.0


@dataclass(frozen=True)
class GaussianPacket:
    p0: float
    sigma: float
    m: float = 1.0
    x0: float = 0.0
    t_emit: float = 0.0

    def __post_init__(self):
        for name in ("p0", "sigma", "m"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise ValueError(f"packet {name} must be positive, got {val}")

    @property
    def truncated_mass(self) -> float:
        """Weight of ``|A|^2`` at ``p <= 0``, dropped by momentum quadratures."""
        return 0.5 * float(erfc(self.p0 * self.sigma / math.sqrt(2.0)))

    def momentum_support(self) -> tuple[float, float]:
        """Positive momentum window carrying all but ~1e-22 of the weight."""
        if self.p0 * self.sigma < MIN_P0_SIGMA:
            raise ValueError(
                f"p0*sigma = {self.p0 * self.sigma:.3g} < {MIN_P0_SIGMA}; "
                f"negative-momentum weight {self.truncated_mass:.2e} is not negligible"
            )
        lo = self.p0 - SUPPORT_WIDTHS / self.sigma
        hi = self.p0 + SUPPORT_WIDTHS / self.sigma
        return max(lo, 1e-6 * self.p0), hi

    def covered_mass(self, lo: float, hi: float) -> float:
        """Exact weight of ``|A|^2`` on ``[lo, hi]``."""
        s = self.sigma / math.sqrt(2.0)
        return 0.5 * float(erfc((lo - self.p0) * s) - erfc((hi - self.p0) * s))


def momentum_amplitude(pkt: GaussianPacket, p):
    """Real Gaussian momentum amplitude ``A(p)``, without source or delay phases."""
    p = np.asarray(p, dtype=float)
    return np.sqrt(pkt.sigma) / (2.0 * np.pi) ** 0.25 * np.exp(
        -((p - pkt.p0) ** 2) * pkt.sigma**2 / 4.0
    )


def momentum_density(pkt: GaussianPacket, p):
    p = np.asarray(p, dtype=float)
    return pkt.sigma / np.sqrt(2.0 * np.pi) * np.exp(-((p - pkt.p0) ** 2) * pkt.sigma**2 / 2.0)


def log_momentum_density(pkt: GaussianPacket, p):
    p = np.asarray(p, dtype=float)
    return np.log(pkt.sigma / np.sqrt(2.0 * np.pi)) - (p - pkt.p0) ** 2 * pkt.sigma**2 / 2.0


def position_wavefunction(pkt: GaussianPacket, x, t: float):
    """Freely evolved packet ``Psi(x, t)``, including spreading.

    Closed form of ``(2 pi)^(-1/2) int dp A(p) exp[i p (x - x0) - i p^2 (t - t_emit) / 2m]``.
    """
    x = np.asarray(x, dtype=float)
    tau = t - pkt.t_emit
    y = x - pkt.x0
    a = pkt.sigma**2 / 4.0 + 1j * tau / (2.0 * pkt.m)
    pref = np.sqrt(pkt.sigma) / (2.0 * np.pi) ** 0.25 / np.sqrt(2.0 * np.pi) * np.sqrt(np.pi / a)
    shift = y - pkt.p0 * tau / pkt.m
    phase = pkt.p0 * y - pkt.p0**2 * tau / (2.0 * pkt.m)
    return pref * np.exp(-(shift**2) / (4.0 * a) + 1j * phase)


def _overlap_rule(pkt: GaussianPacket, T_max: float):
    lo, hi = pkt.momentum_support()
    # panels resolve the Gaussian and keep the phase change per panel below ~1 rad
    width = 0.5 / pkt.sigma
    if T_max > 0:
        width = min(width, pkt.m / (hi * T_max))
    edges = refine_edges(np.array([lo, hi]), width)
    return panel_rule(edges)


def initial_overlap_decay(pkt: GaussianPacket, T):
    """Launch overlap ``|int dp |A(p)|^2 exp(-i p^2 T / 2m)|^2`` by quadrature.

    Vanishes once the launch separation ``p0 T / m`` exceeds a few ``sigma``.
    """
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(T_arr < 0):
        raise ValueError("emission delay must be non-negative")
    nodes, weights = _overlap_rule(pkt, float(T_arr.max()))
    w = weights * momentum_density(pkt, nodes)
    out = oscillatory_sum(w, nodes**2 / (2.0 * pkt.m), T_arr)
    return float(out[0]) if np.ndim(T) == 0 else out


def initial_overlap_closed_form(pkt: GaussianPacket, T):
    """Same overlap integrated over the whole momentum line in closed form."""
    g = np.asarray(T, dtype=float) / (2.0 * pkt.m)
    a2 = pkt.sigma**4 / 4.0 + g**2
    return pkt.sigma**2 / (2.0 * np.sqrt(a2)) * np.exp(-(g**2) * pkt.p0**2 * pkt.sigma**2 / a2)


def separation_time(pkt: GaussianPacket, widths: float = 5.0) -> float:
    """Delay at which the launch separation ``p0 T / m`` equals ``widths * sigma``."""
    return widths * pkt.sigma * pkt.m / pkt.p0
