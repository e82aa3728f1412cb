"""Non-resonance tunnelling through a broad rectangular barrier.

Deep under the barrier ``|BT(p)|^2 ~ C(p) exp(-2 S(p))`` with the action
``S(p) = d sqrt(2 m V - p^2)``. Expanding ``S`` to second order about ``p0``
turns the transmitted momentum density into a Gaussian, and the exchange
term becomes

    dP(T) / PT^2 = exp[-(T/T0)^2 * k0^3 sigma^2 / (sigma^2 k0^3 - 2 (p0^2 + k0^2) d)],

with ``k0 = sqrt(2 m V - p0^2)`` and ``T0 = m sigma / p0``. Launch delay
spreading is neglected, as in the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scattering import AmplitudeTable
from .twobody import LOG_T_FLOOR, _rule
from .wavepacket import GaussianPacket, log_momentum_density


class ValidityError(ValueError):
    pass


@dataclass(frozen=True)
class ActionExpansion:
    S0: float
    S1: float
    S2: float
    p0: float
    k0: float
    T0: float
    sigma: float
    d: float
    m: float = 1.0

    @property
    def denominator(self) -> float:
        """``sigma^2 k0^3 - 2 (p0^2 + k0^2) d``; the closed form needs it positive."""
        return self.sigma**2 * self.k0**3 - 2.0 * (self.p0**2 + self.k0**2) * self.d

    @property
    def decay_coefficient(self) -> float:
        """Coefficient of ``(T/T0)^2`` in the exponent of the closed form."""
        den = self.denominator
        if not den > 0:
            raise ValidityError(
                f"denominator sigma^2 k0^3 - 2(p0^2 + k0^2) d = {den:.6g} is not positive; "
                "the Gaussian estimate does not apply"
            )
        return self.sigma**2 * self.k0**3 / den


def action(V: float, d: float, p, m: float = 1.0):
    """Under-barrier action ``d sqrt(2 m V - p^2)``."""
    return d * np.sqrt(2.0 * m * V - np.asarray(p, dtype=float) ** 2)


def action_expansion(V: float, d: float, p0: float, m: float = 1.0,
                     sigma: float = 1.0) -> ActionExpansion:
    if not d > 0:
        raise ValueError(f"barrier width must be positive, got {d}")
    if not (p0 > 0 and sigma > 0 and m > 0):
        raise ValueError("p0, sigma and m must be positive")
    k2 = 2.0 * m * V - p0 * p0
    if not k2 > 0:
        raise ValidityError(f"p0^2 = {p0 * p0:.6g} is not below 2mV = {2 * m * V:.6g}")
    k0 = math.sqrt(k2)
    return ActionExpansion(
        S0=d * k0,
        S1=-p0 * d / k0,
        S2=-2.0 * m * V * d / k0**3,
        p0=p0,
        k0=k0,
        T0=m * sigma / p0,
        sigma=sigma,
        d=d,
        m=m,
    )


def gaussian_decay_coefficient(exp: ActionExpansion) -> float:
    """Same coefficient rebuilt from ``S2`` by doing the Gaussian integral directly.

    The transmitted density is ``exp[-(sigma^2/2 + S2) u^2 - 2 S1 u]`` in
    ``u = p - p0``, and the launch phase is ``-i p0 T u / m``, giving
    ``sigma^2 / (sigma^2 + 2 S2)``.
    """
    a = exp.sigma**2 / 2.0 + exp.S2
    if not a > 0:
        raise ValidityError("transmitted momentum density is not normalisable")
    return exp.sigma**2 / (2.0 * a)


def broad_barrier_ratio(exp: ActionExpansion, T):
    """Closed-form ``dP(T) / PT^2``."""
    T = np.asarray(T, dtype=float)
    return np.exp(-((T / exp.T0) ** 2) * exp.decay_coefficient)


def broad_barrier_PTT(exp: ActionExpansion, PT: float, T):
    """Double-transmission probability ``PT^2 (1 - dP/PT^2)``."""
    return PT**2 * (1.0 - broad_barrier_ratio(exp, T))


def quadratic_model_density(exp: ActionExpansion, p):
    """Transmitted momentum density from the quadratic action, scaled to unit height."""
    u = np.asarray(p, dtype=float) - exp.p0
    log_d = -(exp.sigma**2 / 2.0) * u**2 - 2.0 * (exp.S1 * u + 0.5 * exp.S2 * u**2)
    return np.exp(log_d - np.max(log_d)) if np.ndim(log_d) else 1.0


def _moments(p: np.ndarray, log_w: np.ndarray) -> tuple[float, float]:
    w = np.exp(log_w - np.max(log_w))
    w /= w.sum()
    mean = float(np.sum(w * p))
    return mean, float(np.sqrt(np.sum(w * (p - mean) ** 2)))


def narrowing_check(pkt: GaussianPacket, table: AmplitudeTable) -> float:
    """RMS momentum width of the transmitted packet over that of the incident one.

    Values below one mean the barrier filters a narrow momentum band, as a
    resonance does; broad barriers give values at or above one.
    """
    rule = _rule(pkt, table)
    if not np.max(table.log_T) > LOG_T_FLOOR:
        raise ValueError("barrier is fully opaque over the packet support")
    nodes = rule.nodes
    log_inc = np.log(rule.w_packet)
    _, w_inc = _moments(nodes, log_inc)
    _, w_tr = _moments(nodes, rule.log_w_trans)
    return w_tr / w_inc


def transmitted_shift(pkt: GaussianPacket, table: AmplitudeTable) -> float:
    """Mean transmitted momentum minus mean incident momentum."""
    rule = _rule(pkt, table)
    m_inc, _ = _moments(rule.nodes, np.log(rule.w_packet))
    m_tr, _ = _moments(rule.nodes, rule.log_w_trans)
    return m_tr - m_inc


def unit_height_densities(pkt: GaussianPacket, table: AmplitudeTable):
    """Incident and transmitted momentum densities on the table grid, each with unit maximum."""
    p = table.p_grid
    log_inc = log_momentum_density(pkt, p)
    log_tr = log_inc + table.log_T
    return np.exp(log_inc - log_inc.max()), np.exp(log_tr - log_tr.max())
