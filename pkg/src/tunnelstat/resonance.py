"""Transmission resonances and their Breit-Wigner predictions.

Near isolated resonances the transparency is modelled as

    |BT(p)|^2 = sum_n Gamma_n^2 / ((p^2/2m - E_n)^2 + Gamma_n^2),

with ``Gamma_n`` the half-width at half-maximum in energy.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq, curve_fit, minimize_scalar

from .scattering import BarrierSpec, transparency
from .wavepacket import GaussianPacket, momentum_density

log = logging.getLogger(__name__)

MIN_PEAK = 0.5
GATE_PEAK = 0.9
ISOLATION = 5.0
# |A|^2 at another resonance, relative to the probed one, above which a
# single-resonance prediction is refused
OVERLAP_TOL = 1e-3


class ResonanceError(ValueError):
    pass


class BreitWignerWarning(UserWarning):
    """The Breit-Wigner model is applied outside its stated validity."""


@dataclass(frozen=True)
class Resonance:
    n: int
    E_r: float
    Gamma: float
    m: float = 1.0
    # exact transparency at the peak
    peak: float = 1.0

    def __post_init__(self):
        if not (self.E_r > 0 and self.Gamma > 0):
            raise ValueError(f"resonance needs E_r > 0 and Gamma > 0, got {self}")

    @property
    def p_r(self) -> float:
        return math.sqrt(2.0 * self.m * self.E_r)


def _lorentzian(E, E_r, Gamma, height):
    return height * Gamma**2 / ((E - E_r) ** 2 + Gamma**2)


def _fit_peak(f: Callable[[float], float], lo: float, hi: float):
    """Refine one bracketed maximum of ``f``: returns ``(E_peak, peak, E_r, Gamma)``."""
    res = minimize_scalar(lambda E: -f(E), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * hi})
    E0 = float(res.x)
    peak = f(E0)
    half = 0.5 * peak

    def side(direction):
        step = max(hi - lo, 1e-12 * E0)
        a = E0
        while True:
            b = E0 + direction * step
            if b <= 0:
                b = 0.5 * a
            if f(b) < half:
                return brentq(lambda E: f(E) - half, min(a, b), max(a, b), xtol=1e-15,
                              rtol=4 * np.finfo(float).eps)
            a, step = b, 2 * step
            if step > 1e6 * E0:
                raise ResonanceError(f"no half-maximum crossing around E={E0}")

    E_minus, E_plus = side(-1.0), side(+1.0)
    hwhm = 0.5 * (E_plus - E_minus)
    # least-squares Lorentzian on a stencil tied to the peak, not to the scan grid
    E_fit = E0 + hwhm * np.linspace(-2.0, 2.0, 81)
    E_fit = E_fit[E_fit > 0]
    y = np.array([f(E) for E in E_fit])
    (E_r, Gamma, _), _ = curve_fit(_lorentzian, E_fit, y, p0=(E0, hwhm, peak),
                                   xtol=1e-14, ftol=1e-14)
    return E0, peak, float(E_r), abs(float(Gamma))


def find_peaks_in(f: Callable[[float], float], energy_window: tuple[float, float],
                  m: float = 1.0, n_scan: int = 20001) -> list[Resonance]:
    """Resonances of an arbitrary transparency function of energy."""
    e_lo, e_hi = energy_window
    if not (0 < e_lo < e_hi):
        raise ValueError(f"energy window must be positive and ordered, got {energy_window}")
    E = np.linspace(e_lo, e_hi, n_scan)
    y = np.array([f(e) for e in E]) if not hasattr(f, "vectorised") else f(E)
    idx = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] >= y[2:])) + 1
    found = []
    for i in idx:
        E0, peak, E_r, Gamma = _fit_peak(f, E[i - 1], E[i + 1])
        if peak < MIN_PEAK:
            log.info("peak at E=%.6g has transparency %.3g < %.2g; background too strong, "
                     "not fitted", E0, peak, MIN_PEAK)
            continue
        found.append((E_r, Gamma, peak))
    found.sort()
    return [Resonance(n + 1, E_r, G, m, float(peak)) for n, (E_r, G, peak) in enumerate(found)]


def find_resonances(spec: BarrierSpec, m: float = 1.0,
                    energy_window: tuple[float, float] = (0.05, 25.0),
                    n_scan: int = 20001) -> list[Resonance]:
    """Transmission peaks of ``spec`` inside ``energy_window``.

    Peaks are bracketed on a uniform energy scan of ``n_scan`` points, refined
    by bounded maximisation, measured by their half-maximum crossings and then
    fitted with a local Lorentzian. An empty list means no peak was found.
    """

    def f(E):
        return transparency(spec, np.sqrt(2.0 * m * np.asarray(E)), m)

    f.vectorised = True
    return find_peaks_in(f, energy_window, m, n_scan)


def isolation_ratio(r1: Resonance, r2: Resonance) -> float:
    """Level spacing in units of the summed widths."""
    return abs(r2.E_r - r1.E_r) / (r1.Gamma + r2.Gamma)


def breit_wigner_transparency(resonances: Sequence[Resonance], p, m: float | None = None):
    if not resonances:
        raise ValueError("need at least one resonance")
    m = resonances[0].m if m is None else m
    E = np.asarray(p, dtype=float) ** 2 / (2.0 * m)
    out = sum(_lorentzian(E, r.E_r, r.Gamma, 1.0) for r in resonances)
    return float(out) if np.ndim(out) == 0 else out


def _gate(resonances: Sequence[Resonance]) -> None:
    for r in resonances:
        if r.peak < GATE_PEAK:
            warnings.warn(f"resonance {r.n} peaks at {r.peak:.3g} < {GATE_PEAK}",
                          BreitWignerWarning, stacklevel=3)
    for a, b in zip(resonances, resonances[1:]):
        if isolation_ratio(a, b) < ISOLATION:
            warnings.warn(f"resonances {a.n} and {b.n} overlap "
                          f"(isolation {isolation_ratio(a, b):.3g})", BreitWignerWarning,
                          stacklevel=3)


def resonance_weight(pkt: GaussianPacket, res: Resonance) -> float:
    """Single-atom transmission through one resonance, ``(m pi / p_r) |A(p_r)|^2 Gamma``."""
    return pkt.m * math.pi / res.p_r * float(momentum_density(pkt, res.p_r)) * res.Gamma


def _check_probe(pkt: GaussianPacket, res: Resonance, others: Sequence[Resonance]):
    width_p = res.Gamma * pkt.m / res.p_r
    if 1.0 / pkt.sigma < 10.0 * width_p:
        warnings.warn(f"packet momentum spread {1 / pkt.sigma:.3g} is not much broader than "
                      f"the resonance ({width_p:.3g})", BreitWignerWarning, stacklevel=3)
    here = float(momentum_density(pkt, res.p_r))
    for o in others:
        if o.n == res.n:
            continue
        ratio = float(momentum_density(pkt, o.p_r)) / here if here > 0 else math.inf
        if ratio > OVERLAP_TOL:
            raise ResonanceError(
                f"packet weight at resonance {o.n} is {ratio:.3g} of that at resonance "
                f"{res.n}; single-resonance model does not apply"
            )


def single_resonance_deltaP(pkt: GaussianPacket, res: Resonance, T,
                            others: Sequence[Resonance] = ()):
    """``PT^2 exp(-2 Gamma T)`` for a packet probing one isolated resonance."""
    _check_probe(pkt, res, others)
    _gate([res])
    return resonance_weight(pkt, res) ** 2 * np.exp(-2.0 * res.Gamma * np.asarray(T, dtype=float))


def single_resonance_PTT(pkt: GaussianPacket, res: Resonance, T,
                         others: Sequence[Resonance] = ()):
    """Double-transmission probability ``PT^2 [1 - exp(-2 Gamma T)]``."""
    _check_probe(pkt, res, others)
    _gate([res])
    PT = resonance_weight(pkt, res)
    return PT**2 * (1.0 - np.exp(-2.0 * res.Gamma * np.asarray(T, dtype=float)))


def two_resonance_deltaP(pkt: GaussianPacket, res1: Resonance, res2: Resonance, T,
                         others: Sequence[Resonance] = ()):
    """Exchange term for a packet probing two resonances.

    Each resonance contributes a complex amplitude ``c_n exp(-i E_n T - Gamma_n T)``
    with ``c_n`` its single-atom weight; ``dP`` is the squared modulus of the sum,
    so the cross term beats at ``E_2 - E_1``.
    """
    probed = {res1.n, res2.n}
    rest = [o for o in others if o.n not in probed]
    for r in (res1, res2):
        _check_probe(pkt, r, rest)
    _gate(sorted([res1, res2], key=lambda r: r.E_r))
    T = np.asarray(T, dtype=float)
    c1, c2 = resonance_weight(pkt, res1), resonance_weight(pkt, res2)
    G1, G2 = res1.Gamma, res2.Gamma
    return (c1**2 * np.exp(-2 * G1 * T) + c2**2 * np.exp(-2 * G2 * T)
            + 2 * c1 * c2 * np.exp(-(G1 + G2) * T) * np.cos((res2.E_r - res1.E_r) * T))
