"""Two-atom outcome statistics built from one-particle amplitudes.

For two atoms launched ``T`` apart in the same Gaussian state, the
fermionised (Tonks-Girardeau) pair is the antisymmetrised product of the two
one-particle states times a sign factor that restores bosonic symmetry. Its
quadrant probabilities reduce to

    P_TT = PT^2 - dP,   P_RT = 2 (PT PR + dP),   P_RR = PR^2 - dP,

with the exchange term ``dP(T) = |int dp |BT|^2 |A|^2 exp(-i p^2 T / 2m)|^2``.
Non-interacting bosons flip the sign of ``dP``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import logsumexp

from .quadrature import panel_rule, phase_sum, refine_edges
from .scattering import AmplitudeTable, BarrierSpec, build_table
from .wavepacket import GaussianPacket, log_momentum_density, momentum_density

COVERAGE_TOL = 1e-10
SUM_TOL = 1e-10
NEG_TOL = 1e-12
# log|BT|^2 below this is treated as exactly opaque
LOG_T_FLOOR = -1.0e4


class StatisticsKind(enum.Enum):
    FERMIONISED = "fermionised"
    BOSON = "boson"

    @property
    def sign(self) -> int:
        """Sign multiplying the exchange term in ``P_TT`` and ``P_RR``."""
        return -1 if self is StatisticsKind.FERMIONISED else 1

    @classmethod
    def parse(cls, text: str) -> "StatisticsKind":
        key = text.strip().lower()
        aliases = {"fermionised": cls.FERMIONISED, "fermionized": cls.FERMIONISED,
                   "fermion": cls.FERMIONISED, "tg": cls.FERMIONISED,
                   "boson": cls.BOSON, "bosons": cls.BOSON}
        if key not in aliases:
            raise ValueError(f"unknown statistics kind {text!r}")
        return aliases[key]


class CoverageError(ValueError):
    """The amplitude table does not cover the packet's momentum support."""

    def __init__(self, uncovered: float):
        super().__init__(f"amplitude table misses {uncovered:.3e} of the packet weight")
        self.uncovered = uncovered


class InvariantError(ArithmeticError):
    """A probability identity failed beyond tolerance."""


@dataclass(frozen=True)
class OutcomeStats:
    PT: float
    PR: float
    deltaP: float
    P_TT: float
    P_RT: float
    P_RR: float
    kind: StatisticsKind = StatisticsKind.FERMIONISED
    T: float = float("nan")
    # launch overlap dP_init(T); zero when not evaluated
    deltaP_init: float = 0.0
    # probability left in the barrier region (time-domain results only)
    residual: float = 0.0

    @property
    def mean_n(self) -> float:
        return mean_transmitted_number(self)

    def check(self, tol: float = SUM_TOL) -> None:
        """Raise :class:`InvariantError` unless the sum rule and <n> = 2 PT hold."""
        total = self.P_TT + self.P_RT + self.P_RR
        if not abs(total - 1.0) <= tol:
            raise InvariantError(f"P_TT + P_RT + P_RR = {total!r} at T={self.T}")
        if not abs(self.PT + self.PR - 1.0) <= tol:
            raise InvariantError(f"PT + PR = {self.PT + self.PR!r} at T={self.T}")
        if not abs(self.mean_n - 2.0 * self.PT) <= tol:
            raise InvariantError(f"<n> = {self.mean_n!r} != 2 PT = {2 * self.PT!r}")


def _clamp(value: float, name: str) -> float:
    if value < -NEG_TOL:
        raise InvariantError(
            f"{name} = {value:.3e} < 0: exchange term inconsistent with PT"
        )
    return max(value, 0.0)


def outcome_probabilities(PT: float, deltaP: float, kind: StatisticsKind = StatisticsKind.FERMIONISED,
                          T: float = float("nan")) -> OutcomeStats:
    """Outcome triple from the single-atom transmission and the exchange term."""
    if not (-NEG_TOL <= PT <= 1.0 + NEG_TOL):
        raise ValueError(f"PT = {PT} is not a probability")
    if deltaP < -NEG_TOL:
        raise ValueError(f"exchange term must be non-negative, got {deltaP}")
    PT = min(max(PT, 0.0), 1.0)
    PR = 1.0 - PT
    s = kind.sign
    P_TT = _clamp(PT * PT + s * deltaP, "P_TT")
    P_RR = _clamp(PR * PR + s * deltaP, "P_RR")
    P_RT = _clamp(2.0 * (PT * PR - s * deltaP), "P_RT")
    return OutcomeStats(PT, PR, deltaP, P_TT, P_RT, P_RR, kind, T)


def mean_transmitted_number(stats: OutcomeStats) -> float:
    return 2.0 * stats.P_TT + stats.P_RT


# --- momentum-space quadrature -------------------------------------------------

@dataclass(frozen=True)
class _Rule:
    nodes: np.ndarray
    # quadrature weight times |A|^2
    w_packet: np.ndarray
    # log of quadrature weight times |A|^2 |BT|^2
    log_w_trans: np.ndarray
    m: float

    @property
    def log_PT(self) -> float:
        return float(logsumexp(self.log_w_trans))

    def scaled_transmitted(self) -> tuple[np.ndarray, float]:
        """Transmitted weights divided by their maximum, and log of that maximum."""
        top = float(np.max(self.log_w_trans))
        return np.exp(self.log_w_trans - top), top

    def amplitude(self, weights: np.ndarray, T) -> np.ndarray:
        return phase_sum(weights, self.nodes**2 / (2.0 * self.m), T)


def _rule(pkt: GaussianPacket, table: AmplitudeTable, T_max: float = 0.0) -> _Rule:
    if len(table) < 2:
        raise CoverageError(1.0)
    lo, hi = pkt.momentum_support()
    p = table.p_grid
    uncovered = pkt.covered_mass(0.0, math.inf) - pkt.covered_mass(p[0], p[-1])
    if uncovered > COVERAGE_TOL:
        raise CoverageError(uncovered)
    a, b = max(lo, p[0]), min(hi, p[-1])
    inner = p[(p > a) & (p < b)]
    edges = np.concatenate([[a], inner, [b]])
    width = 0.5 / pkt.sigma
    if T_max > 0:
        width = min(width, pkt.m / (b * T_max))
    # table intervals carry one cubic each; four nodes integrate them exactly
    nodes, gw = panel_rule(refine_edges(edges, width), order=4)
    log_T = np.maximum(table.log_T, LOG_T_FLOOR)
    if not np.all(np.isfinite(log_T)):
        raise ValueError("amplitude table holds non-finite transparencies")
    interp = PchipInterpolator(p, log_T)
    log_w = np.log(gw) + log_momentum_density(pkt, nodes) + np.minimum(interp(nodes), 0.0)
    return _Rule(nodes, gw * momentum_density(pkt, nodes), log_w, pkt.m)


def one_particle_probabilities(pkt: GaussianPacket, table: AmplitudeTable) -> tuple[float, float]:
    """Single-atom transmission and reflection probabilities ``(PT, PR)``.

    Weight at ``p <= 0`` never reaches the barrier and is counted as reflected.
    """
    rule = _rule(pkt, table)
    PT = math.exp(rule.log_PT)
    mass = float(np.sum(rule.w_packet))
    lo, hi = pkt.momentum_support()
    exact = pkt.covered_mass(max(lo, table.p_grid[0]), min(hi, table.p_grid[-1]))
    if not abs(mass - exact) <= SUM_TOL:
        raise InvariantError(f"packet quadrature off by {mass - exact:.3e}")
    PR = (mass - PT) + (1.0 - mass)
    if not abs(PT + PR - 1.0) <= SUM_TOL:
        raise InvariantError(f"PT + PR = {PT + PR!r}")
    return PT, PR


def log_transmission(pkt: GaussianPacket, table: AmplitudeTable) -> float:
    """``log PT``, finite when ``PT`` underflows."""
    return _rule(pkt, table).log_PT


def exchange_ratio(pkt: GaussianPacket, table: AmplitudeTable, T):
    """``dP(T) / PT^2``, evaluated with scaled weights (safe for opaque barriers)."""
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(T_arr < 0):
        raise ValueError("emission delay must be non-negative")
    rule = _rule(pkt, table, float(T_arr.max()))
    w, _ = rule.scaled_transmitted()
    out = np.abs(rule.amplitude(w, T_arr)) ** 2 / np.sum(w) ** 2
    return float(out[0]) if np.ndim(T) == 0 else out


def exchange_term(pkt: GaussianPacket, table: AmplitudeTable, T):
    """Exchange term ``dP(T)`` after both atoms have left the barrier."""
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    if np.any(T_arr < 0):
        raise ValueError("emission delay must be non-negative")
    rule = _rule(pkt, table, float(T_arr.max()))
    w, top = rule.scaled_transmitted()
    out = np.abs(rule.amplitude(w, T_arr)) ** 2 * math.exp(2.0 * top) if top > -700 else \
        np.zeros(T_arr.shape)
    return float(out[0]) if np.ndim(T) == 0 else out


def _full_overlap(pkt: GaussianPacket, T: np.ndarray) -> np.ndarray:
    """``int dp |A|^2 exp(-i p^2 T / 2m)`` over the whole momentum line."""
    g = T / (2.0 * pkt.m)
    a = pkt.sigma**2 / 2.0 + 1j * g
    b = -2j * g * pkt.p0
    pref = pkt.sigma / np.sqrt(2.0 * np.pi) * np.sqrt(np.pi / a)
    return pref * np.exp(b * b / (4.0 * a) - 1j * g * pkt.p0**2)


def outcome_stats(pkt: GaussianPacket, table: AmplitudeTable, T,
                  kind: StatisticsKind = StatisticsKind.FERMIONISED,
                  corrected: bool = False):
    """Outcome statistics at delay ``T`` (scalar) or for each entry of an array.

    ``corrected=False`` applies the three-outcome formulas with ``N = sqrt(2)``.
    ``corrected=True`` keeps the residual launch overlap: it uses the exact
    transmitted and reflected overlaps and the normalisation
    ``N^2 = 2 (1 -+ |I_full|^2)``, which is what a direct propagation measures.
    """
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    PT, PR = one_particle_probabilities(pkt, table)
    dP = np.atleast_1d(exchange_term(pkt, table, T_arr))
    I_full = _full_overlap(pkt, T_arr)
    dP_init = np.abs(I_full) ** 2
    out = []
    for i, t in enumerate(T_arr):
        if not corrected:
            st = outcome_probabilities(PT, float(dP[i]), kind, float(t))
        else:
            st = _corrected(pkt, table, PT, PR, float(t), complex(I_full[i]), kind)
        st = OutcomeStats(st.PT, st.PR, st.deltaP, st.P_TT, st.P_RT, st.P_RR, kind,
                          float(t), float(dP_init[i]))
        out.append(st)
    return out[0] if np.ndim(T) == 0 else out


def _corrected(pkt, table, PT, PR, T, I_full, kind) -> OutcomeStats:
    rule = _rule(pkt, table, T)
    w, top = rule.scaled_transmitted()
    I_T = complex(rule.amplitude(w, T)[0]) * math.exp(top) if top > -700 else 0j
    I_R = I_full - I_T
    s = kind.sign
    norm = 1.0 + s * abs(I_full) ** 2
    if norm < 1e-8:
        raise ValueError(f"launch states coincide at T={T}; the fermionised pair vanishes")
    P_TT = (PT * PT + s * abs(I_T) ** 2) / norm
    P_RR = (PR * PR + s * abs(I_R) ** 2) / norm
    P_RT = 2.0 * (PT * PR + s * (I_T * I_R.conjugate()).real) / norm
    return OutcomeStats(PT, PR, abs(I_T) ** 2, _clamp(P_TT, "P_TT"), _clamp(P_RT, "P_RT"),
                        _clamp(P_RR, "P_RR"), kind, T)


# --- tables ------------------------------------------------------------------------

def packet_grid(pkt: GaussianPacket, n: int = 4001) -> np.ndarray:
    """Uniform momentum grid over the packet support."""
    lo, hi = pkt.momentum_support()
    return np.linspace(lo, hi, n)


def converged_table(spec: BarrierSpec, pkt: GaussianPacket, T=0.0, *, n0: int = 2001,
                    atol: float = 1e-6, rtol: float = 0.0, max_points: int = 2**20 + 1):
    """Build a table on a uniform grid, halving the spacing until ``dP`` settles.

    Convergence means every exchange term in ``T`` and ``PT`` change by less
    than ``atol + rtol * |value|`` between successive halvings.
    """
    T_arr = np.atleast_1d(np.asarray(T, dtype=float))
    n = n0
    prev = None
    while True:
        table = build_table(spec, packet_grid(pkt, n), pkt.m)
        PT, _ = one_particle_probabilities(pkt, table)
        vals = np.concatenate([[PT], np.atleast_1d(exchange_term(pkt, table, T_arr))])
        if prev is not None and np.all(np.abs(vals - prev) <= atol + rtol * np.abs(vals)):
            return table
        if 2 * n - 1 > max_points:
            raise ArithmeticError(f"momentum grid did not converge with {n} points")
        prev = vals
        n = 2 * n - 1


# --- sampled wavefunctions -------------------------------------------------------

def _grid_step(x: np.ndarray) -> float:
    dx = np.diff(x)
    if x.size < 2 or np.ptp(dx) > 1e-9 * abs(dx[0]):
        raise ValueError("wavefunctions must be sampled on a uniform grid")
    return float(dx[0])


def _mask(x: np.ndarray, rng, dx: float) -> np.ndarray:
    lo, hi = rng
    if not lo < hi:
        raise ValueError(f"empty interval {rng}")
    edge_lo, edge_hi = x[0] - 0.5 * dx, x[-1] + 0.5 * dx
    if (math.isfinite(lo) and lo < edge_lo) or (math.isfinite(hi) and hi > edge_hi):
        raise ValueError(f"grid [{x[0]}, {x[-1]}] does not cover interval {rng}")
    return (x >= lo) & (x < hi)


def overlap(psi_i: np.ndarray, psi_j: np.ndarray, mask: np.ndarray, dx: float) -> complex:
    """``int_R dx psi_i^* psi_j`` on the masked region."""
    return complex(np.vdot(psi_i[mask], psi_j[mask]) * dx)


def quadrant_probability(psi1, psi2, x, x1_range, x2_range,
                         kind: StatisticsKind = StatisticsKind.FERMIONISED) -> float:
    """Probability that atom coordinates fall in ``x1_range`` x ``x2_range``.

    The pair state is the (anti)symmetrised product of the sampled one-particle
    states ``psi1`` (launched first) and ``psi2``. Ranges may use ``+-inf``.
    """
    x = np.asarray(x, dtype=float)
    psi1 = np.asarray(psi1, dtype=complex)
    psi2 = np.asarray(psi2, dtype=complex)
    if not (psi1.shape == psi2.shape == x.shape):
        raise ValueError("psi1, psi2 and x must share one grid")
    dx = _grid_step(x)
    m1 = _mask(x, x1_range, dx)
    m2 = _mask(x, x2_range, dx)
    full = np.ones_like(m1)
    s = kind.sign
    norm_sq = 2.0 * (1.0 + s * abs(overlap(psi1, psi2, full, dx)) ** 2)
    direct = (overlap(psi1, psi1, m1, dx) * overlap(psi2, psi2, m2, dx)
              + overlap(psi2, psi2, m1, dx) * overlap(psi1, psi1, m2, dx)).real
    exch = (overlap(psi1, psi2, m1, dx) * overlap(psi2, psi1, m2, dx)).real
    return (direct + 2.0 * s * exch) / norm_sq
