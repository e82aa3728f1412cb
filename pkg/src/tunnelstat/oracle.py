"""Time-domain cross-check of the momentum-space statistics.

Each one-particle packet is propagated on a uniform grid with the
Crank-Nicolson scheme for ``-d^2/dx^2 / 2m + V(x)``. The two-atom state is
then assembled from the sampled wavefunctions and its quadrant probabilities
integrated directly in position space.

The second atom is launched ``T`` after the first in the same state. With a
time-independent Hamiltonian its wavefunction at time ``t`` equals the first
atom's wavefunction at ``t - T``, so one propagation provides both atoms for
a whole sweep of delays.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .scattering import BarrierSpec, DeltaComb, PiecewiseConstant, Rectangular
from .twobody import OutcomeStats, StatisticsKind, overlap, quadrant_probability
from .wavepacket import GaussianPacket, position_wavefunction

NORM_TOL = 1e-6
RESIDUAL_TOL = 1e-4
EDGE_TOL = 1e-6
POINTS_PER_WAVELENGTH = 20
# region boundaries sit this many packet widths outside the barrier
REGION_WIDTHS = 5.0


class OracleError(RuntimeError):
    pass


@dataclass
class GridState:
    x: np.ndarray
    values: np.ndarray
    t: float = 0.0
    m: float = 1.0

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.dx)

    def probability(self, lo: float, hi: float) -> float:
        mask = (self.x >= lo) & (self.x < hi)
        return float(np.sum(np.abs(self.values[mask]) ** 2) * self.dx)


def potential_on_grid(spec: BarrierSpec, x: np.ndarray) -> np.ndarray:
    """Cell-averaged potential; each delta becomes a one-cell rectangle of area ``Omega``."""
    dx = float(x[1] - x[0])
    V = np.zeros_like(x)
    left = x - 0.5 * dx
    right = x + 0.5 * dx
    if isinstance(spec, DeltaComb):
        for pos, omega in zip(spec.positions, spec.strengths):
            j = int(np.floor((pos - left[0]) / dx))
            if not 0 <= j < x.size:
                raise OracleError(f"delta at {pos} lies outside the grid")
            V[j] += omega / dx
        return V
    if isinstance(spec, Rectangular):
        edges, heights = (spec.left, spec.left + spec.width), (spec.height,)
    elif isinstance(spec, PiecewiseConstant):
        edges, heights = spec.breakpoints, spec.heights
    else:
        raise TypeError(f"not a barrier spec: {spec!r}")
    for a, b, h in zip(edges[:-1], edges[1:], heights):
        cover = np.clip(np.minimum(right, b) - np.maximum(left, a), 0.0, None)
        V += h * cover / dx
    return V


def _min_feature(spec: BarrierSpec) -> float:
    if isinstance(spec, DeltaComb):
        gaps = np.diff(spec.positions)
        return float(gaps.min()) if gaps.size else math.inf
    if isinstance(spec, Rectangular):
        return spec.width
    return float(np.diff(spec.breakpoints).min())


# moduli below this are set to zero during a step; subnormal tails of the
# packet otherwise slow the sweeps by more than an order of magnitude
_FLUSH = 1e-150


@numba.njit(cache=True)
def _cn_steps(pr, pi, c_hd, a_im, inv_r, inv_i, cp_r, cp_i, n_steps):  # pragma: no cover
    n = pr.size
    rr = np.empty(n)
    ri = np.empty(n)
    dr = np.empty(n)
    di = np.empty(n)
    for _ in range(n_steps):
        # rhs = (1 - i dt H / 2) psi
        for j in range(n):
            sr = 0.0
            si = 0.0
            if j > 0:
                sr += pr[j - 1]
                si += pi[j - 1]
            if j < n - 1:
                sr += pr[j + 1]
                si += pi[j + 1]
            rr[j] = pr[j] + c_hd[j] * pi[j] + a_im * si
            ri[j] = pi[j] - c_hd[j] * pr[j] - a_im * sr
        # Thomas sweep with the precomputed pivots
        for j in range(n):
            xr = rr[j]
            xi = ri[j]
            if j > 0:
                xr += a_im * di[j - 1]
                xi -= a_im * dr[j - 1]
            if abs(xr) < _FLUSH:
                xr = 0.0
            if abs(xi) < _FLUSH:
                xi = 0.0
            dr[j] = xr * inv_r[j] - xi * inv_i[j]
            di[j] = xr * inv_i[j] + xi * inv_r[j]
        pr[n - 1] = dr[n - 1]
        pi[n - 1] = di[n - 1]
        for j in range(n - 2, -1, -1):
            vr = dr[j] - (cp_r[j] * pr[j + 1] - cp_i[j] * pi[j + 1])
            vi = di[j] - (cp_r[j] * pi[j + 1] + cp_i[j] * pr[j + 1])
            pr[j] = vr if abs(vr) >= _FLUSH else 0.0
            pi[j] = vi if abs(vi) >= _FLUSH else 0.0


class CrankNicolson:
    """Implicit midpoint stepper with hard walls at the grid ends."""

    def __init__(self, x: np.ndarray, V: np.ndarray, m: float):
        self.x = x
        self.m = m
        dx = float(x[1] - x[0])
        self.h_diag = 1.0 / (m * dx * dx) + V
        self.h_off = -0.5 / (m * dx * dx)
        self._dt = None

    def _factor(self, dt: float):
        c = 0.5 * dt
        a = 1j * c * self.h_off
        diag = 1.0 + 1j * c * self.h_diag
        n = diag.size
        inv = np.empty(n, dtype=complex)
        cp = np.empty(n, dtype=complex)
        prev = 0.0
        # the recursion for the pivots is sequential but cheap next to a step
        for j in range(n):
            inv[j] = 1.0 / (diag[j] - a * prev)
            prev = cp[j] = a * inv[j]
        if not np.all(np.isfinite(inv)):
            raise OracleError("tridiagonal factorisation failed")
        self._coef = (c * self.h_diag, c * self.h_off, inv.real.copy(), inv.imag.copy(),
                      cp.real.copy(), cp.imag.copy())
        self._dt = dt

    def step(self, psi: np.ndarray, dt: float, n: int = 1) -> np.ndarray:
        if dt != self._dt:
            self._factor(dt)
        pr = np.ascontiguousarray(psi.real, dtype=float).copy()
        pi = np.ascontiguousarray(psi.imag, dtype=float).copy()
        _cn_steps(pr, pi, *self._coef, n)
        return pr + 1j * pi


def _advance(stepper: CrankNicolson, state: GridState, t_target: float, dt: float) -> GridState:
    span = t_target - state.t
    if span < 0:
        raise ValueError("cannot propagate backwards")
    if span == 0:
        return GridState(state.x, state.values.copy(), state.t, state.m)
    n = max(1, int(math.ceil(span / dt - 1e-9)))
    psi = stepper.step(state.values, span / n, n)
    return GridState(state.x, psi, t_target, state.m)


def _check_state(state: GridState, norm0: float) -> None:
    drift = abs(state.norm - norm0)
    if drift > NORM_TOL:
        raise OracleError(f"norm drifted by {drift:.3e} at t={state.t}")
    x = state.x
    pad = 0.02 * (x[-1] - x[0])
    edge = state.probability(-math.inf, x[0] + pad) + state.probability(x[-1] - pad, math.inf)
    if edge > EDGE_TOL:
        raise OracleError(
            f"packet reached the grid boundary at t={state.t} (edge probability {edge:.2e})"
        )


def propagate(initial: GridState, spec: BarrierSpec, t_final: float, dt: float = 0.01,
              snapshots: Sequence[float] = ()) -> GridState | list[GridState]:
    """Evolve ``initial`` to ``t_final`` under the barrier potential.

    With ``snapshots`` the states at those times (and at ``t_final``) are
    returned as a list in the order requested, ``t_final`` last.
    """
    stepper = CrankNicolson(initial.x, potential_on_grid(spec, initial.x), initial.m)
    norm0 = initial.norm
    targets = sorted(set(float(t) for t in snapshots) | {float(t_final)})
    if targets[0] < initial.t:
        raise ValueError("snapshot requested before the initial time")
    state = initial
    found = {}
    for t in targets:
        state = _advance(stepper, state, t, dt)
        _check_state(state, norm0)
        found[t] = state
    if not snapshots:
        return state
    return [found[float(t)] for t in snapshots] + [found[float(t_final)]]


@dataclass(frozen=True)
class OracleGrid:
    """Spatial and temporal resolution of a propagation."""

    dx: float = 0.05
    dt: float = 0.02
    # extra time allowed after the packet has crossed, e.g. for resonance decay
    settle: float = 0.0
    # extra time added after the last snapshot, to test time independence
    extra: float = 0.0
    pad_widths: float = 10.0
    regions: tuple[float, float] | None = field(default=None)


def _p_max(pkt: GaussianPacket) -> float:
    return pkt.p0 + 6.0 / pkt.sigma


def crossing_time(pkt: GaussianPacket, spec: BarrierSpec) -> float:
    """Time for the slow edge of the packet to pass the far side of the barrier region."""
    a, b = spec.extent
    p_min = pkt.p0 - 5.0 / pkt.sigma
    if p_min <= 0:
        raise OracleError("packet carries slow components that never clear the barrier")
    dist = (b + REGION_WIDTHS * pkt.sigma) - (pkt.x0 - 5.0 * pkt.sigma)
    return dist * pkt.m / p_min


def build_grid(pkt: GaussianPacket, spec: BarrierSpec, t_final: float, dx: float,
               pad_widths: float = 10.0) -> np.ndarray:
    a, b = spec.extent
    if pkt.x0 > a - 2.0 * REGION_WIDTHS * pkt.sigma:
        raise OracleError(
            f"source at x0={pkt.x0} is within {2 * REGION_WIDTHS} widths of the barrier"
        )
    wavelength = 2.0 * math.pi / _p_max(pkt)
    if dx > wavelength / POINTS_PER_WAVELENGTH:
        raise OracleError(f"dx={dx} does not resolve wavelength {wavelength:.4g}")
    if dx > 0.25 * _min_feature(spec):
        raise OracleError(f"dx={dx} does not resolve the barrier features")
    reach = _p_max(pkt) * t_final / pkt.m + pad_widths * pkt.sigma
    lo = min(pkt.x0 - pad_widths * pkt.sigma, a - reach)
    hi = b + reach
    # anchor the lattice on the left barrier edge so deltas sit on nodes
    j_lo = int(math.floor((lo - a) / dx))
    j_hi = int(math.ceil((hi - a) / dx))
    return a + dx * np.arange(j_lo, j_hi + 1)


def initial_state(pkt: GaussianPacket, x: np.ndarray) -> GridState:
    return GridState(x, position_wavefunction(pkt, x, pkt.t_emit), 0.0, pkt.m)


def regions(pkt: GaussianPacket, spec: BarrierSpec) -> tuple[float, float]:
    """Boundaries ``(r, t)``: reflected is ``x < r``, transmitted is ``x >= t``."""
    a, b = spec.extent
    return a - REGION_WIDTHS * pkt.sigma, b + REGION_WIDTHS * pkt.sigma


def _stats(psi1: GridState, psi2: GridState, bounds, T: float,
           kind: StatisticsKind) -> OutcomeStats:
    r, t = bounds
    x = psi1.x
    refl, trans = (-math.inf, r), (t, math.inf)
    q = lambda r1, r2: quadrant_probability(psi1.values, psi2.values, x, r1, r2, kind)  # noqa: E731
    P_TT = q(trans, trans)
    P_RR = q(refl, refl)
    P_RT = q(trans, refl) + q(refl, trans)
    PT = psi1.probability(t, math.inf)
    residual = max(psi1.probability(r, t), psi2.probability(r, t))
    mask_t = x >= t
    dP = abs(overlap(psi1.values, psi2.values, mask_t, psi1.dx)) ** 2
    full = np.ones_like(mask_t)
    dP_init = abs(overlap(psi1.values, psi2.values, full, psi1.dx)) ** 2
    return OutcomeStats(PT, 1.0 - PT, dP, P_TT, P_RT, P_RR, kind, T, dP_init, residual)


def two_particle_sweep(pkt: GaussianPacket, spec: BarrierSpec, Ts: Sequence[float],
                       kind: StatisticsKind = StatisticsKind.FERMIONISED,
                       grid: OracleGrid = OracleGrid()) -> list[OutcomeStats]:
    """Outcome statistics for several emission delays from one propagation."""
    Ts = [float(T) for T in Ts]
    if any(T <= 0 for T in Ts):
        raise ValueError("emission delays must be positive")
    t_scatter = crossing_time(pkt, spec) + grid.settle
    t_final = max(Ts) + t_scatter + grid.extra
    x = build_grid(pkt, spec, t_final, grid.dx, grid.pad_widths)
    snaps = [t_final - T for T in Ts]
    states = propagate(initial_state(pkt, x), spec, t_final, grid.dt, snapshots=snaps)
    last = states[-1]
    bounds = regions(pkt, spec)
    out = []
    for T, early in zip(Ts, states[:-1]):
        st = _stats(last, early, bounds, T, kind)
        if st.residual > RESIDUAL_TOL:
            raise OracleError(
                f"scattering incomplete at T={T}: {st.residual:.2e} left in the barrier region"
            )
        out.append(st)
    return out


def two_particle_outcomes(pkt: GaussianPacket, spec: BarrierSpec, T: float,
                          kind: StatisticsKind = StatisticsKind.FERMIONISED,
                          grid: OracleGrid = OracleGrid()) -> OutcomeStats:
    return two_particle_sweep(pkt, spec, [T], kind, grid)[0]


def dump_snapshot(state: GridState, path) -> None:
    """Write ``x, |psi|^2`` as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        fh.write(f"# t={state.t!r} m={state.m!r}\n")
        w.writerow(["x", "density"])
        for xi, d in zip(state.x, np.abs(state.values) ** 2):
            w.writerow([f"{xi:.16e}", f"{d:.16e}"])
