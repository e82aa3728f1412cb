import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tunnelstat.scattering import (
    AmplitudeTable,
    DeltaComb,
    FluxError,
    PiecewiseConstant,
    Rectangular,
    amplitudes,
    build_table,
    double_delta,
    log_transparency,
    transparency,
)


def rectangle_closed_form(V, d, p, m=1.0):
    """Textbook transparency of a square barrier, from matching plane waves by hand."""
    E = p * p / (2 * m)
    if E < V:
        k = math.sqrt(2 * m * (V - E))
        return 1.0 / (1.0 + V * V * math.sinh(k * d) ** 2 / (4 * E * (V - E)))
    q = math.sqrt(2 * m * (E - V))
    return 1.0 / (1.0 + V * V * math.sin(q * d) ** 2 / (4 * E * (E - V)))


positive = st.floats(0.05, 20.0)
strength = st.floats(-30.0, 30.0)


@st.composite
def delta_combs(draw):
    n = draw(st.integers(1, 5))
    gaps = draw(st.lists(st.floats(0.05, 2.0), min_size=n - 1, max_size=n - 1))
    pos = np.concatenate([[draw(st.floats(-3, 3))], draw(st.floats(-3, 3)) + np.cumsum(gaps)])
    pos = np.sort(pos)
    if np.any(np.diff(pos) <= 1e-6):
        pos = np.arange(n, dtype=float)
    return DeltaComb(tuple(pos), tuple(draw(st.lists(strength, min_size=n, max_size=n))))


@st.composite
def piecewise(draw):
    n = draw(st.integers(1, 5))
    widths = draw(st.lists(st.floats(0.05, 1.5), min_size=n, max_size=n))
    start = draw(st.floats(-2, 2))
    edges = start + np.concatenate([[0.0], np.cumsum(widths)])
    heights = draw(st.lists(st.floats(-20, 60), min_size=n, max_size=n))
    return PiecewiseConstant(tuple(edges), tuple(heights))


rectangles = st.builds(Rectangular, st.floats(0.0, 80.0), st.floats(0.05, 3.0),
                       st.floats(-2.0, 2.0))
barriers = st.one_of(delta_combs(), piecewise(), rectangles)


def test_free_comb_is_transparent():
    pair = amplitudes(DeltaComb((0.0, 1.0), (0.0, 0.0)), 2.3)
    assert pair.BT == pytest.approx(1.0, abs=1e-14)
    assert abs(pair.BR) < 1e-14


def test_single_delta_matches_closed_form_amplitudes():
    omega, m = 3.0, 1.7
    for p in np.geomspace(0.05, 50.0, 40):
        pair = amplitudes(DeltaComb((0.0,), (omega,)), p, m)
        # matching psi' jump 2 m omega psi(0) by hand
        bt = 1.0 / (1.0 + 1j * m * omega / p)
        br = -1j * m * omega / p * bt
        assert abs(pair.BT - bt) < 1e-12
        assert abs(pair.BR - br) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(-3.0, 0.0), st.floats(0.1, 100.0), st.floats(0.2, 5.0))
def test_single_delta_transparency_property(log_p, omega, m):
    p = 10.0**log_p * 10.0
    T = transparency(DeltaComb((0.0,), (omega,)), p, m)
    assert abs(T - p * p / (p * p + m * m * omega * omega)) < 1e-12


@settings(max_examples=150, deadline=None)
@given(barriers, st.floats(0.05, 15.0))
def test_flux_conservation(spec, p):
    pair = amplitudes(spec, p)
    assert abs(abs(pair.BT) ** 2 + abs(pair.BR) ** 2 - 1.0) < 1e-10


@settings(max_examples=80, deadline=None)
@given(barriers, st.floats(0.05, 15.0))
def test_mirror_symmetry(spec, p):
    assert transparency(spec.mirrored(), p) == pytest.approx(transparency(spec, p), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.floats(0.5, 60.0), st.floats(0.05, 3.0), st.floats(0.05, 0.98))
def test_rectangle_matches_textbook(V, d, frac):
    p = math.sqrt(2 * V * frac)
    assert transparency(Rectangular(V, d), p) == pytest.approx(
        rectangle_closed_form(V, d, p), rel=1e-9, abs=1e-14)
    p_above = math.sqrt(2 * V / frac)
    assert transparency(Rectangular(V, d), p_above) == pytest.approx(
        rectangle_closed_form(V, d, p_above), rel=1e-9)


@pytest.mark.parametrize("V,d", [(1.0, 1.0), (50.0, 0.7), (3.0, 4.0)])
def test_continuous_across_threshold(V, d):
    spec = Rectangular(V, d)
    p_c = math.sqrt(2 * V)
    eps = 1e-9 * p_c
    below = transparency(spec, p_c - eps)
    at = transparency(spec, p_c)
    above = transparency(spec, p_c + eps)
    assert abs(below - at) < 1e-8 and abs(above - at) < 1e-8
    # at threshold the wave is linear under the barrier: T = 1 / (1 + m V d^2 / 2)
    assert at == pytest.approx(1.0 / (1.0 + V * d * d / 2.0), rel=1e-8)


def test_deep_tunnelling_slope():
    V, p = 40.0, 3.0
    k = math.sqrt(2 * V - p * p)
    d = np.array([4.0, 5.0, 6.0])
    logs = [log_transparency(Rectangular(V, w), p) for w in d]
    slope = np.polyfit(d, logs, 1)[0]
    assert slope == pytest.approx(-2 * k, rel=1e-2)


def test_high_energy_limit():
    spec = double_delta(5.0)
    assert transparency(spec, 1e6) == pytest.approx(1.0, abs=1e-9)
    assert transparency(Rectangular(10.0, 1.0), 1e4) == pytest.approx(1.0, abs=1e-9)


def test_opaque_barrier_stays_finite():
    spec = Rectangular(160000.0, 1.0)
    lt = log_transparency(spec, 400.0)
    assert math.isfinite(lt)
    # deep-tunnelling asymptote 16 E (V - E) / V^2 exp(-2 k d), here 4 exp(-800)
    assert lt == pytest.approx(-800.0 + math.log(4.0), abs=1e-9)
    assert transparency(spec, 400.0) == 0.0


def test_piecewise_reduces_to_rectangle():
    p = np.linspace(0.3, 9.0, 17)
    rect = transparency(Rectangular(12.0, 1.5, left=0.2), p)
    joined = transparency(PiecewiseConstant((0.2, 0.9, 1.7), (12.0, 12.0)), p)
    assert np.allclose(rect, joined, atol=1e-12)


def test_zero_height_segments_are_free():
    pair = amplitudes(PiecewiseConstant((0.0, 1.0, 2.5), (0.0, 0.0)), 1.3)
    assert abs(pair.BT - 1.0) < 1e-12


@pytest.mark.parametrize("p", [0.0, -1.0, float("nan")])
def test_rejects_nonpositive_momentum(p):
    with pytest.raises(ValueError):
        amplitudes(double_delta(1.0), p)


@pytest.mark.parametrize("factory", [
    lambda: DeltaComb((1.0, 0.0), (1.0, 1.0)),
    lambda: DeltaComb((0.0,), (1.0, 2.0)),
    lambda: Rectangular(1.0, 0.0),
    lambda: Rectangular(1.0, -1.0),
    lambda: PiecewiseConstant((0.0, 1.0), (1.0, 2.0)),
    lambda: PiecewiseConstant((0.0, 0.0, 1.0), (1.0, 2.0)),
])
def test_rejects_malformed_specs(factory):
    with pytest.raises(ValueError):
        factory()


def test_rejects_non_spec():
    with pytest.raises(TypeError):
        transparency("barrier", 1.0)


def test_empty_table():
    table = build_table(double_delta(1.0), [])
    assert len(table) == 0


def test_two_point_free_table():
    table = build_table(DeltaComb((0.0,), (0.0,)), [1.0, 2.0])
    assert len(table) == 2
    for pair in table.pairs:
        assert abs(pair.BT - 1.0) < 1e-14 and abs(pair.BR) < 1e-14


def test_table_reports_bad_index():
    with pytest.raises(ValueError, match="index 0"):
        build_table(double_delta(1.0), [-1.0, 0.5, 1.0])


def test_table_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        build_table(double_delta(1.0), [2.0, 1.0])


def test_table_is_read_only():
    table = build_table(double_delta(1.0), [1.0, 2.0])
    with pytest.raises(ValueError):
        table.BT[0] = 0


def test_table_derives_log_t():
    t = AmplitudeTable(np.array([1.0, 2.0]), np.array([0.5, 1.0 + 0j]), np.zeros(2, complex))
    assert np.allclose(t.transparency, [0.25, 1.0])


def test_flux_error_is_arithmetic():
    assert issubclass(FluxError, ArithmeticError)


def test_table_maxima_match_resonances(dd50, dd50_resonances):
    p = np.linspace(0.5, 7.0, 20001)
    T = build_table(dd50, p).transparency
    idx = np.flatnonzero((T[1:-1] > T[:-2]) & (T[1:-1] >= T[2:])) + 1
    peaks = p[idx][T[idx] > 0.5]
    expected = [r.p_r for r in dd50_resonances[:2]]
    assert len(peaks) == 2
    assert np.allclose(peaks, expected, atol=2 * (p[1] - p[0]))
