"""Command-line front end: figure data, delay sweeps and oracle checks as CSV.

Configuration files are flat ``key = value`` text with dotted section
prefixes, for example::

    barrier.type = double-delta
    barrier.omega = 50
    barrier.d = 1
    packet.p0 = 3.08
    packet.sigma = 3
    sweep.T_min = 0
    sweep.T_max = 300
    sweep.count = 61
    statistics.kind = fermionised
    mode = exact

Exit codes: 0 success, 2 configuration error, 3 computation error,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from . import oracle as orc
from .resonance import (
    BreitWignerWarning,
    Resonance,
    ResonanceError,
    breit_wigner_transparency,
    find_resonances,
    single_resonance_deltaP,
    two_resonance_deltaP,
)
from .scattering import (
    BarrierSpec,
    DeltaComb,
    FluxError,
    PiecewiseConstant,
    Rectangular,
    double_delta,
    transparency,
)
from .twobody import (
    CoverageError,
    InvariantError,
    OutcomeStats,
    StatisticsKind,
    converged_table,
    exchange_ratio,
    outcome_stats,
)
from .wavepacket import GaussianPacket, momentum_density, initial_overlap_closed_form
from .wkb import (
    ValidityError,
    action_expansion,
    broad_barrier_ratio,
    quadratic_model_density,
    unit_height_densities,
)

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_COMPUTE = 3
EXIT_INVARIANT = 4

MODES = ("exact", "breit-wigner", "wkb", "oracle")
BARRIER_TYPES = ("delta", "double-delta", "delta-comb", "rectangular", "piecewise")
FIGURES = ("fig2", "fig3a", "fig3b", "fig4a", "fig4b")
ORACLE_TOL = 1e-3

# built-in figure parameters; packet widths chosen so that |A|^2 covers one
# resonance (fig3a) or the first two (fig3b) of the Omega d = 50 barrier
FIG_OMEGA = 50.0
FIG3A_SIGMA = 3.0
FIG3B_SIGMA = 1.2
FIG4 = dict(d=1.0, p0=400.0, energy_ratio=0.5, sigma=0.5)


class ConfigError(ValueError):
    pass


# --- configuration ------------------------------------------------------------------

def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _number(raw: dict, key: str, default=None, positive=False, nonneg=False) -> float:
    if key not in raw:
        if default is None:
            raise ConfigError(f"{key}: required")
        return default
    try:
        val = float(raw[key])
    except ValueError:
        raise ConfigError(f"{key}: not a number: {raw[key]!r}") from None
    if not math.isfinite(val):
        raise ConfigError(f"{key}: must be finite, got {raw[key]!r}")
    if positive and not val > 0:
        raise ConfigError(f"{key}: must be positive, got {val}")
    if nonneg and val < 0:
        raise ConfigError(f"{key}: must be non-negative, got {val}")
    return val


def _numbers(raw: dict, key: str) -> tuple[float, ...]:
    if key not in raw:
        raise ConfigError(f"{key}: required")
    try:
        return tuple(float(v) for v in raw[key].split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw[key]!r}") from None


def _barrier(raw: dict) -> BarrierSpec:
    kind = raw.get("barrier.type")
    if kind is None:
        raise ConfigError("barrier.type: required")
    if kind not in BARRIER_TYPES:
        raise ConfigError(f"barrier.type: expected one of {', '.join(BARRIER_TYPES)}, got {kind!r}")
    try:
        if kind == "delta":
            return DeltaComb((_number(raw, "barrier.position", 0.0),),
                             (_number(raw, "barrier.omega", nonneg=True),))
        if kind == "double-delta":
            return double_delta(_number(raw, "barrier.omega", nonneg=True),
                                _number(raw, "barrier.d", 1.0, positive=True))
        if kind == "delta-comb":
            return DeltaComb(_numbers(raw, "barrier.positions"), _numbers(raw, "barrier.strengths"))
        if kind == "rectangular":
            return Rectangular(_number(raw, "barrier.height", nonneg=True),
                               _number(raw, "barrier.width", positive=True),
                               _number(raw, "barrier.left", 0.0))
        return PiecewiseConstant(_numbers(raw, "barrier.breakpoints"),
                                 _numbers(raw, "barrier.heights"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"barrier: {exc}") from None


@dataclass(frozen=True)
class RunConfig:
    barrier: BarrierSpec
    packet: GaussianPacket
    Ts: tuple[float, ...]
    kind: StatisticsKind = StatisticsKind.FERMIONISED
    mode: str = "exact"
    output: str | None = None
    oracle_grid: orc.OracleGrid = field(default_factory=orc.OracleGrid)
    energy_window: tuple[float, float] = (0.05, 25.0)
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        return cls.from_mapping(parse_config(text))

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "RunConfig":
        known = {"mode", "output.path", "statistics.kind"}
        prefixes = ("barrier.", "packet.", "sweep.", "oracle.", "resonance.")
        for key in raw:
            if key not in known and not key.startswith(prefixes):
                raise ConfigError(f"{key}: unknown key")
        mode = raw.get("mode", "exact")
        if mode not in MODES:
            raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {mode!r}")
        try:
            kind = StatisticsKind.parse(raw.get("statistics.kind", "fermionised"))
        except ValueError as exc:
            raise ConfigError(f"statistics.kind: {exc}") from None
        barrier = _barrier(raw)
        p0 = _number(raw, "packet.p0", positive=True)
        sigma = _number(raw, "packet.sigma", positive=True)
        m = _number(raw, "packet.m", 1.0, positive=True)
        a, _ = barrier.extent
        # default source far enough upstream for the time-domain oracle
        x0 = _number(raw, "packet.x0", a - 3.0 * orc.REGION_WIDTHS * sigma)
        packet = GaussianPacket(p0, sigma, m, x0)
        if p0 * sigma < 5.0:
            raise ConfigError(f"packet: p0*sigma = {p0 * sigma:.3g} must be at least 5")
        count = _number(raw, "sweep.count", 1.0)
        if count != int(count) or count < 1:
            raise ConfigError(f"sweep.count: must be an integer >= 1, got {raw.get('sweep.count')}")
        T_min = _number(raw, "sweep.T_min", nonneg=True)
        T_max = _number(raw, "sweep.T_max", T_min, nonneg=True)
        if T_max < T_min:
            raise ConfigError(f"sweep.T_max: {T_max} is below sweep.T_min = {T_min}")
        if count > 1 and T_max == T_min:
            raise ConfigError("sweep: T_max must exceed T_min when count > 1")
        Ts = tuple(float(t) for t in np.linspace(T_min, T_max, int(count)))
        grid = orc.OracleGrid(
            dx=_number(raw, "oracle.dx", 0.05, positive=True),
            dt=_number(raw, "oracle.dt", 0.05, positive=True),
            settle=_number(raw, "oracle.settle", 0.0, nonneg=True),
        )
        window = (_number(raw, "resonance.E_min", 0.05, positive=True),
                  _number(raw, "resonance.E_max", 25.0, positive=True))
        if window[1] <= window[0]:
            raise ConfigError("resonance.E_max: must exceed resonance.E_min")
        cfg = cls(barrier, packet, Ts, kind, mode, raw.get("output.path"), grid, window, dict(raw))
        cfg._validate_mode()
        return cfg

    def _validate_mode(self) -> None:
        if self.mode == "wkb":
            if not isinstance(self.barrier, Rectangular):
                raise ConfigError("mode: wkb needs barrier.type = rectangular")
            try:
                action_expansion(self.barrier.height, self.barrier.width, self.packet.p0,
                                 self.packet.m, self.packet.sigma).decay_coefficient
            except ValidityError as exc:
                raise ConfigError(f"mode: wkb: {exc}") from None
        if self.mode == "oracle" and min(self.Ts) <= 0:
            raise ConfigError("sweep.T_min: oracle mode needs positive delays")

    def metadata(self) -> list[tuple[str, str]]:
        items = [("tunnelstat", __version__), ("mode", self.mode),
                 ("statistics.kind", self.kind.value)]
        items += [(k, v) for k, v in sorted(self.raw.items())
                  if k not in ("mode", "statistics.kind")]
        items += [("packet.x0 (resolved)", repr(self.packet.x0)),
                  ("packet.m (resolved)", repr(self.packet.m))]
        return items


# --- CSV ----------------------------------------------------------------------------

@dataclass
class Dataset:
    metadata: list[tuple[str, str]]
    columns: list[str]
    rows: list[Sequence[float]]

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows], dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for k, v in self.metadata:
            buf.write(f"# {k} = {v}\n")
        buf.write(",".join(self.columns) + "\n")
        for row in self.rows:
            buf.write(",".join(f"{float(v):.16e}" for v in row) + "\n")
        return buf.getvalue()


def read_csv(text: str) -> Dataset:
    meta, lines = [], []
    for line in text.splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].partition("=")
            meta.append((k.strip(), v.strip()))
        elif line.strip():
            lines.append(line)
    columns = lines[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    return Dataset(meta, columns, rows)


# --- sweeps -------------------------------------------------------------------------

BASE_COLUMNS = ["T", "PT", "deltaP", "P_TT", "P_RT", "P_RR", "mean_n"]


def _base(st: OutcomeStats) -> list[float]:
    st.check()
    return [st.T, st.PT, st.deltaP, st.P_TT, st.P_RT, st.P_RR, st.mean_n]


def _probed(pkt: GaussianPacket, resonances: Sequence[Resonance]) -> list[Resonance]:
    """Resonances carrying a non-negligible share of the packet weight."""
    w = np.array([float(momentum_density(pkt, r.p_r)) for r in resonances])
    if not w.size or w.max() <= 0:
        return []
    return [r for r, wi in zip(resonances, w) if wi > 1e-3 * w.max()]


def bw_prediction(pkt: GaussianPacket, resonances: Sequence[Resonance], T) -> np.ndarray:
    probed = _probed(pkt, resonances)
    if len(probed) == 1:
        return single_resonance_deltaP(pkt, probed[0], T, resonances)
    if len(probed) == 2:
        return two_resonance_deltaP(pkt, probed[0], probed[1], T, resonances)
    raise ResonanceError(f"packet probes {len(probed)} resonances; the model needs one or two")


def run_sweep(cfg: RunConfig) -> Dataset:
    """One row per delay with the outcome statistics and mode-specific columns."""
    pkt, spec, Ts = cfg.packet, cfg.barrier, np.array(cfg.Ts)
    if cfg.mode == "oracle":
        return _oracle_dataset(cfg)
    columns = list(BASE_COLUMNS)
    table = converged_table(spec, pkt, Ts.max())
    stats = outcome_stats(pkt, table, Ts, cfg.kind)
    rows = [_base(st) for st in stats]
    extra_cols: list[str] = ["deltaP_init"]
    extra = [np.array([st.deltaP_init for st in stats])]
    if cfg.mode == "breit-wigner":
        res = find_resonances(spec, pkt.m, cfg.energy_window)
        extra_cols.append("deltaP_bw")
        extra.append(np.atleast_1d(bw_prediction(pkt, res, Ts)))
    elif cfg.mode == "wkb":
        exp = action_expansion(spec.height, spec.width, pkt.p0, pkt.m, pkt.sigma)
        extra_cols += ["T_over_T0", "ratio", "ratio_wkb"]
        extra += [Ts / exp.T0, np.atleast_1d(exchange_ratio(pkt, table, Ts)),
                  np.atleast_1d(broad_barrier_ratio(exp, Ts))]
    columns += extra_cols
    rows = [r + [float(col[i]) for col in extra] for i, r in enumerate(rows)]
    return Dataset(cfg.metadata(), columns, rows)


def _oracle_dataset(cfg: RunConfig) -> Dataset:
    pkt, spec = cfg.packet, cfg.barrier
    Ts = np.array(cfg.Ts)
    timed = orc.two_particle_sweep(pkt, spec, Ts, cfg.kind, cfg.oracle_grid)
    table = converged_table(spec, pkt, Ts.max())
    exact = outcome_stats(pkt, table, Ts, cfg.kind, corrected=True)
    columns = BASE_COLUMNS + ["P_TT_exact", "P_RT_exact", "P_RR_exact", "max_diff", "residual"]
    rows = []
    for st, ex in zip(timed, exact):
        ex.check()
        diffs = [st.P_TT - ex.P_TT, st.P_RT - ex.P_RT, st.P_RR - ex.P_RR]
        rows.append(_base(st) + [ex.P_TT, ex.P_RT, ex.P_RR, max(map(abs, diffs)), st.residual])
    meta = cfg.metadata() + [("oracle.dx (resolved)", repr(cfg.oracle_grid.dx)),
                             ("oracle.dt (resolved)", repr(cfg.oracle_grid.dt))]
    return Dataset(meta, columns, rows)


# --- figures ------------------------------------------------------------------------

def figure_packets(resonances: Sequence[Resonance], m: float = 1.0):
    """Probe packets for the double-delta figures: one resonance, then two."""
    if len(resonances) < 2:
        raise ResonanceError("figure barrier should have at least two resonances")
    r1, r2 = resonances[0], resonances[1]
    one = GaussianPacket(r1.p_r, FIG3A_SIGMA, m)
    two = GaussianPacket(0.5 * (r1.p_r + r2.p_r), FIG3B_SIGMA, m)
    return one, two


def _fig_meta(tag: str, **params) -> list[tuple[str, str]]:
    return [("tunnelstat", __version__), ("figure", tag)] + [
        (k, repr(v)) for k, v in params.items()
    ]


def _fig2() -> Dataset:
    spec = double_delta(FIG_OMEGA)
    res = find_resonances(spec)
    one, two = figure_packets(res)
    p = np.union1d(np.linspace(0.05, 7.5, 3001), [r.p_r for r in res if r.p_r <= 7.5])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BreitWignerWarning)
        bw = breit_wigner_transparency(res, p)
    a1 = momentum_density(one, p)
    a2 = momentum_density(two, p)
    rows = np.column_stack([p, transparency(spec, p), bw, a1 / a1.max(), a2 / a2.max()])
    meta = _fig_meta("fig2", omega=FIG_OMEGA, d=1.0, m=1.0, sigma_a=one.sigma, p0_a=one.p0,
                     sigma_b=two.sigma, p0_b=two.p0)
    meta += [(f"resonance {r.n}", f"E_r={r.E_r!r} Gamma={r.Gamma!r} p_r={r.p_r!r}") for r in res]
    return Dataset(meta, ["p", "transparency", "transparency_bw", "probe_a", "probe_b"],
                   rows.tolist())


def _fig3(tag: str) -> Dataset:
    spec = double_delta(FIG_OMEGA)
    res = find_resonances(spec)
    one, two = figure_packets(res)
    if tag == "fig3a":
        pkt = one
        Ts = np.linspace(0.0, 4.0 / (2.0 * res[0].Gamma), 401)
    else:
        pkt = two
        Ts = np.linspace(0.0, 60.0, 6001)
    table = converged_table(spec, pkt, Ts.max())
    stats = outcome_stats(pkt, table, Ts)
    for st in stats:
        st.check()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BreitWignerWarning)
        model = np.atleast_1d(bw_prediction(pkt, res, Ts))
    rows = np.column_stack([Ts, [s.deltaP for s in stats], model,
                            initial_overlap_closed_form(pkt, Ts), [s.PT for s in stats]])
    meta = _fig_meta(tag, omega=FIG_OMEGA, d=1.0, m=1.0, p0=pkt.p0, sigma=pkt.sigma)
    return Dataset(meta, ["T", "deltaP", "deltaP_bw", "deltaP_init", "PT"], rows.tolist())


def fig4_setup():
    d, p0, ratio, sigma = FIG4["d"], FIG4["p0"], FIG4["energy_ratio"], FIG4["sigma"]
    V = p0 * p0 / (2.0 * ratio)
    spec = Rectangular(V, d)
    pkt = GaussianPacket(p0, sigma)
    return spec, pkt, action_expansion(V, d, p0, 1.0, sigma)


def _fig4(tag: str) -> Dataset:
    spec, pkt, exp = fig4_setup()
    table = converged_table(spec, pkt)
    meta = _fig_meta(tag, d=spec.width, V=spec.height, p0=pkt.p0, sigma=pkt.sigma, m=pkt.m)
    if tag == "fig4a":
        inc, tr = unit_height_densities(pkt, table)
        model = quadratic_model_density(exp, table.p_grid)
        rows = np.column_stack([table.p_grid, inc, tr, model])
        return Dataset(meta, ["p", "incident", "transmitted", "transmitted_model"], rows.tolist())
    x = np.linspace(0.0, 5.0, 501)
    Ts = x * exp.T0
    rows = np.column_stack([x, initial_overlap_closed_form(pkt, Ts),
                            exchange_ratio(pkt, table, Ts), broad_barrier_ratio(exp, Ts)])
    return Dataset(meta, ["T_over_T0", "deltaP_init", "ratio", "ratio_wkb"], rows.tolist())


def run_figure(tag: str) -> Dataset:
    if tag not in FIGURES:
        raise ConfigError(f"figure: expected one of {', '.join(FIGURES)}, got {tag!r}")
    if tag == "fig2":
        return _fig2()
    if tag.startswith("fig3"):
        return _fig3(tag)
    return _fig4(tag)


def resonance_table(cfg: RunConfig) -> Dataset:
    res = find_resonances(cfg.barrier, cfg.packet.m, cfg.energy_window)
    rows = [[r.n, r.E_r, r.Gamma, r.p_r, r.peak] for r in res]
    return Dataset(cfg.metadata(), ["n", "E_r", "Gamma", "p_r", "peak"], rows)


# --- entry point --------------------------------------------------------------------

def _emit(data: Dataset, path: str | None) -> None:
    text = data.to_csv()
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _load(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            return RunConfig.from_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


def _guarded(fn: Callable[[], int]) -> int:
    try:
        return fn()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ArithmeticError, ValueError, FluxError, CoverageError, ResonanceError,
            ValidityError, orc.OracleError) as exc:
        print(f"computation error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tunnelstat",
                                 description="Two-atom tunnelling statistics as CSV.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    f = sub.add_parser("figure", help="data for one of the built-in figures")
    f.add_argument("tag", choices=FIGURES)
    f.add_argument("--out")
    s = sub.add_parser("sweep", help="outcome statistics over a range of delays")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    r = sub.add_parser("resonances", help="list transmission resonances of a barrier")
    r.add_argument("--config", required=True)
    o = sub.add_parser("oracle-check", help="compare time-domain and momentum-space results")
    o.add_argument("--config", required=True)
    o.add_argument("--out")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    def figure():
        _emit(run_figure(args.tag), args.out)
        return 0

    def sweep():
        cfg = _load(args.config)
        _emit(run_sweep(cfg), args.out or cfg.output)
        return 0

    def resonances():
        _emit(resonance_table(_load(args.config)), None)
        return 0

    def oracle_check():
        cfg = _load(args.config)
        data = _oracle_dataset(cfg)
        _emit(data, args.out or cfg.output)
        worst = float(data.column("max_diff").max())
        if worst > ORACLE_TOL:
            print(f"oracle and pipeline differ by {worst:.3e} > {ORACLE_TOL}", file=sys.stderr)
            return EXIT_INVARIANT
        print(f"oracle agrees with pipeline: max difference {worst:.3e}", file=sys.stderr)
        return 0

    handlers = {"figure": figure, "sweep": sweep, "resonances": resonances,
                "oracle-check": oracle_check}
    return _guarded(handlers[args.command])


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
