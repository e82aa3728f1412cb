import math

import numpy as np
import pytest

from tunnelstat import cli
from tunnelstat.cli import ConfigError, RunConfig, main, read_csv, run_figure, run_sweep
from tunnelstat.twobody import OutcomeStats, StatisticsKind

FIG3A_CONFIG = """
barrier.type = double-delta
barrier.omega = 50
barrier.d = 1
packet.p0 = {p0!r}
packet.sigma = 3
sweep.T_min = 0
sweep.T_max = {T_max!r}
sweep.count = 401
statistics.kind = fermionised
mode = breit-wigner
"""


@pytest.fixture(scope="module")
def figures():
    return {tag: run_figure(tag) for tag in cli.FIGURES}


def write(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# --- configuration ------------------------------------------------------------------

def test_parse_config_comments_and_spacing():
    raw = cli.parse_config("# header\n a = 1 # trailing\n\nb=x\n")
    assert raw == {"a": "1", "b": "x"}


@pytest.mark.parametrize("text, match", [
    ("just words", "expected"),
    ("a = 1\na = 2", "duplicate"),
    (" = 3", "empty key"),
])
def test_parse_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        cli.parse_config(text)


# delays start five separation times after the first launch
BASE = "barrier.type = delta\nbarrier.omega = 2\npacket.p0 = 5\npacket.sigma = 2\nsweep.T_min = 2\n"


@pytest.mark.parametrize("extra, match", [
    ("colour = blue", "unknown key"),
    ("mode = magic", "mode"),
    ("statistics.kind = anyon", "statistics.kind"),
    ("packet.x0 = nan", "finite"),
    ("sweep.count = 2.5", "integer"),
    ("sweep.count = 3", "exceed"),
    ("sweep.T_max = -1", "non-negative"),
    ("mode = wkb", "rectangular"),
    ("resonance.E_min = 5\nresonance.E_max = 1", "E_max"),
])
def test_config_rejections(extra, match):
    with pytest.raises(ConfigError, match=match):
        RunConfig.from_text(BASE + extra)


def test_oracle_needs_positive_delays():
    with pytest.raises(ConfigError, match="positive delays"):
        RunConfig.from_text(BASE.replace("T_min = 2", "T_min = 0") + "mode = oracle\n")


def test_config_rejects_narrow_packet():
    with pytest.raises(ConfigError, match="p0\\*sigma"):
        RunConfig.from_text(BASE.replace("packet.sigma = 2", "packet.sigma = 0.5"))


def test_config_rejects_bad_barrier():
    with pytest.raises(ConfigError, match="barrier.type"):
        RunConfig.from_text(BASE.replace("delta", "gaussian", 1))
    with pytest.raises(ConfigError, match="barrier"):
        RunConfig.from_text(BASE.replace("barrier.type = delta", "barrier.type = delta-comb")
                            + "barrier.positions = 0, 1\nbarrier.strengths = 1")


def test_wkb_rejects_shallow_rectangle():
    text = ("barrier.type = rectangular\nbarrier.height = 13\nbarrier.width = 1\n"
            "packet.p0 = 5\npacket.sigma = 2\nsweep.T_min = 0\nmode = wkb\n")
    with pytest.raises(ConfigError, match="wkb"):
        RunConfig.from_text(text)


def test_config_defaults():
    cfg = RunConfig.from_text(BASE)
    assert cfg.Ts == (2.0,)
    assert cfg.kind is StatisticsKind.FERMIONISED
    assert cfg.packet.x0 == pytest.approx(-30.0)
    assert cfg.oracle_grid.dx == 0.05


# --- sweeps -------------------------------------------------------------------------

def test_transparent_single_row():
    # with PR = 0 even the launch overlap must be negligible
    cfg = RunConfig.from_text(BASE.replace("barrier.omega = 2", "barrier.omega = 0")
                              .replace("T_min = 2", "T_min = 6"))
    data = run_sweep(cfg)
    assert len(data.rows) == 1
    assert data.column("P_TT")[0] == pytest.approx(1.0, abs=1e-12)
    assert data.column("PT")[0] == pytest.approx(1.0, abs=1e-12)


def test_rows_satisfy_identities(tmp_path):
    for kind in ("fermionised", "boson"):
        cfg = RunConfig.from_text(BASE + f"sweep.T_max = 5\nsweep.count = 31\n"
                                         f"statistics.kind = {kind}\n")
        data = run_sweep(cfg)
        for row in data.rows:
            vals = dict(zip(data.columns, row))
            OutcomeStats(vals["PT"], 1 - vals["PT"], vals["deltaP"], vals["P_TT"],
                         vals["P_RT"], vals["P_RR"]).check()


def test_csv_round_trip_and_metadata():
    cfg = RunConfig.from_text(BASE + "sweep.T_max = 3\nsweep.count = 5\n")
    data = run_sweep(cfg)
    back = read_csv(data.to_csv())
    assert back.columns == data.columns
    assert np.array_equal(np.array(back.rows), np.array(data.rows))
    meta = dict(back.metadata)
    assert meta["barrier.omega"] == "2" and meta["mode"] == "exact"
    assert "packet.x0 (resolved)" in meta


def test_sweep_matches_figure(figures, dd50_resonances):
    r1 = dd50_resonances[0]
    text = FIG3A_CONFIG.format(p0=r1.p_r, T_max=4.0 / (2.0 * r1.Gamma))
    data = run_sweep(RunConfig.from_text(text))
    fig = figures["fig3a"]
    assert np.allclose(data.column("T"), fig.column("T"), rtol=1e-14)
    assert np.allclose(data.column("deltaP"), fig.column("deltaP"), rtol=1e-12, atol=0)
    assert np.allclose(data.column("deltaP_bw"), fig.column("deltaP_bw"), rtol=1e-12)


def test_wkb_sweep_columns():
    text = ("barrier.type = rectangular\nbarrier.height = 50\nbarrier.width = 1\n"
            "packet.p0 = 5\npacket.sigma = 2\nsweep.T_min = 0.1\nsweep.T_max = 2\n"
            "sweep.count = 5\nmode = wkb\n")
    data = run_sweep(RunConfig.from_text(text))
    assert data.columns[-3:] == ["T_over_T0", "ratio", "ratio_wkb"]
    assert np.all(np.diff(data.column("ratio_wkb")) < 0)


# --- figures ------------------------------------------------------------------------

def test_fig2_resonances_reach_unity(figures, dd50_resonances):
    data = figures["fig2"]
    p, tr = data.column("p"), data.column("transparency")
    for r in dd50_resonances[:2]:
        assert tr[np.argmin(np.abs(p - r.p_r))] >= 0.99
    assert data.column("probe_a").max() == pytest.approx(1.0)
    assert data.column("probe_b").max() == pytest.approx(1.0)


def test_fig3a_shape(figures, dd50_resonances):
    data = figures["fig3a"]
    T, dP, PT = data.column("T"), data.column("deltaP"), data.column("PT")
    assert dP[0] / PT[0] ** 2 == pytest.approx(1.0, abs=1e-3)
    G = dd50_resonances[0].Gamma
    tail = T > 0.5 / (2 * G)
    rate = -np.polyfit(T[tail], np.log(dP[tail]), 1)[0]
    assert rate == pytest.approx(2 * G, rel=0.05)


def test_fig3b_oscillates(figures, dd50_resonances):
    data = figures["fig3b"]
    T, dP = data.column("T"), data.column("deltaP")
    r1, r2 = dd50_resonances[:2]
    later = T > 3.0
    idx = np.flatnonzero(later[1:-1] & (dP[1:-1] > dP[:-2]) & (dP[1:-1] >= dP[2:])) + 1
    period = np.polyfit(np.arange(idx.size), T[idx], 1)[0]
    assert period == pytest.approx(2 * math.pi / (r2.E_r - r1.E_r), rel=0.01)


def test_fig4_columns(figures):
    a = figures["fig4a"]
    assert a.column("incident").max() == pytest.approx(1.0)
    assert a.column("transmitted").max() == pytest.approx(1.0)
    b = figures["fig4b"]
    assert b.column("ratio")[0] == pytest.approx(1.0, abs=1e-9)
    assert b.column("ratio_wkb")[0] == pytest.approx(1.0)


def test_unknown_figure():
    with pytest.raises(ConfigError):
        run_figure("fig9")


# --- entry point --------------------------------------------------------------------

def test_main_figure_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["figure", "fig4b", "--out", str(a)]) == 0
    assert main(["figure", "fig4b", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_main_sweep_reproducible(tmp_path):
    cfg = write(tmp_path, BASE + "sweep.T_max = 4\nsweep.count = 11\n")
    outs = []
    for name in ("x.csv", "y.csv"):
        assert main(["sweep", "--config", cfg, "--out", str(tmp_path / name)]) == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]


def test_main_sweep_to_stdout(tmp_path, capsys):
    cfg = write(tmp_path, BASE + "sweep.T_max = 3\nsweep.count = 3\n")
    assert main(["sweep", "--config", cfg]) == 0
    data = read_csv(capsys.readouterr().out)
    assert len(data.rows) == 3


def test_main_config_errors(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    cfg = write(tmp_path, BASE + "colour = blue\n")
    assert main(["sweep", "--config", cfg]) == cli.EXIT_CONFIG
    assert "unknown key" in capsys.readouterr().err


def test_main_unseparated_launch_is_an_invariant_error(tmp_path, capsys):
    # identical launches of a mostly transmitted packet: one exchange term cannot serve
    # both the transmitted and the reflected pair
    cfg = write(tmp_path, BASE.replace("T_min = 2", "T_min = 0"))
    assert main(["sweep", "--config", cfg]) == cli.EXIT_INVARIANT
    assert "P_RR" in capsys.readouterr().err


def test_main_computation_error(tmp_path):
    # the packet starts inside a grid too coarse for its wavelength
    cfg = write(tmp_path, "barrier.type = delta\nbarrier.omega = 1\npacket.p0 = 60\n"
                          "packet.sigma = 1\nsweep.T_min = 1\nmode = oracle\n")
    assert main(["oracle-check", "--config", cfg]) == cli.EXIT_COMPUTE


def test_main_resonances(tmp_path, capsys, dd50_resonances):
    cfg = write(tmp_path, "barrier.type = double-delta\nbarrier.omega = 50\n"
                          "packet.p0 = 3\npacket.sigma = 3\nsweep.T_min = 0\n")
    assert main(["resonances", "--config", cfg]) == 0
    data = read_csv(capsys.readouterr().out)
    assert data.columns == ["n", "E_r", "Gamma", "p_r", "peak"]
    assert data.column("E_r")[:2] == pytest.approx([r.E_r for r in dd50_resonances[:2]])


def test_main_oracle_check(tmp_path, capsys):
    cfg = write(tmp_path, "barrier.type = rectangular\nbarrier.height = 225\nbarrier.width = 1\n"
                          "packet.p0 = 15\npacket.sigma = 1\npacket.x0 = -20\n"
                          "sweep.T_min = 0.2\nsweep.T_max = 0.6\nsweep.count = 2\n"
                          "oracle.dx = 0.0125\noracle.dt = 0.001\nmode = oracle\n")
    out = tmp_path / "o.csv"
    assert main(["oracle-check", "--config", cfg, "--out", str(out)]) == 0
    assert "agrees" in capsys.readouterr().err
    data = read_csv(out.read_text())
    assert data.column("max_diff").max() < 1e-6


def test_main_rejects_unknown_command():
    with pytest.raises(SystemExit):
        main(["dance"])
