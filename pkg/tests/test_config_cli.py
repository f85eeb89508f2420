import csv
import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specgap import cli
from specgap import config as C
from specgap.errors import ConfigError
from specgap.gaps import GapReport
from specgap.models import montgomery_bands

BANDS = """\
[run]
experiment = bands
[bands]
k = 1
b_min = -1
b_max = 3
b_step = 0.1
J = 3
"""


def test_defaults_and_normalization_roundtrip():
    cfg = C.parse_text(BANDS)
    assert cfg.experiment == "bands"
    assert cfg.get("solver", "tol") == 1e-9
    again = C.parse_text(cfg.normalized())
    assert again.sections == cfg.sections
    assert again.digest() == cfg.digest()


@settings(max_examples=30)
@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=7, unique=True), st.integers(1, 40))
def test_roundtrip_property(hs, m):
    hs = sorted(hs, reverse=True)
    text = f"[run]\nexperiment = quasimode\n[sweep]\nh = {', '.join(repr(h) for h in hs)}\n[solver]\nm = {m}\n"
    try:
        cfg = C.parse_text(text)
    except ConfigError:
        return  # values that collapse after repr are rejected, never silently reordered
    assert C.parse_text(cfg.normalized()).sections == cfg.sections


@pytest.mark.parametrize("text,line", [
    ("[run]\nexperiment = bands\n[sweep]\nh = 0.01, 0.02\n", 4),
    ("[run]\nexperiment = bands\n[nope]\n", 3),
    ("[run]\nexperiment = bands\n[solver]\nm = x\n", 4),
    ("[run]\nexperiment = bands\n[solver]\nm = 1\nm = 2\n", 5),
    ("experiment = bands\n", 1),
    ("[run]\nexperiment = bands\n[quasimode]\nr1 = 0.5\nr2 = 0.4\n", 4),
    ("[run]\nexperiment = bands\n[gaps]\nsafety = 0.7\n", 4),
    ("[run]\nexperiment = bands\n[field]\nfamily = nope\n", 4),
])
def test_errors_are_line_anchored(text, line):
    with pytest.raises(ConfigError) as exc:
        C.parse_text(text)
    assert exc.value.line == line
    assert f"line {line}" in str(exc.value)


def _run(tmp_path, name, text, *extra):
    cfgp = tmp_path / f"{name}.cfg"
    cfgp.write_text(text)
    out = tmp_path / name
    exp = re.search(r"experiment = (\S+)", text).group(1)
    code = cli.main([exp, "--config", str(cfgp), "--out", str(out), *extra])
    return code, out


def test_cli_bands_deterministic(tmp_path):
    c1, o1 = _run(tmp_path, "a", BANDS)
    c2, o2 = _run(tmp_path, "b", BANDS)
    assert c1 == c2 == 0
    assert (o1 / "bands.csv").read_bytes() == (o2 / "bands.csv").read_bytes()
    assert (o1 / "config.normalized").read_bytes() == (o2 / "config.normalized").read_bytes()
    man = json.loads((o1 / "manifest.json").read_text())
    assert man["status"] == "ok"
    assert man["config_sha256"] == C.parse_text(BANDS).digest()
    summary = json.loads((o1 / "bands.json").read_text())
    assert summary["min_mu1"] == pytest.approx(0.5698286, abs=2e-3)


def test_cli_verify_identities(tmp_path):
    code, out = _run(tmp_path, "id", "[run]\nexperiment = verify-identities\n")
    assert code == 0
    d = json.loads((out / "identities.json").read_text())
    assert d["passed"]
    assert len(d["rows"]) == 2 * 3 * 3 * 3
    assert all(r["deviation"] <= 1e-12 * r["scale"] for r in d["rows"])


def test_cli_malformed_sweep_exit_2(tmp_path, capsys):
    code, _ = _run(tmp_path, "bad", "[run]\nexperiment = quasimode\n[sweep]\nh = 0.01, 0.02\n")
    assert code == 2
    assert "line 4" in capsys.readouterr().err


def test_cli_jobs_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("SPECGAP_JOBS", "two")
    code, _ = _run(tmp_path, "env", BANDS)
    assert code == 2


def test_cli_solver_failure_exit_3(tmp_path):
    # the default sweep clips every point-Gaussian quasimode: the run fails loudly
    text = "[run]\nexperiment = quasimode\n[field]\nfamily = cos_product\n[quasimode]\nrecipe = point_gaussian\n" \
           "[sweep]\nh = 0.04, 0.02\n"
    code, out = _run(tmp_path, "clip", text)
    assert code == 3
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed"
    assert "CutoffClipped" in man["error"]


def test_emit_residual_sweep(tmp_path):
    pairs = [(0.04 / 2**i, 0.01 / 4**i) for i in range(7)]
    cli.emit_plot_data(pairs, tmp_path / "r.csv")
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["h", "residual", "log_h", "log_residual"]
    assert len(rows) == 8


def test_emit_empty_gap_report(tmp_path):
    cli.emit_plot_data([], tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines() == ["h,lo,hi,length,interior"]
    rep = GapReport((0.0, 1.0), [], 0.1, 0.01)
    cli.emit_plot_data([rep], tmp_path / "g2.csv")
    assert len((tmp_path / "g2.csv").read_text().splitlines()) == 1


def test_emit_band_table(tmp_path):
    import numpy as np

    b = np.linspace(-1, 3, 101)
    table = montgomery_bands(1, b, 5, richardson=False)
    cli.emit_plot_data(table, tmp_path / "b.csv")
    rows = list(csv.reader(open(tmp_path / "b.csv")))
    assert len(rows) == 102
    assert all(len(r) == 6 for r in rows)


def test_shipped_configs_parse():
    import pathlib

    paths = sorted((pathlib.Path(__file__).parent.parent / "configs").glob("*.cfg"))
    assert paths
    for p in paths:
        cfg = C.load(p)
        assert cfg.experiment in C.EXPERIMENTS
