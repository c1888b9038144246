import csv

import numpy as np
import pytest

from qmcgreeks import cli
from qmcgreeks.estimator import EstimationError, estimate
from qmcgreeks.payoffs import PayoffSpec
from qmcgreeks.presets import PRESETS, ladder_market, preset, standard_stream

FAST = ["--assets", "2", "--steps", "2", "--points", "64", "--reps", "4",
        "--method", "loc"]


def _read(path):
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def test_run_writes_csv_that_round_trips_exactly(tmp_path):
    out = tmp_path / "deltas.csv"
    assert cli.run(FAST + ["--output", str(out)]) == 0
    rows = _read(out)
    assert [row["component"] for row in rows] == ["1", "2"]
    assert all(row["method"] == "loc" for row in rows)

    market = ladder_market(2, 2)
    report = estimate(market, PayoffSpec(kind="call", strike=100.0),
                      standard_stream(2, 2, 64, 4), method="loc")
    for k, row in enumerate(rows):
        assert float(row["delta"]) == report.deltas[k]
        assert float(row["stderr"]) == report.stderrs[k]
        assert int(row["rejected_paths"]) == report.rejected_by_component[k]


def test_sweep_emits_one_row_per_strike_and_component(tmp_path):
    out = tmp_path / "sweep.csv"
    code = cli.run(["--assets", "4", "--steps", "2", "--points", "32",
                    "--reps", "2", "--method", "loc",
                    "--sweep", "80:120:5", "--output", str(out)])
    assert code == 0
    rows = _read(out)
    assert len(rows) == 9 * 4
    strikes = sorted({float(row["strike"]) for row in rows})
    assert strikes == [80.0 + 5.0 * i for i in range(9)]
    assert list(rows[0]) == ["strike", "component", "delta", "stderr",
                             "method", "rejected_paths"]


def test_debug_replication_dump(tmp_path):
    out = tmp_path / "deltas.csv"
    debug = tmp_path / "reps.csv"
    code = cli.run(FAST + ["--output", str(out),
                           "--debug-replications", str(debug)])
    assert code == 0
    rows = _read(debug)
    assert len(rows) == 4 * 2
    assert list(rows[0]) == ["replication", "component", "mean"]
    means = np.array([float(row["mean"]) for row in rows]).reshape(4, 2)
    assert np.isfinite(means).all()


def test_bad_inputs_exit_with_config_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[market]\nrate = 0.05\n")
    assert cli.run(["--config", str(bad)]) == cli.EXIT_CONFIG
    assert "missing maturity entry" in capsys.readouterr().err

    assert cli.run(["--sweep", "0:100:10"]) == cli.EXIT_CONFIG
    assert "positive" in capsys.readouterr().err

    unknown = tmp_path / "unknown.ini"
    unknown.write_text("[simulation]\npoints = 10\n")
    assert cli.run(["--config", str(unknown)]) == cli.EXIT_CONFIG
    assert "unknown section" in capsys.readouterr().err

    assert cli.run(["--payoff", "digital", "--strike", "-5"]) == cli.EXIT_CONFIG
    assert "positive strike" in capsys.readouterr().err


def test_estimation_failure_exits_with_run_code(monkeypatch, capsys):
    def explode(*args, **kwargs):
        raise EstimationError("too many degenerate paths")

    monkeypatch.setattr(cli, "estimate", explode)
    assert cli.run(FAST) == cli.EXIT_ESTIMATION
    assert "too many degenerate paths" in capsys.readouterr().err


def test_flags_override_config_file_and_preset(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("\n".join([
        "[market]",
        "assets = 3",
        "rate = 0.02",
        "maturity = 2.0",
        "dates = 4",
        "correlation = 0.3",
        "[payoff]",
        "kind = digital",
        "strike = 95",
        "[qmc]",
        "points = 128",
        "replications = 6",
        "[run]",
        "method = loc",
        "lt = off",
    ]))
    args = cli.build_parser().parse_args(
        ["--preset", "table3", "--config", str(ini), "--strike", "120",
         "--payoff", "asian-fixed"])
    values = cli._resolve(args)
    assert values["kind"] == "call"          # flag beats file beats preset
    assert values["strike"] == 120.0
    assert values["method"] == "loc"
    assert values["lt"] is False
    assert values["market"].n_assets == 3
    assert values["market"].rate == 0.02
    assert values["market"].maturity == 2.0
    assert values["qmc"].points_per_replication == 128
    assert values["qmc"].replications == 6


def test_market_geometry_flags_replace_file_market(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[market]\nassets = 3\nrate = 0.02\nmaturity = 2.0\n"
                   "dates = 4\ncorrelation = 0.3\n")
    args = cli.build_parser().parse_args(
        ["--config", str(ini), "--assets", "5", "--steps", "8"])
    values = cli._resolve(args)
    assert values["market"].n_assets == 5
    assert values["market"].n_dates == 8
    assert values["market"].rate == 0.05   # back to the ladder default


def test_explicit_spot_and_vol_lists(tmp_path):
    ini = tmp_path / "run.ini"
    ini.write_text("[market]\nspots = 90 100\nvols = 0.1, 0.3\nrate = 0.05\n"
                   "maturity = 1.0\ndates = 2\ncorrelation = 0.5\n")
    args = cli.build_parser().parse_args(["--config", str(ini)])
    values = cli._resolve(args)
    assert values["market"].spots.tolist() == [90.0, 100.0]
    assert values["market"].vols.tolist() == [0.1, 0.3]


def test_presets_are_complete_and_consistent():
    kinds = {"table1": "call", "table2": "call", "table3": "floating",
             "table4": "digital", "table5": "best_of"}
    assert set(PRESETS) == set(kinds)
    for name in PRESETS:
        chosen = preset(name)
        assert chosen.payoff.kind == kinds[name]
        assert chosen.market.n_assets == 10
        assert chosen.market.n_dates == 64
        assert (chosen.qmc.nominal_dimension
                == chosen.market.nominal_dimension)
        assert chosen.method == "adaptive"
    with pytest.raises(ValueError, match="unknown preset"):
        preset("table9")
