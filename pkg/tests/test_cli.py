import csv
import io
import json

import numpy as np
import pytest

from cli.config import ConfigError, RunConfig, load_config
from cli.display import Display
from cli.engine import CommandEngine
from main import build_parser, command_options, main


def _write_config(tmp_path, data):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_default_config_round_trip():
    cfg = RunConfig()
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.initial_datum().x_centers[0].tolist() == [0.3, 0.3]
    assert cfg.command("probe")["term"] == "I1"
    assert cfg.command("probe")["summed"] is False
    assert cfg.command("bound-check")["eps"] == [0.1, 0.0316, 0.01]


def test_default_datum_is_a_concentric_mixture():
    f0 = RunConfig(dimension=3).initial_datum()
    assert f0.is_concentric
    assert f0.is_probability
    assert sorted(f0.v_widths[:, 0].tolist()) == [0.5, 1.5]
    assert f0.mean_velocity.tolist() == [0.5, 0.5, 0.5]


def test_unknown_sections_and_options_rejected():
    with pytest.raises(ConfigError, match="Unknown config sections: extra"):
        RunConfig.from_dict({"extra": 1})
    with pytest.raises(ConfigError, match="Unknown options for probe: bogus"):
        RunConfig(commands={"probe": {"bogus": 1}})
    with pytest.raises(ConfigError, match="Unsupported command: fly"):
        RunConfig(commands={"fly": {}})
    with pytest.raises(ConfigError, match="Unsupported quadrature rule"):
        RunConfig.from_dict({"budgets": {"rule": "simpson"}})
    with pytest.raises(ConfigError, match="tolerances.sigmas must be positive"):
        RunConfig.from_dict({"tolerances": {"sigmas": 0}})


def test_invalid_domain_blocks_become_config_errors():
    with pytest.raises(ConfigError, match="Invalid potential"):
        RunConfig(potential={"kind": "yukawa"})
    with pytest.raises(ConfigError, match="does not match dimension 2"):
        RunConfig(datum={"dimension": 3, "components": [{}]})


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="Cannot read config"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(bad))
    assert load_config(None) == RunConfig()


def test_overrides_resize_the_problem():
    cfg = RunConfig().with_overrides(seed=7, dimension=3, command="bound-check", n=2, s=None)
    assert cfg.seed == 7
    assert cfg.dimension == 3
    assert cfg.initial_datum().dimension == 3
    assert cfg.initial_datum().x_centers[0].tolist() == [0.3, 0.3, 0.3]
    assert cfg.potential_spec().dimension == 3
    assert cfg.command("bound-check")["n"] == 2
    assert cfg.command("bound-check")["s"] == [0.0, 1.0, 2.0, 4.0, 8.0]


def test_parser_maps_flags_onto_options():
    args = build_parser().parse_args(["probe", "--term", "I0", "--ladder", "1e-1:4", "--dim", "1"])
    options = command_options(args)
    assert options["term"] == "I0"
    assert options["ladder_start"] == 0.1
    assert options["ladder_points"] == 4
    assert "ladder" not in options
    args = build_parser().parse_args(["solve", "--nmax", "2", "--no-oracle"])
    options = command_options(args)
    assert options["n_max"] == 2
    assert options["oracle"] is False
    assert options["override"] is None


def test_bad_ladder_flag_exits():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["probe", "--ladder", "0.1"])


def test_delta_check_writes_json(tmp_path):
    out = tmp_path / "delta.json"
    assert main(["delta-check", "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["command"] == "delta-check"
    assert data["passed"] is True
    assert data["results"]["dirichlet"]["sign"] == 1
    assert "reduction" in data["results"]
    assert (tmp_path / "delta.csv").exists()


def test_oracle_compare_needs_one_dimension():
    assert main(["oracle-compare", "--dim", "2"]) == 2


def test_unknown_term_is_a_config_error():
    assert main(["probe", "--term", "I9", "--dim", "1"]) == 2


def test_probe_writes_table_and_result(tmp_path):
    out = tmp_path / "ladder.csv"
    assert main(["probe", "--term", "I0", "--dim", "1", "--ladder", "1e-1:4", "--out", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4
    assert set(rows[0]) == {"eps", "value", "stderr"}
    assert float(rows[0]["eps"]) == pytest.approx(0.1)
    data = json.loads((tmp_path / "ladder.json").read_text())
    assert data["results"]["selector"]["which"] == "I0"
    assert data["results"]["measured"] == "signed"


def test_cross_section_grid(tmp_path):
    out = tmp_path / "cs.json"
    assert main(["cross-section", "--dim", "3", "--grid", "8", "--w", "0,0,1", "--out", str(out)]) == 0
    with open(tmp_path / "cs.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 64
    assert "speed" not in rows[0]
    assert all(float(r["B"]) >= 0.0 for r in rows)


def test_cross_section_rejects_one_dimension():
    assert main(["cross-section", "--dim", "1"]) == 2


def test_zero_potential_solve_is_free_transport(tmp_path, capsys):
    config = _write_config(tmp_path, {"potential": {"amplitude": 0.0},
                                      "datum": {"components": [{"x_center": 0.3, "v_center": 0.5}]}})
    assert main(["solve", "--config", config, "--no-oracle", "--t", "0.5", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    # x₁ − v₁t − x_c = −0.25 per coordinate, v₁ at the velocity centre
    expected = np.exp(-0.5 * 2 * 0.25 ** 2) / (2.0 * np.pi) ** 2
    assert data["results"]["value"]["value"] == pytest.approx(expected)
    assert data["results"]["truncation_bound"] == 0.0


def test_seeded_runs_are_reproducible(tmp_path):
    config = _write_config(tmp_path, {"budgets": {"samples": 2000}})
    results = []
    for name in ("a.json", "b.json"):
        out = tmp_path / name
        main(["solve", "--config", config, "--no-oracle", "--override", "--t", "0.2", "--nmax", "2",
              "--seed", "4", "--out", str(out)])
        results.append(json.loads(out.read_text())["results"])
    assert results[0] == results[1]
    assert results[0]["orders"][1]["stderr"] > 0.0


def test_engine_reports_through_display():
    stream = io.StringIO()
    engine = CommandEngine(RunConfig(dimension=1), Display(color=False, stream=stream))
    result = engine.run("delta-check")
    text = stream.getvalue()
    assert result.passed
    assert result.files == []
    assert "qkinetic delta-check" in text
    assert "[PASS] dirichlet" in text
    assert "\033[" not in text


def test_engine_rejects_unknown_command():
    with pytest.raises(ConfigError, match="Unsupported command: fly"):
        CommandEngine(RunConfig(), quiet=True).run("fly")


def test_display_marks_failures():
    stream = io.StringIO()
    display = Display(color=False, stream=stream)
    display.show_check("envelope", False, ["too large"])
    display.show_table([{"eps": 0.1, "value": 1.0}], ["eps", "value"])
    display.show_value("slope", 0.5, 0.01)
    text = stream.getvalue()
    assert "[FAIL] envelope" in text
    assert "too large" in text
    assert "± 0.01" in text


def test_summed_flag_reaches_the_selector():
    args = build_parser().parse_args(["probe", "--term", "I2", "--summed"])
    assert command_options(args)["summed"] is True
    args = build_parser().parse_args(["bound-check", "--eps", "0.1,0.01"])
    assert command_options(args)["eps"] == [0.1, 0.01]


def test_bad_option_values_are_config_errors():
    assert main(["probe", "--term", "I2", "--j", "1", "--dim", "1"]) == 2
    assert main(["converge", "--dim", "1", "--eps", "0.01,0.1"]) == 2
    assert main(["bound-check", "--dim", "1", "--eps", "-0.1"]) == 2


def test_numerical_failure_is_not_a_config_error(monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise ValueError("integrand overflow")

    monkeypatch.setattr("cli.engine.mollified_delta_check", broken)
    with pytest.raises(ValueError, match="integrand overflow") as info:
        CommandEngine(RunConfig(dimension=1), quiet=True).run("delta-check")
    assert not isinstance(info.value, ConfigError)
    assert main(["delta-check", "--dim", "1"]) == 1
    assert "integrand overflow" in capsys.readouterr().err
