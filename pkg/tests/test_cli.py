import json
import math

import pytest

from riemap import cli, scenario
from riemap.errors import ScenarioError

BASE = """\
name = tiny
seed = 1

[map]
name = identity{3}

[points]
point = 0, 0, 0

[curve]
kappa = 1
tau = 0.5
s_max = 1
step = 1e-3
"""


def _write(tmp_path, text, name="s.scn"):
    path = tmp_path / name
    path.write_text(text)
    return path


# ------------------------------------------------------------ loading

def test_builtin_sphere_isotropy_loads():
    sc = scenario.load_builtin("sphere_isotropy")
    assert sc.source.name == "sphere{1}"
    assert sc.target.name == "euclidean{3}"
    assert sorted(scenario.builtin_names()) == sorted(
        ["sphere_isotropy", "scaling_negative", "paper_example", "quadric_anisotropic",
         "projection_circle", "identity_helix", "sphere3_helix"]
    )


def test_numbers_accept_expressions():
    sc = scenario.parse_scenario(BASE.replace("s_max = 1", "s_max = pi/2"))
    assert sc.curve.s_max == pytest.approx(math.pi / 2)


def test_step_zero_names_field(tmp_path):
    path = _write(tmp_path, BASE.replace("step = 1e-3", "step = 0"))
    with pytest.raises(ScenarioError) as info:
        scenario.load_scenario(path)
    assert info.value.field == "curve.step"
    assert "curve.step" in str(info.value)


def test_arity_mismatch(tmp_path):
    text = BASE.replace("name = identity{3}", "name = custom\narity = 3\nf1 = x1\nf2 = x2\nf3 = x3")
    text = text.replace("[map]", "[source]\nmanifold = euclidean{4}\n\n[target]\nmanifold = euclidean{3}\n\n[map]")
    text = text.replace("point = 0, 0, 0", "point = 0, 0, 0, 0")
    with pytest.raises(ScenarioError, match="dimension mismatch") as info:
        scenario.load_scenario(_write(tmp_path, text))
    assert info.value.line is not None


@pytest.mark.parametrize(
    "old,new,field",
    [
        ("s_max = 1", "s_max = 0.005", "curve.s_max"),
        ("name = identity{3}", "name = torus{3}", "map.name"),
        ("point = 0, 0, 0", "point = 0, 0", "points"),
        ("kappa = 1", "kappa = 1 +", "curve.kappa"),
    ],
)
def test_validation_errors_carry_field_paths(old, new, field):
    with pytest.raises(ScenarioError) as info:
        scenario.parse_scenario(BASE.replace(old, new))
    assert info.value.field.startswith(field)


def test_syntax_error_reports_line():
    with pytest.raises(ScenarioError) as info:
        scenario.parse_scenario(BASE + "this line has no equals sign\n")
    assert info.value.line == BASE.count("\n") + 1


# ------------------------------------------------------------ exit codes

def test_exit_pass(tmp_path, capsys):
    assert cli.main(["check", str(_write(tmp_path, BASE)), "--quiet"]) == 0


def test_exit_fail_on_non_riemannian_map(capsys):
    assert cli.main(["check", "scaling_negative", "--quiet"]) == 1


def test_exit_usage(tmp_path, capsys):
    assert cli.main(["check", "no_such_scenario"]) == 2
    assert cli.main(["check", str(_write(tmp_path, BASE.replace("step = 1e-3", "step = 0")))]) == 2
    assert "curve.step" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        cli.main(["check"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["check", "identity_helix", "--step", "-1"])
    assert info.value.code == 2


def test_informational_scenario_exits_zero(capsys):
    assert cli.main(["check", "paper_example", "--quiet"]) == 0


def test_scenarios_and_inspect(tmp_path, capsys):
    assert cli.main(["scenarios"]) == 0
    assert "sphere3_helix" in capsys.readouterr().out
    out = tmp_path / "jet.json"
    assert cli.main(["inspect", "sphere_isotropy", "--point", "0", "--report", str(out)]) == 0
    assert "rank: 2" in capsys.readouterr().out
    info = json.loads(out.read_text())
    assert info["rank"] == 2 and info["riemannian"]
    assert cli.main(["inspect", "sphere_isotropy", "--point", "9"]) == 2


# ------------------------------------------------------------ reports

def test_report_round_trip(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["check", str(_write(tmp_path, BASE)), "--report", str(out), "--quiet"]) == 0
    text = out.read_text()
    rep = scenario.RunReport.from_json(text)
    assert rep.to_json() == text
    data = json.loads(text)
    assert data["verdict"] == "pass"
    assert "wall_time" not in data


def test_timing_flag_adds_wall_time(tmp_path):
    out = tmp_path / "r.json"
    cli.main(["check", str(_write(tmp_path, BASE)), "--report", str(out), "--quiet", "--timing"])
    assert json.loads(out.read_text())["wall_time"] > 0


def test_reports_are_deterministic(tmp_path):
    path = _write(tmp_path, BASE)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli.main(["check", str(path), "--report", str(a), "--quiet"])
    cli.main(["check", str(path), "--report", str(b), "--quiet"])
    assert a.read_bytes() == b.read_bytes()


def test_seed_override_changes_trials(tmp_path):
    path = _write(tmp_path, BASE)
    a = scenario.run(scenario.load_scenario(path))
    b = scenario.run(scenario.override(scenario.load_scenario(path), seed=5))
    assert a.theorem31 != b.theorem31


# ------------------------------------------------------------ tables

def test_curve_tables(tmp_path):
    path = _write(tmp_path, BASE)
    d1, d2 = tmp_path / "one", tmp_path / "two"
    assert cli.main(["curve", str(path), "--emit", str(d1), "--quiet"]) == 0
    assert cli.main(["curve", str(path), "--emit", str(d2), "--quiet"]) == 0
    main = d1 / "tiny_curve.csv"
    lines = main.read_text().splitlines()
    assert lines[0] == "s,u1,u2,u3,kappa_tilde,tau_tilde,horiz_drift"
    assert len(lines) == 1 + 1001
    for f in sorted(d1.iterdir()):
        assert f.read_bytes() == (d2 / f.name).read_bytes()
    assert any(f.name.startswith("tiny_trial") for f in d1.iterdir())
