import json

import pytest

from critspde import config as cfgmod
from critspde.cli import _parse_set, main
from critspde.report import dumps

SMALL_SIMULATE = [
    "simulate.exact_law.N=3000", "simulate.constant_drift.N=3000", "simulate.moments.N=1500",
    "simulate.moments.m_levels=[8,16]", "simulate.h01.N=1000", "simulate.factorization.N=3000",
    "simulate.girsanov.N=8000",
]


def test_defaults_validate():
    cfg = cfgmod.load()
    assert cfg["suite"] == "all"
    assert set(cfgmod.SUITES) <= set(cfg)


@pytest.mark.parametrize("override,path", [
    ({"resolvent": {"lam": "x"}}, "resolvent.lam"),
    ({"bounds": {"lams": [1.0, -1.0]}}, "bounds.lams[1]"),
    ({"semigroup": {"gradient": {"points": 0}}}, "semigroup.gradient.points"),
    ({"workers": 0}, "workers"),
    ({"zygmund": {"bogus": 1}}, "zygmund"),
    ({"suite": "everything"}, "suite"),
])
def test_errors_name_the_key_path(override, path):
    with pytest.raises(cfgmod.ConfigError) as err:
        cfgmod.load(overrides=override)
    assert str(err.value).startswith(path + ":")


def test_semantic_errors():
    with pytest.raises(cfgmod.ConfigError, match=r"simulate\.factorization\.alpha"):
        cfgmod.load(overrides={"simulate": {"factorization": {"alpha": 0.2}}})


def test_mismatched_initial_data_exits_nonzero(tmp_path, capsys):
    cons = cfgmod.DEFAULTS["uniqueness"]["constructions"]
    bad = {"suite": "uniqueness", "uniqueness": {"constructions": [cons[0], dict(cons[1], x0=[0.5])]}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(bad))
    assert main(["run", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "uniqueness.constructions[1].x0" in err
    assert not (tmp_path / "o").exists()


def test_invalid_json_file(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{suite: ")
    assert main(["run", "--config", str(path)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_set_overrides():
    assert _parse_set(["a.b=3", "a.c=[1, 2]", "d=text"]) == {"a": {"b": 3, "c": [1, 2]}, "d": "text"}
    with pytest.raises(cfgmod.ConfigError):
        _parse_set(["novalue"])


def test_list_and_print(capsys):
    assert main(["list-suites"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [ln.split("\t")[0] for ln in lines] == list(cfgmod.SUITES)
    assert main(["print-defaults"]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(dumps(cfgmod.DEFAULTS))
    assert main(["print-schema"]) == 0
    assert json.loads(capsys.readouterr().out)["type"] == "object"


def test_print_defaults_merges_a_file(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"resolvent": {"lam": 3.0}}))
    assert main(["print-defaults", "--config", str(path)]) == 0
    merged = json.loads(capsys.readouterr().out)
    assert merged["resolvent"]["lam"] == 3.0 and merged["resolvent"]["mu"] == 2.0


def test_run_writes_reports(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CRITSPDE_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", "--suite", "resolvent"]) == 0
    out = capsys.readouterr().out
    assert "resolvent\t" in out and "all checks passed" in out
    rep = json.loads((tmp_path / "env" / "resolvent.json").read_text())
    assert rep["pass"] and rep["config"]["resolvent"]["lam"] == 1.0
    assert list((tmp_path / "env" / "plots").glob("*.csv"))
    assert not list((tmp_path / "env").rglob("*.png"))


def test_failed_check_exits_one(tmp_path, capsys):
    # a generator tolerance below the grid error cannot be met
    assert main(["run", "--suite", "resolvent", "--out", str(tmp_path), "--set", "resolvent.generator_tol=1e-9"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_seed_changes_bytes_not_verdicts(tmp_path):
    args = ["run", "--suite", "simulate"] + [a for s in SMALL_SIMULATE for a in ("--set", s)]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    a = json.loads((tmp_path / "a" / "simulate.json").read_text())
    b = json.loads((tmp_path / "b" / "simulate.json").read_text())
    assert (tmp_path / "a" / "simulate.json").read_bytes() != (tmp_path / "b" / "simulate.json").read_bytes()
    assert [(c["name"], c["pass"]) for c in a["checks"]] == [(c["name"], c["pass"]) for c in b["checks"]]


def test_simulate_command(tmp_path, capsys):
    out = tmp_path / "ens"
    assert main(["simulate", "--model", '{"family": "burgers1d", "M": 4}', "--drift", '{"kind": "nemytskii_burgers"}',
                 "--x0", "[1.0]", "--T", "0.1", "--dt", "0.05", "--paths", "4", "--out", str(out)]) == 0
    meta = json.loads((out / "ensemble.json").read_text())
    assert meta["layout"]["shape"] == [4, 3, 4]
    assert main(["simulate", "--model", '{"family": "nope"}']) == 2
    assert "--model.family" in capsys.readouterr().err


def test_figures_are_opt_in_and_reproducible(tmp_path):
    pytest.importorskip("matplotlib")
    for d in ("a", "b"):
        assert main(["run", "--suite", "resolvent", "--figures", "--out", str(tmp_path / d)]) == 0
    pngs = sorted((tmp_path / "a").rglob("*.png"))
    assert pngs
    for p in pngs:
        assert p.read_bytes() == (tmp_path / "b" / p.relative_to(tmp_path / "a")).read_bytes()
