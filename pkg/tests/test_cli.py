import json

import pytest

from schwarzlab.cli import ConfigError, load_config, main, parse_speed, parse_surface_spec


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for key in ("CONFIG", "SEED", "BANDLIMIT", "MASS", "OUT"):
        monkeypatch.delenv("SCHWARZLAB_" + key, raising=False)


def _config(tmp_path, name="c.json", **fields):
    path = tmp_path / name
    path.write_text(json.dumps({"schema_version": 1, **fields}))
    return str(path)


def _run(tmp_path, argv, name="out.json"):
    out = tmp_path / name
    code = main(argv + ["--out", str(out)])
    return code, (json.loads(out.read_text()) if out.exists() else None)


@pytest.mark.parametrize("surface", ["round 3", "perturbed 3 0.05 Y22"])
def test_identities_pass(tmp_path, surface):
    code, rep = _run(tmp_path, ["identities", "--config", _config(tmp_path, surface=surface), "--bandlimit", "11"])
    assert code == 0
    assert rep["body"]["pass"]
    names = {c["name"] for c in rep["body"]["results"]["criteria"]}
    assert any("gauss_bonnet" in n for n in names)
    for c in rep["body"]["results"]["criteria"]:
        assert set(c) >= {"name", "value", "tolerance", "relation", "pass"}


def test_bandlimit_too_small_is_config_error(tmp_path, capsys):
    code, rep = _run(tmp_path, ["identities", "--bandlimit", "3"])
    assert code == 2 and rep is None
    assert "bandlimit" in capsys.readouterr().err


@pytest.mark.parametrize("spec", ["cube 3", "perturbed 3 0.05", "perturbed 3 1.5 Y22", "round -1", "round abc"])
def test_bad_surface_spec(tmp_path, spec, capsys):
    code, _ = _run(tmp_path, ["identities", "--config", _config(tmp_path, surface=spec)])
    assert code == 2
    assert "surface" in capsys.readouterr().err


def test_missing_schema_version(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"seed": 1}))
    with pytest.raises(ConfigError, match="schema_version"):
        load_config("identities", str(path), env={})


def test_unknown_field_rejected(tmp_path):
    with pytest.raises(ConfigError, match="colour"):
        load_config("identities", _config(tmp_path, colour="red"), env={})


def test_precedence(tmp_path):
    path = _config(tmp_path, seed=1, bandlimit=9, mass=0.5)
    env = {"SCHWARZLAB_SEED": "2", "SCHWARZLAB_BANDLIMIT": "10"}
    cfg = load_config("penrose", path, env=env, overrides={"seed": 3})
    assert (cfg.seed, cfg.bandlimit, cfg.mass) == (3, 10, 0.5)


def test_environment_config_path(tmp_path, monkeypatch):
    monkeypatch.setenv("SCHWARZLAB_CONFIG", _config(tmp_path, bandlimit=8, speed="zero"))
    monkeypatch.setenv("SCHWARZLAB_MASS", "0.7")
    code, rep = _run(tmp_path, ["lemma2"])
    assert code == 0
    assert rep["body"]["config"]["bandlimit"] == 8
    assert rep["body"]["config"]["mass"] == 0.7


def test_first_variation_run_with_zero_speed(tmp_path):
    code, rep = _run(tmp_path, ["lemma2", "--config", _config(tmp_path, speed="zero", bandlimit=11)])
    assert code == 0
    cong = rep["body"]["results"]["congruent"]
    assert cong["fd"] == 0.0 and cong["rhs"] == 0.0
    assert "skipped" in rep["body"]["results"]["synthetic"]


def test_penrose_runs(tmp_path):
    code, rep = _run(tmp_path, ["penrose", "--bandlimit", "9"])
    assert code == 0
    assert rep["body"]["pass"]


def test_deterministic_and_seeded(tmp_path):
    runs = {}
    for name, seed in (("a", 5), ("b", 5), ("c", 6)):
        code, rep = _run(tmp_path, ["lemma2", "--seed", str(seed)], name + ".json")
        assert code == 0
        rep["body"]["config"].pop("output")
        runs[name] = rep
    assert runs["a"]["body"] == runs["b"]["body"]
    assert runs["a"]["body"]["results"] != runs["c"]["body"]["results"]
    assert runs["a"]["header"]["program"] == "schwarzlab"


def test_short_continuation_writes_step_log(tmp_path):
    cfg = _config(tmp_path, surface="perturbed 3 0.05 Y22", bandlimit=11, steps=5, s_max=0.01,
                  fd_steps=5, fd_s_max=0.005)
    code, rep = _run(tmp_path, ["continuation", "--config", cfg])
    assert code == 0, rep
    lines = (tmp_path / "out.steps.jsonl").read_text().splitlines()
    assert len(lines) == 6
    assert all("drift" in json.loads(x) for x in lines)


def test_near_horizon_continuation_fails(tmp_path, capsys):
    code, _ = _run(tmp_path, ["continuation", "--config", _config(tmp_path, surface="round 2.02", bandlimit=8)])
    assert code == 1
    assert "MeanCurvatureDegenerate" in capsys.readouterr().err


def test_parsers():
    assert parse_surface_spec("round 3") == ("round", 3.0)
    assert parse_surface_spec("perturbed 3 0.05 Y2,-2")[1:] == (3.0, 0.05, 2, -2)
    assert parse_speed("constant 2.5") == ("constant", 2.5)
    with pytest.raises(ConfigError):
        parse_speed("fast")
