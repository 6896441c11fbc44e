import json
import os
import warnings

import pytest

from volterra_obs.cli import main
from volterra_obs.config import (
    KNOWN_TESTS,
    SUBCOMMAND_TESTS,
    ConfigError,
    config_hash,
    default_config,
    parse_config,
)
from volterra_obs.runner import execute

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from volterra_obs.service import app

MINIMAL = {
    "kernel": {"name": "constant_one"},
    "system": {"type": "explicit", "eigenvalues": [-1], "obs_coeffs": [1]},
    "tests": [{"id": "gram"}, {"id": "weighted_norm", "params": {"r": [1.0]}}],
}
FLUX = {
    "system": {"type": "fracdiff", "n_modes": 16, "observation": {"kind": "boundary_flux"}},
    "tests": [{"id": "carleson"}],
}


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(data if isinstance(data, str) else json.dumps(data))
    return str(p)


# ---------------------------------------------------------------------------
# parse_config
# ---------------------------------------------------------------------------


def test_minimal_config_valid():
    cfg = parse_config(json.dumps(MINIMAL))
    assert cfg.resolved_kernel().name == "constant_one"
    assert cfg.build_system().n_modes == 1


def test_fractional_constraint_named():
    with pytest.raises(ConfigError) as exc:
        parse_config({"system": {"type": "fracdiff", "alpha": 0.5, "beta": 0.9}})
    msg = exc.value.errors[0]["message"]
    assert "2*alpha < beta" in msg
    assert exc.value.errors[0]["path"].startswith("system")


def test_unknown_test_lists_known_ids():
    with pytest.raises(ConfigError) as exc:
        parse_config({"system": {"type": "constructed"}, "tests": [{"id": "nope"}]})
    msg = exc.value.errors[0]["message"]
    for tid in KNOWN_TESTS:
        assert tid in msg


def test_all_errors_reported_together():
    bad = {
        "system": {"type": "fracdiff", "alpha": 0.5, "beta": 0.9},
        "tests": [{"id": "nope"}, {"id": "carleson", "params": {"n_factor": 1}}],
    }
    with pytest.raises(ConfigError) as exc:
        parse_config(bad)
    paths = [e["path"] for e in exc.value.errors]
    assert len(paths) == 3
    assert any(p.startswith("system") for p in paths)
    assert any(p.startswith("tests[0]") for p in paths)
    assert any(p.startswith("tests[1]") for p in paths)


def test_json_syntax_error_has_position():
    with pytest.raises(ConfigError) as exc:
        parse_config('{"kernel": {"name": "constant_one",}\n}')
    e = exc.value.errors[0]
    assert e["line"] == 1 and e["column"] > 1


def test_semantic_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config({"tests": [{"id": "gram"}, {"id": "scalar_solve"}]})
    msgs = " ".join(e["message"] for e in exc.value.errors)
    assert "needs a system" in msgs and "needs a kernel" in msgs


def test_unknown_field_and_kernel_params_rejected():
    with pytest.raises(ConfigError):
        parse_config({"kernel": {"name": "constant_one"}, "colour": "blue"})
    with pytest.raises(ConfigError):
        parse_config({"kernel": {"name": "fractional_power", "params": {"beta": 1.5}}})


def test_config_hash_stable_and_sensitive():
    a = parse_config(MINIMAL)
    b = parse_config(json.loads(json.dumps(MINIMAL)))
    assert config_hash(a) == config_hash(b)
    c = parse_config({**MINIMAL, "system": {"type": "explicit", "eigenvalues": [-2], "obs_coeffs": [1]}})
    assert config_hash(a) != config_hash(c)
    # the output block does not change what is computed
    d = parse_config({**MINIMAL, "output": {"dir": "elsewhere"}})
    assert config_hash(a) == config_hash(d)


def test_default_tests_per_subcommand():
    cfg = default_config()
    for sub, ids in SUBCOMMAND_TESTS.items():
        assert tuple(t.id for t in cfg.tests_for(sub)) == ids


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------


def test_execute_report_shape_and_determinism():
    cfg = parse_config(MINIMAL)
    r1 = execute(cfg, "admissibility")
    r2 = execute(cfg, "admissibility")
    assert r1["exit_code"] == 0
    rep = r1["report"]
    assert rep["config_hash"] and rep["tolerances"]
    assert {r["id"] for r in rep["results"]} == {"gram", "weighted_norm"}
    assert json.dumps(rep, sort_keys=True) == json.dumps(r2["report"], sort_keys=True)
    wn = next(r for r in rep["results"] if r["id"] == "weighted_norm")
    assert wn["data"]["profile"][0]["weighted_norm"] == pytest.approx(32 ** -0.5, rel=1e-8)


def test_execute_fail_exit_code():
    res = execute(parse_config(FLUX), "carleson")
    assert res["exit_code"] == 1
    assert res["report"]["results"][0]["status"] == "fail"


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------


def test_cli_minimal_run_writes_outputs(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["admissibility", "--config", write(tmp_path, MINIMAL), "--out", str(out)])
    assert code == 0
    assert (out / "admissibility_report.json").exists()
    assert (out / "admissibility_metadata.json").exists()
    assert "gram: " in capsys.readouterr().out


def test_cli_non_carleson_exits_1(tmp_path, capsys):
    code = main(["carleson", "--config", write(tmp_path, FLUX), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "carleson: fail" in capsys.readouterr().out


def test_cli_invalid_config_exits_2(tmp_path, capsys):
    bad = {"system": {"type": "fracdiff", "alpha": 0.5, "beta": 0.9}, "tests": [{"id": "nope"}]}
    code = main(["carleson", "--config", write(tmp_path, bad), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 2
    assert "2*alpha < beta" in err and "unknown test id" in err


def test_cli_broken_json_exits_2(tmp_path, capsys):
    code = main(["carleson", "--config", write(tmp_path, "{\n  \"system\": [,\n}"), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "line 2" in capsys.readouterr().err


def test_cli_missing_config_exits_2(tmp_path):
    assert main(["carleson", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2


@pytest.mark.skipif(hasattr(os, "geteuid") and os.geteuid() == 0, reason="root ignores permissions")
def test_cli_unwritable_dir_exits_2_permissions(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        assert main(["carleson", "--config", write(tmp_path, FLUX), "--out", str(ro / "x")]) == 2
    finally:
        ro.chmod(0o700)


def test_cli_unwritable_dir_exits_2(tmp_path):
    # a regular file where the directory should be cannot be written into
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["carleson", "--config", write(tmp_path, FLUX), "--out", str(blocker / "sub")]) == 2


def test_cli_bad_grid_scale_exits_2(tmp_path):
    assert main(["carleson", "--grid-scale", "0", "--out", str(tmp_path)]) == 2


def test_cli_env_var_output_dir(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("VOLTERRA_OBS_OUT", str(target))
    assert main(["admissibility", "--config", write(tmp_path, MINIMAL)]) == 0
    assert (target / "admissibility_report.json").exists()


def test_cli_flag_beats_env(tmp_path, monkeypatch):
    monkeypatch.setenv("VOLTERRA_OBS_OUT", str(tmp_path / "env"))
    main(["admissibility", "--config", write(tmp_path, MINIMAL), "--out", str(tmp_path / "flag")])
    assert (tmp_path / "flag" / "admissibility_report.json").exists()
    assert not (tmp_path / "env").exists()


def test_cli_byte_deterministic(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    main(["admissibility", "--config", cfg, "--out", str(tmp_path / "a")])
    main(["admissibility", "--config", cfg, "--out", str(tmp_path / "b")])
    for name in ("admissibility_report.json",):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    for name in csvs:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_cli_csv_columns(tmp_path):
    cfg = {"kernel": {"name": "fractional_power", "params": {"beta": 0.5}}, "tests": [{"id": "scalar_solve"}]}
    main(["scalar-solve", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o"), "--quick"])
    csvs = list((tmp_path / "o").glob("*.csv"))
    assert csvs
    for p in csvs:
        header = p.read_text().splitlines()[0]
        assert header in ("t,re,im", "r,value")


# ---------------------------------------------------------------------------
# service
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


def test_service_health_and_listing(client):
    assert client.get("/health").json()["status"] == "ok"
    assert set(client.get("/kernels").json()) == {"constant_one", "fractional_power", "distributed_order"}
    assert client.get("/tests").json()["subcommands"]["carleson"] == ["carleson"]


def test_service_run_and_errors(client):
    r = client.post("/run/carleson", json={"config": FLUX})
    assert r.status_code == 200 and r.json()["exit_code"] == 1
    assert client.post("/run/nope", json={}).status_code == 404
    bad = client.post("/run/carleson", json={"config": {"tests": [{"id": "nope"}]}})
    assert bad.status_code == 422 and bad.json()["errors"]
    assert client.post("/run/carleson", json={"grid_scale": -1}).status_code == 422
