import json

import pytest

from stochheat.cli import main
from stochheat.config import KINDS, ConfigError, bundled_configs, load_config, parse_config
from stochheat.runner import jsonable, list_experiments

SMALL = """
[experiment]
kind = caccioppoli

[grid]
extent = 16
points = 128

[geometry]
r = 0.5
R = 1.0

[time]
T = 0.5
steps = 32
tau1 = 0.125
tau2 = 0.25

[ensemble]
paths = 1

[tolerances]
C1 = {C1}
"""


def test_every_bundled_config_parses():
    names = bundled_configs()
    assert {k.replace("-", "_") + "_check" for k in KINDS} <= set(names)
    for n in names:
        load_config(n)


def test_unknown_key_and_section():
    with pytest.raises(ConfigError, match="unknown key 'gamma_fudge'"):
        parse_config("[grid]\ngamma_fudge = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[extras]\nx = 1\n")


def test_parameter_violation_names_key():
    with pytest.raises(ConfigError, match="key 'tau1'"):
        parse_config("[experiment]\nkind = h0\n[time]\nT = 0.5\ntau1 = 0.3\ntau2 = 0.2\n")
    with pytest.raises(ConfigError, match="key 'b'"):
        parse_config("[experiment]\nkind = hum\n[coefficients]\nb = 0.1\n"
                     "[observation]\nintervals = 0.1:0.2\n")
    with pytest.raises(ConfigError, match="key 'points'"):
        parse_config("[grid]\npoints = 7\n")


def test_intervals_and_digest():
    a = parse_config("[observation]\nintervals = 0.1:0.15, 0.3:0.375\n[ensemble]\nworkers = 1\n")
    b = parse_config("[observation]\nintervals = 0.1:0.15, 0.3:0.375\n[ensemble]\nworkers = 4\n"
                     "[output]\ndir = elsewhere\n")
    assert a.observation.intervals == ((0.1, 0.15), (0.3, 0.375))
    assert a.digest() == b.digest()
    c = parse_config("[ensemble]\nseed = 9\n")
    assert c.digest() != a.digest()


def test_list_is_stable_and_complete(capsys):
    assert main(["list"]) == 0
    first = capsys.readouterr().out
    assert main(["list"]) == 0
    assert capsys.readouterr().out == first
    lines = first.strip().splitlines()
    assert len(lines) == 10
    assert [ln.split()[0] for ln in lines] == list(KINDS)
    assert main(["list", "--json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert [(r["kind"], r["statement"]) for r in rows] == list_experiments()
    for kind, statement in list_experiments():
        assert statement in first


def test_missing_config(capsys):
    assert main(["run", "/nonexistent/thing.ini"]) != 0
    assert "config not found" in capsys.readouterr().err


def test_unknown_key_exit(tmp_path, capsys):
    p = tmp_path / "bad.ini"
    p.write_text("[grid]\ngamma_fudge = 2\n")
    assert main(["run", str(p)]) != 0
    assert "unknown key" in capsys.readouterr().err


def test_energy_check_end_to_end(tmp_path):
    out = tmp_path / "energy"
    assert main(["run", "energy_check", "--output-dir", str(out), "--paths-override", "400"]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "pass" and report["experiment"] == "energy"
    row = report["reports"][0]
    for key in ("lemma", "lhs", "rhs", "ratio", "exponent", "se", "tolerance", "verdict", "inputs_digest"):
        assert key in row
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_digest"] == report["inputs_digest"]
    assert manifest["paths"] == 400 and "timestamp" in manifest


def test_exit_status_tracks_verdict(tmp_path):
    ok, bad = tmp_path / "ok.ini", tmp_path / "bad.ini"
    ok.write_text(SMALL.format(C1=10.0))
    bad.write_text(SMALL.format(C1=0.01))
    assert main(["run", str(ok), "--output-dir", str(tmp_path / "a")]) == 0
    assert main(["run", str(bad), "--output-dir", str(tmp_path / "b")]) == 1
    assert json.loads((tmp_path / "b" / "report.json").read_text())["verdict"] == "fail"


def test_seed_override_changes_digest(tmp_path):
    main(["run", "dh_identity_check", "--output-dir", str(tmp_path / "a"), "--paths-override", "20"])
    main(["run", "dh_identity_check", "--output-dir", str(tmp_path / "b"), "--paths-override", "20",
          "--seed-override", "77"])
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    assert a["inputs_digest"] != b["inputs_digest"]
    assert (tmp_path / "a" / "frequency_trace.csv").exists()


def test_jsonable_sanitizes_non_finite():
    import numpy as np
    out = jsonable({"a": float("nan"), "b": np.float64("inf"), "c": [np.int64(3), -np.inf], "d": np.bool_(True)})
    assert out == {"a": "nan", "b": "inf", "c": [3, "-inf"], "d": True}
    json.dumps(out, allow_nan=False)
