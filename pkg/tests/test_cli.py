import json
import os
import subprocess
import sys

import jsonschema
import pytest

from essential_mfg.cli import main
from essential_mfg.io import load_schema


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def report(tmp_path, args, capsys, name="r.json"):
    path = tmp_path / name
    code, out, err = run(args + ["--out", str(path)], capsys)
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, load_schema("report"))
    return code, doc, out


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc) if not isinstance(doc, str) else doc)
    return str(p)


BAD_RATE = {
    "states": 2,
    "actions": 1,
    "beta": 0.5,
    "rates": [
        {"from": 1, "to": 2, "action": 1, "poly": [{"exp": [1, 0], "coef": 1.0}, {"exp": [0, 0], "coef": -0.5}]},
        {"from": 2, "to": 1, "action": 1, "poly": [{"exp": [0, 0], "coef": 1.0}]},
    ],
    "rewards": [],
}


def test_validate(tmp_path, capsys):
    code, doc, out = report(tmp_path, ["validate", "ref:REF-1A"], capsys)
    assert code == 0 and doc["result"]["passed"] and "PASS" in out
    code, doc, out = report(tmp_path, ["validate", write(tmp_path, "bad.json", BAD_RATE)], capsys)
    assert code == 1 and not doc["result"]["passed"]
    assert doc["result"]["worst_violation"] == pytest.approx(-0.5)
    code, _, err = run(["validate", write(tmp_path, "broken.json", '{"states": 2,')], capsys)
    assert code == 2 and "malformed JSON" in err
    code, _, err = run(["validate", write(tmp_path, "schema.json", {"states": 2})], capsys)
    assert code == 2 and "beta" in err
    assert run(["validate", str(tmp_path / "missing.json")], capsys)[0] == 2
    assert run(["validate", "ref:NOPE"], capsys)[0] == 2


def test_equilibria(tmp_path, capsys):
    code, doc, _ = report(tmp_path, ["equilibria", "ref:REF-1A"], capsys)
    assert code == 0 and doc["result"]["count"] == 1
    assert doc["result"]["equilibria"][0]["m"] == pytest.approx([2 / 3, 1 / 3])
    code, doc, _ = report(tmp_path, ["equilibria", "ref:REF-DOM"], capsys)
    assert {e["kind"] for e in doc["result"]["equilibria"]} == {"deterministic"}
    code, doc, out = report(tmp_path, ["equilibria", "ref:REF-IND", "--grid", "6", "--mixed-grid", "4"], capsys)
    assert code == 0 and doc["result"]["continuum"] and "warning" in out


def test_cap_exit_code(capsys):
    assert run(["equilibria", "ref:REF-2x2", "--cap", "2"], capsys)[0] == 3


def test_essential(tmp_path, capsys):
    code, doc, _ = report(tmp_path, ["essential", "ref:REF-1A"], capsys)
    assert code == 0
    assert doc["result"]["reports"][0]["unique_criterion"]["status"] == "certified"
    code, doc, out = report(tmp_path, ["essential", "ref:REF-DOM"], capsys)
    rep = doc["result"]["reports"][0]
    assert code == 0 and rep["characterization_criterion"]["status"] == "certified"
    assert rep["certified_radius"] > 0 and f"{rep['certified_radius']:.6g}" in out
    code, doc, _ = report(tmp_path, ["essential", "ref:REF-KNIFE"], capsys)
    assert code == 1
    statuses = {r["equilibrium"]["kind"]: r["status"] for r in doc["result"]["reports"]}
    assert statuses["mixed"] == "not-certified"


def test_essential_with_probe(tmp_path, capsys):
    code, doc, _ = report(tmp_path, ["essential", "ref:REF-1A", "--samples", "3", "--deltas", "0.1,0.01"], capsys)
    rows = doc["result"]["reports"][0]["probe"]["rows"]
    assert [r["delta"] for r in rows] == [0.1, 0.01]


def test_probe_command(tmp_path, capsys):
    code, doc, out = report(tmp_path, ["probe", "ref:REF-KNIFE", "--equilibrium", "2", "--samples", "6", "--deltas", "0.01"], capsys)
    assert code == 0 and doc["result"]["equilibrium"]["kind"] == "mixed"
    assert doc["result"]["profile"]["rows"][0]["max_displacement"] > 0.1
    assert "evidence" in out
    assert run(["probe", "ref:REF-1A", "--equilibrium", "5"], capsys)[0] == 2
    with pytest.raises(SystemExit):
        main(["probe", "ref:REF-1A", "--deltas", "0.01,0.1"])


def test_ensemble_command(tmp_path, capsys):
    fam = write(tmp_path, "fam.json", {"states": [2, 2], "actions": [1, 1], "beta": 0.5})
    args = ["ensemble", fam, "--count", "2", "--samples", "6", "--inject", "ref:REF-KNIFE"]
    code, doc, out = report(tmp_path, args, capsys)
    assert code == 0 and doc["result"]["corroborated_fraction"] == 1.0
    assert doc["result"]["injected"][0]["flagged"]
    bad = write(tmp_path, "badfam.json", {"states": [1, 2]})
    assert run(["ensemble", bad, "--count", "1"], capsys)[0] == 2
    code, doc, _ = report(tmp_path, ["ensemble", "--count", "0"], capsys)
    assert doc["result"]["games"] == []


def test_distance_command(tmp_path, capsys):
    code, doc, _ = report(tmp_path, ["distance", "ref:REF-DOM", "ref:REF-IND"], capsys)
    assert code == 0 and doc["result"]["distance"] == pytest.approx(0.5)
    assert run(["distance", "ref:REF-1A", "ref:REF-DOM"], capsys)[0] == 2


def test_mc_check_command(tmp_path, capsys):
    code, doc, _ = report(tmp_path, ["mc-check", "ref:REF-2x2", "--strategy", "1,2", "--m", "0.4,0.6", "--paths", "20000"], capsys)
    assert code == 0 and all(doc["result"]["within_tolerance"])
    assert run(["mc-check", "ref:REF-2x2", "--strategy", "1,3"], capsys)[0] == 2
    assert run(["mc-check", "ref:REF-2x2", "--strategy", "1,1", "--m", "0.5,0.6"], capsys)[0] == 2


def test_format_json_and_fixtures(tmp_path, capsys):
    code, out, _ = run(["equilibria", "ref:REF-1A", "--format", "json"], capsys)
    assert json.loads(out)["command"] == "equilibria"
    code, out, _ = run(["fixtures", "--export", str(tmp_path / "fx")], capsys)
    assert code == 0 and "REF-KNIFE" in out
    assert (tmp_path / "fx" / "REF-2x2.json").exists()
    code, doc, _ = report(tmp_path, ["equilibria", str(tmp_path / "fx" / "REF-1A.json")], capsys)
    assert doc["result"]["count"] == 1


def test_bad_flag_values(capsys):
    for args in (["equilibria", "ref:REF-1A", "--grid", "1"], ["equilibria", "ref:REF-1A", "--tol", "-1"]):
        with pytest.raises(SystemExit) as exc:
            main(args)
        assert exc.value.code == 2


def test_module_entry_point():
    env = {**os.environ, "MFG_THREADS": "2"}
    res = subprocess.run([sys.executable, "-m", "essential_mfg", "fixtures"], capture_output=True, text=True, env=env)
    assert res.returncode == 0 and "REF-1A" in res.stdout
