import json

import pytest

from finslerlab import cli, verify
from finslerlab.verify import IdentityCheck

NEG = """
name = "neg"
dim = 2
kind = "expression"
domain = [[-1, 1], [-1, 1]]
[expression]
F = "sqrt(y1^2+y2^2)*(x1^2 - 2)"
"""


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_tensor_g_at_point(capsys):
    code, out, _ = run(capsys, "tensor", "g", "euclidean2", "--at", "0,0;1,0")
    assert code == 0
    d = json.loads(out)
    assert d["components"] == [[1.0, 0.0], [0.0, 1.0]] and d["rank"] == 2


def test_flag_curvature_of_sphere(capsys):
    code, out, _ = run(capsys, "tensor", "flag", "sphere-projective", "--samples", "3")
    assert code == 0
    for d in json.loads(out):
        assert d["rank"] == 0 and len(d["flag"]) == 3
        assert d["components"] == pytest.approx(1, abs=1e-5)


def test_verify_filter_and_formats(capsys):
    code, out, _ = run(capsys, "verify", "randers-const-beta", "--identity", "Moeq1", "--samples", "3")
    assert code == 0
    checks = json.loads(out)
    assert [c["identity"] for c in checks] == ["Moeq1"] and checks[0]["verdict"] == "pass"
    code, out, _ = run(capsys, "verify", "euclidean2", "--identity", "S2", "--samples", "2", "--format", "csv")
    assert code == 0 and out.splitlines()[0].startswith("identity,spec,verdict")


def test_classify_markdown(capsys):
    code, out, _ = run(capsys, "classify", "euclidean2", "funk-disk", "--samples", "3", "--format", "markdown")
    assert code == 0
    assert out.count("\n") == 4 and "| funk-disk |" in out


def test_geodesic_csv(capsys):
    code, out, _ = run(capsys, "geodesic", "euclidean2", "--x0", "0,0", "--y0", "1,0", "--steps", "3", "--dt", "0.1")
    assert code == 0
    rows = out.splitlines()
    assert rows[0] == "t,x1,x2,y1,y2,F" and len(rows) == 5


def test_inspect_is_byte_deterministic(capsys):
    _, a, _ = run(capsys, "inspect", "funk-disk", "--samples", "5", "--seed", "3")
    _, b, _ = run(capsys, "inspect", "funk-disk", "--samples", "5", "--seed", "3")
    assert a == b and json.loads(a)


def test_out_dir_manifest(capsys, tmp_path):
    code, out, _ = run(capsys, "classify", "euclidean2", "--samples", "2", "--out", str(tmp_path))
    assert code == 0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    files = manifest["runs"][0]["files"]
    assert files[0]["file"] == "classify.json"
    assert (tmp_path / "classify.json").read_text() == out


def test_config_errors_exit_2(capsys, tmp_path):
    assert run(capsys, "verify", "euclidean2", "--identity", "Nope")[0] == 2
    assert run(capsys, "tensor", "g", "no-such-spec")[0] == 2
    assert run(capsys, "tensor", "sigma", "funk-disk", "--order", "4")[0] == 2
    assert run(capsys, "tensor", "g", "euclidean2", "--at", "0,0,0;1,0,0")[0] == 2
    bad = tmp_path / "bad.toml"
    bad.write_text(NEG.replace("kind = \"expression\"", "kind = \"spline\""))
    code, _, err = run(capsys, "inspect", str(bad))
    assert code == 2 and "kind" in err


def test_evaluation_errors_exit_3(capsys, tmp_path):
    neg = tmp_path / "neg.toml"
    neg.write_text(NEG)
    code, _, err = run(capsys, "classify", str(neg), "--samples", "3")
    assert code == 3 and "evaluation error" in err


def test_failed_identity_exits_1(capsys, monkeypatch):
    def failing(spec, samples, cache, thresholds, identities, ladder=False):
        return [IdentityCheck("Moeq1", spec.name, verify.ALL, True, 1e-6, "fail", 1.0)]

    monkeypatch.setattr(verify, "run_identities", failing)
    code, out, _ = run(capsys, "verify", "euclidean2", "--samples", "1")
    assert code == 1 and json.loads(out)[0]["verdict"] == "fail"
