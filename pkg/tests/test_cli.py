import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import triple
from specmap.cli import RunConfig, main
from specmap.spectral_core import (
    InvalidArgument, dumps, model_spectral_data, spectral_from_json, spectral_to_json,
    triple_to_json,
)


def _write(path, obj):
    path.write_text(dumps(obj))
    return path


@pytest.fixture
def zero_triple(tmp_path):
    return _write(tmp_path / "zero.json", triple_to_json(triple(0.0, M=256)))


def test_forward_zero_is_model(tmp_path, zero_triple):
    out = tmp_path / "sd.json"
    assert main(["forward", "-i", str(zero_triple), "-o", str(out), "--n-modes", "10"]) == 0
    S = spectral_from_json(json.loads(out.read_text()))
    np.testing.assert_allclose(S.rho, np.arange(10), atol=1e-8)
    np.testing.assert_allclose(S.alpha, model_spectral_data(10).alpha, atol=1e-8)
    assert (tmp_path / "sd.cauchy.json").exists()
    assert (tmp_path / "sd.csv").read_text().startswith("n,rho_re,rho_im,alpha_re,alpha_im\n")


def test_forward_is_byte_deterministic(tmp_path, zero_triple):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for o in (a, b):
        main(["forward", "-i", str(zero_triple), "-o", str(o), "--n-modes", "6"])
    assert a.read_bytes() == b.read_bytes()


def test_roundtrip_constant(tmp_path):
    p = _write(tmp_path / "c.json", triple_to_json(triple(0.5, M=512)))
    out = tmp_path / "rt.json"
    rc = main(["roundtrip", "-i", str(p), "-o", str(out), "--n-trunc", "20", "--grid-nodes", "128"])
    summary = json.loads(out.read_text())
    assert rc == 0 and summary["passed"] and summary["error"] < 1e-8


def test_roundtrip_reports_tolerance_failure(tmp_path):
    p = _write(tmp_path / "c.json", triple_to_json(triple(lambda x: np.cos(x), 0.5, 0, M=512)))
    rc = main(["roundtrip", "-i", str(p), "-o", str(tmp_path / "rt.json"), "--n-trunc", "10",
               "--grid-nodes", "128", "--tolerance", "1e-6"])
    assert rc == 2


def test_inverse_file_roundtrip(tmp_path):
    sd = _write(tmp_path / "sd.json", spectral_to_json(model_spectral_data(10)))
    out = tmp_path / "rep.json"
    assert main(["inverse", "-i", str(sd), "-o", str(out), "--n-trunc", "10", "--grid-nodes", "64"]) == 0
    rep = json.loads(out.read_text())
    assert np.max(np.abs(np.array(rep["q"])) ) < 1e-10
    assert (tmp_path / "rep.csv").read_text().startswith("x,q_re,q_im\n")


def test_zero_weight_is_numeric_failure(tmp_path, capsys):
    S = model_spectral_data(10)
    S = S.replace(alpha=np.r_[S.alpha[:2], 0, S.alpha[3:]])
    sd = _write(tmp_path / "sd.json", spectral_to_json(S))
    assert main(["inverse", "-i", str(sd), "--n-trunc", "10", "--grid-nodes", "64"]) == 3
    err = capsys.readouterr().err
    assert "SingularSystem" in err and "x=3.14159" in err


def test_schema_error_has_position(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"rho": [[0, 0],\n  [1, 0}\n')
    assert main(["inverse", "-i", str(bad)]) == 1
    assert f"{bad}:2:" in capsys.readouterr().err


def test_missing_key(tmp_path, capsys):
    p = _write(tmp_path / "t.json", {"grid_nodes": 4, "q": [[0, 0]] * 5, "h": [0, 0]})
    assert main(["forward", "-i", str(p)]) == 1
    assert "'H'" in capsys.readouterr().err


def test_validate(tmp_path, zero_triple):
    sd = _write(tmp_path / "sd.json", spectral_to_json(model_spectral_data(10)))
    good = _write(tmp_path / "set.json", {"kind": "V_Omega_delta", "Omega": 1.0, "delta": 0.2})
    assert main(["validate", "-i", str(sd), "--set", str(good), "-o", str(tmp_path / "v.json")]) == 0
    S = model_spectral_data(10)
    far = _write(tmp_path / "far.json", spectral_to_json(S.replace(rho=S.rho + 0.6)))
    assert main(["validate", "-i", str(far), "--set", str(good), "-o", str(tmp_path / "w.json")]) == 2
    assert json.loads((tmp_path / "w.json").read_text())["member"] is False
    pq = _write(tmp_path / "pq.json", {"kind": "P_Q", "Q": 2.0})
    assert main(["validate", "-i", str(zero_triple), "--set", str(pq), "-o", str(tmp_path / "x.json")]) == 0


def test_usage_errors(tmp_path, zero_triple):
    assert main(["bogus", "-i", "x.json"]) == 1
    assert main(["validate", "-i", str(zero_triple)]) == 1
    assert main(["forward", "-i", str(zero_triple), "--n-modes", "0"]) == 1
    with pytest.raises(InvalidArgument):
        RunConfig("forward", zero_triple, output=zero_triple)


def test_module_entry_point(tmp_path, zero_triple):
    r = subprocess.run([sys.executable, "-m", "specmap", "forward", "-i", str(zero_triple),
                        "--n-modes", "3"], capture_output=True, text=True)
    assert r.returncode == 0
    assert len(json.loads(r.stdout)["rho"]) == 3
