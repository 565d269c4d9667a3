import hashlib
import json
import math
import subprocess
import sys

import pytest

from volpres.cli import main, parse_matrix


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_project_examples(capsys):
    code, out, _ = run(["project", "--target", "SL", "--matrix", "4,0,0,0.0625"], capsys)
    assert code == 0 and json.loads(out)["distance"] <= 0.1875
    code, out, _ = run(["project", "--target", "sl", "--matrix", "I2"], capsys)
    assert json.loads(out)["distance"] == pytest.approx(math.sqrt(2))
    code, out, _ = run(["project", "--target", "SL", "--matrix", "I3"], capsys)
    assert json.loads(out)["distance"] == 0


def test_project_csv(capsys):
    code, out, _ = run(["project", "--matrix", "I2", "--format", "csv"], capsys)
    assert out.splitlines()[0] == "target,n,distance,multiplier,kkt_residual"


def test_parse_errors(capsys):
    code, _, err = run(["project", "--matrix", "1,2,x,4"], capsys)
    assert code == 2 and "entry 2" in err and "character 4" in err
    code, _, err = run(["project", "--matrix", "1,2,3"], capsys)
    assert code == 2
    assert parse_matrix("1;0;0;1").tolist() == [[1, 0], [0, 1]]


def test_domain_error_exit(capsys):
    code, _, err = run(["project", "--matrix=-1,0,0,1"], capsys)
    assert code == 3 and "det A" in err


def test_usage_exit(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    code, _, _ = run(["verify", "--bound", "nope"], capsys)
    assert code == 2


def test_verify(capsys):
    code, out, _ = run(["verify", "--bound", "sl-sandwich", "--samples", "200", "--theta", "0.1"], capsys)
    d = json.loads(out)
    assert code == 0 and d["summary"]["violations"] == 0 and len(d["reports"]) == 200
    code, out, _ = run(["verify", "--bound", "sp-det", "--symplectic", "--samples", "20", "--format", "csv"], capsys)
    rows = out.splitlines()[1:]
    assert all(float(r.split(",")[1]) < 1e-12 for r in rows)
    code, out, _ = run(["verify", "--bound", "weighted-det", "--samples", "200", "--summary-only"], capsys)
    assert json.loads(out)["summary"]["max_ratio"] < 1


def test_decompose(capsys):
    code, out, _ = run(["decompose", "--mode", "divfree", "--map", "hamiltonian:sinsin", "--n", "32"], capsys)
    assert code == 0 and json.loads(out)["residual"] <= 1e-10


def test_rearrange_small(capsys):
    code, out, _ = run(["rearrange", "--map", "compress:0.3", "--p", "1", "--N", "256"], capsys)
    d = json.loads(out)
    assert code == 0 and d["satisfied"] is True
    code, _, _ = run(["rearrange", "--N", "250"], capsys)
    assert code == 2
    code, _, _ = run(["rearrange", "--map", "fold"], capsys)
    assert code == 3


def test_sweep_small(capsys):
    code, out, _ = run(["sweep", "--boundary", "identity", "--kappas", "10,100,1000", "--n", "8"], capsys)
    assert code == 0 and "degenerate-zero sweep" in json.loads(out)["tags"]
    code, _, _ = run(["sweep", "--kappas", "10,20"], capsys)
    assert code == 2


def test_gallery(capsys):
    code, out, _ = run(["gallery", "--n", "32"], capsys)
    d = json.loads(out)
    assert d["fold"]["many_to_one"] and d["cavity"]["has_hole"]


def test_out_file_lf_utf8(tmp_path, capsys):
    p = tmp_path / "r.json"
    assert main(["project", "--matrix", "I2", "--out", str(p)]) == 0
    raw = p.read_bytes()
    assert raw.endswith(b"\n") and b"\r" not in raw
    raw.decode("utf-8")


@pytest.mark.parametrize("argv", [
    ["verify", "--bound", "sl-sandwich", "--samples", "300"],
    ["rearrange", "--N", "256"],
])
def test_determinism_threads(argv, capsys):
    hashes = set()
    for threads in ("1", "4", "1"):
        code, out, _ = run(argv + ["--seed", "5", "--threads", threads], capsys)
        hashes.add(hashlib.sha256(out.encode()).hexdigest())
    assert len(hashes) == 1


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "volpres", "project", "--matrix", "I2", "--target", "sl"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and '"distance"' in r.stdout
