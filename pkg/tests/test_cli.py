"""Command line interface: exit codes and file round trips."""
import json
import subprocess
import sys

import numpy as np
import pytest

from ccbody.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, load_field, main
from ccbody.errors import GridMismatch
from ccbody.supportgeo import SupportField


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    code = main(["strip", "build", "--degenerate", "--out", str(d / "deg.json"), "--field", str(d / "deg.bin"),
                 "--z-res", "64", "--n-theta", "64"])
    assert code == EXIT_OK
    return d


def test_forms_check(tmp_path, capsys):
    out = tmp_path / "forms.json"
    assert main(["forms", "check", "--n-forms", "50", "--n-points", "500", "--json", str(out)]) == EXIT_OK
    assert json.loads(out.read_text())["passed"] is True
    assert '"passed": true' in capsys.readouterr().out


def test_arnold_verify(tmp_path):
    out = tmp_path / "a.json"
    assert main(["arnold", "verify", "--lines", "1000", "--json", str(out)]) == EXIT_OK
    d = json.loads(out.read_text())
    assert d["violations"] == 0 and d["retained"] + d["skipped_near_tangent"] == 1000


@pytest.mark.parametrize("sig", ["3,1", "2", "a,b", "2,3"])
def test_arnold_bad_signature(sig):
    assert main(["arnold", "verify", "--signature", sig]) == EXIT_USAGE


def test_rolle_check():
    assert main(["rolle", "check", "--points", "200"]) == EXIT_OK


def test_unknown_command_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE


def test_missing_file_exits_2(tmp_path):
    assert main(["certify", "cc", "--field", str(tmp_path / "nope.bin")]) == EXIT_USAGE


def test_degenerate_strip_contains_line(workdir, tmp_path):
    out = tmp_path / "lf.json"
    code = main(["certify", "linefree", "--field", str(workdir / "deg.bin"), "--strip", str(workdir / "deg.json"),
                 "--budget", "4", "--json", str(out)])
    assert code == EXIT_FAIL
    d = json.loads(out.read_text())
    assert d["passed"] is False and d["margin"] < 1e-6


def test_glue_smooth_export_round_trip(workdir, tmp_path):
    glued, smoothed, mesh = tmp_path / "g.bin", tmp_path / "s.bin", tmp_path / "m.obj"
    assert main(["glue", "--field", str(workdir / "deg.bin"), "--out", str(glued)]) == EXIT_OK
    g = SupportField.from_binary(glued)
    assert g.provenance == "glued" and g.values.shape == (64 * 24 + 1, 64)
    assert main(["certify", "cc", "--field", str(glued)]) == EXIT_OK
    assert main(["smooth", "--field", str(glued), "--epsilon", "0.05", "--out", str(smoothed)]) == EXIT_OK
    assert SupportField.from_binary(smoothed).provenance == "smoothed"
    assert main(["export", "--field", str(smoothed), "--out", str(mesh), "--stride", "8"]) == EXIT_OK
    lines = mesh.read_text().splitlines()
    assert any(s.startswith("v ") for s in lines) and any(s.startswith("f ") for s in lines)


def test_load_field_with_strip_rebuilds(workdir):
    stored = SupportField.from_binary(workdir / "deg.bin")
    rebuilt = load_field(workdir / "deg.bin", workdir / "deg.json")
    assert np.array_equal(rebuilt.values, stored.values)


def test_load_field_mismatch(workdir, tmp_path):
    fld = SupportField.from_binary(workdir / "deg.bin")
    fld.values[3, 3] += 1e-3
    fld.to_binary(tmp_path / "bad.bin")
    with pytest.raises(GridMismatch):
        load_field(tmp_path / "bad.bin", workdir / "deg.json")
    assert main(["certify", "cc", "--field", str(tmp_path / "bad.bin"), "--strip",
                 str(workdir / "deg.json")]) == EXIT_USAGE


def test_run_rejects_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert main(["run", "--config", str(cfg)]) == EXIT_USAGE


def test_console_script_entry_point():
    r = subprocess.run([sys.executable, "-m", "ccbody.cli", "arnold", "verify", "--lines", "50"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["passed"] is True
