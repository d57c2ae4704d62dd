import shutil
import subprocess

import numpy as np
import pytest

from medflow import cli, evolution
from medflow.config import config_hash, parse_config_text
from medflow.errors import SolverFailureError
from medflow.io import read_csv, read_pgm, read_snapshot

BASE = "domain = torus\nN = 3000\nr = 0.08\nT = 0.01\nresolution = 32\n"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_minimal_run(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["--config", write(tmp_path, BASE), "--out", str(out)]) == 0
    h = config_hash(parse_config_text(BASE))
    for name in ("config.txt", "cloud.txt", "snap_000.txt", "snap_000.pgm", "energy.csv",
                 "MANIFEST"):
        assert (out / name).exists(), name
    assert f"config={h}" in (out / "MANIFEST").read_text()
    assert "status=complete" in (out / "MANIFEST").read_text()
    assert (out / "energy.csv").read_text().startswith(f"# config={h} seed=0\n")
    assert f"config={h}" in (out / "snap_000.pgm").read_bytes()[:80].decode("ascii", "replace")
    _, _, t, n, mode, seed = read_snapshot(out / "snap_001.txt")
    assert mode == "levelset" and seed == 0 and n >= 1
    cols, rows = read_csv(out / "energy.csv")
    assert cols == ["step", "time", "dirichlet", "tv", "l2", "min", "max"]
    assert len(rows) == 2


def test_identical_runs_identical_csv(tmp_path):
    text = BASE + "mode = mbo\ntau = 0.0005\nheat_T = 0.002\nverify = tl2,dkw\n"
    cfg = write(tmp_path, text)
    assert cli.main(["--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["--config", cfg, "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    for name in ("energy.csv", "heat.csv", "verify.csv", "snap_001.txt", "snap_001.pgm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    cols, rows = read_csv(tmp_path / "a" / "verify.csv")
    assert cols == ["test", "parameter", "measured", "predicted", "tolerance", "pass"]
    assert {r[0] for r in rows} == {"heatflow", "tl2", "dkw"}
    assert all(r[5] == "true" for r in rows)


def test_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["--config", write(tmp_path, BASE + "mode = youngangle\n")]) == 2
    assert "YoungAngle requires Box" in capsys.readouterr().err


def test_failed_verification_exit_code(tmp_path):
    out = tmp_path / "o"
    code = cli.main(["--config", write(tmp_path, BASE), "--out", str(out),
                     "--verify", "singular"])
    assert code == cli.EXIT_VERIFY_FAILED
    assert "status=verification failed" in (out / "MANIFEST").read_text()
    assert (out / "verify.csv").exists()


def test_module_error_keeps_partial_artifacts(tmp_path, monkeypatch):
    def boom(self, fld):
        raise SolverFailureError("forced", residual=1.0)

    monkeypatch.setattr(evolution.Evolver, "step", boom)
    out = tmp_path / "o"
    code = cli.main(["--config", write(tmp_path, BASE), "--out", str(out)])
    assert code == SolverFailureError.exit_code and code not in (0, 2, 3)
    manifest = (out / "MANIFEST").read_text()
    assert "status=failed" in manifest and "stage=evolve" in manifest
    assert (out / "cloud.txt").exists()


def test_env_out_and_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("MEDFLOW_OUT", str(tmp_path / "env"))
    cfg = write(tmp_path, BASE)
    assert cli.main(["--config", cfg, "--mode", "mbo", "--seed", "7"]) == 0
    text = (tmp_path / "env" / "config.txt").read_text()
    assert "mode = mbo" in text and "seed = 7" in text


def test_sweep(tmp_path):
    out = tmp_path / "s"
    assert cli.main(["--config", write(tmp_path, BASE + "verify = dkw\n"), "--out", str(out),
                     "--sweep", "3"]) == 0
    for s in range(3):
        assert (out / f"seed_{s}" / "verify.csv").exists()
    cols, rows = read_csv(out / "sweep.csv")
    assert cols == ["test", "parameter", "mean", "std", "passes", "runs"]
    assert rows[0][0] == "dkw" and rows[0][4:] == ["3", "3"]


def test_classification_demo(tmp_path):
    text = ("domain = dumbbell\nN = 40000\nr = 0.03\nkernel = annulus:0.5\nT = 0.03\n"
            "mode = mbo\ninitial = split:0.4:0.2\nverify = classify\nresolution = 128\n")
    out = tmp_path / "c"
    assert cli.main(["--config", write(tmp_path, text), "--out", str(out)]) == 0
    pos, u, *_ = read_snapshot(out / "snap_001.txt")
    assert set(np.unique(u)) == {0.0, 1.0}
    img = read_pgm(out / "snap_001.pgm")
    assert img.shape == (128, 128)


@pytest.mark.skipif(shutil.which("medflow") is None, reason="console script not installed")
def test_console_script(tmp_path):
    res = subprocess.run(["medflow", "--config", write(tmp_path, BASE), "--out",
                          str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 0
    bad = subprocess.run(["medflow", "--config", write(tmp_path, BASE + "bogus = 1\n", "b.cfg")],
                         capture_output=True, text=True)
    assert bad.returncode == 2 and "bogus" in bad.stderr
