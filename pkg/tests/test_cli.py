import subprocess
import sys

from hypbbm.cli import main

SPEC = "kind = population_law\nlambda = 1\nt = 1\nreplicas = 200\n"


def write(tmp_path, text, name="exp.spec"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_run_writes_report(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", write(tmp_path, SPEC), "--out", str(out), "--seed", "9", "--no-figures"]) == 0
    assert (out / "summary.csv").exists() and (out / "population.csv").exists()
    assert not (out / "particles.jsonl").exists()
    assert "population.csv" in capsys.readouterr().out


def test_default_output_dir_and_particles(tmp_path):
    path = write(tmp_path, SPEC.replace("200", "3"))
    assert main(["run", path, "--dump-particles", "--workers", "2"]) == 0
    assert (tmp_path / "exp_out" / "particles.jsonl").exists()
    assert (tmp_path / "exp_out" / "population_law.png").exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["run", write(tmp_path, "kind = rates\nlambda = 0\nt = 1\nreplicas = 1\n")]) == 2
    assert "lambda" in capsys.readouterr().err
    assert main(["run", write(tmp_path, "kind rates\n")]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.spec")]) == 2
    capped = "kind = rates\nlambda = 1\nt = 8\nreplicas = 2\ndt = 0.5\nparticle_cap = 50\n"
    assert main(["run", write(tmp_path, capped)]) == 3
    assert "reduce the horizon" in capsys.readouterr().err
    assert main(["run", write(tmp_path, SPEC), "--workers", "0"]) == 2


def test_verify_subset(capsys):
    assert main(["verify", "--only", "15"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "15" in out


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "hypbbm.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("hypbbm ")
