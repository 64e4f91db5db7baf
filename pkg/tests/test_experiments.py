import json
import math
import os

import pytest

from hypbbm.errors import ParseError, ValidationError, WrongRegime
from hypbbm.experiments import (
    PARTICLE_FIELDS,
    SUMMARY_COLUMNS,
    emit_report,
    execute,
    parse_spec,
)

SMALL_RATES = """\
kind = rates
lambda = 1
t = 2
replicas = 6
dt = 0.1
seed = 3
snapshots = 0.5, 1, 1.5, 2
"""


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_minimal_spec_defaults():
    spec = parse_spec("kind = population_law\nlambda = 1\nt = 1\nreplicas = 10000\n")
    assert spec.kind == "population_law" and spec.replicas == 10000
    assert spec.config.scheme.dt_max == 0.01
    assert spec.config.snapshot_times == (1.0,)
    assert spec.params == {"max_bin": 10}
    assert spec.alpha == 1e-3


def test_comments_and_start():
    spec = parse_spec("# header\nkind = boundary  # trailing\nlambda = 2\nt = 3\nreplicas = 4\nstart = 0.5\n")
    assert spec.config.start.w == pytest.approx(math.log(3.0))
    assert spec.config.snapshot_times == (1.5, 3.0)
    spec = parse_spec("kind = clt\nlambda = 1\nt = 3\nreplicas = 4\nstart = 1.0, -2.0\n")
    assert (spec.config.start.u, spec.config.start.w) == (1.0, -2.0)


def test_zero_lambda_rejected():
    with pytest.raises(ValidationError) as e:
        parse_spec("kind = rates\nlambda = 0\nt = 5\nreplicas = 3\n")
    assert e.value.key == "lambda"


def test_log_correction_needs_transient_regime():
    with pytest.raises(WrongRegime):
        parse_spec("kind = log_correction\nlambda = 0.25\nt = 12\nreplicas = 3\n")
    spec = parse_spec("kind = log_correction\nlambda = 0.1\nt = 18\nreplicas = 3\n")
    assert spec.config.snapshot_times[0] == pytest.approx(3.0)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(ParseError) as e:
        parse_spec("kind = rates\n\nlambda 1\n")
    assert e.value.lineno == 3
    with pytest.raises(ParseError) as e:
        parse_spec("kind = rates\nkind = clt\n")
    assert e.value.lineno == 2
    with pytest.raises(ParseError):
        parse_spec("kind =\n")


@pytest.mark.parametrize("text,key", [
    ("lambda = 1\nt = 1\nreplicas = 1\n", "kind"),
    ("kind = nope\nlambda = 1\nt = 1\nreplicas = 1\n", "kind"),
    ("kind = rates\nlambda = 1\nt = 1\nreplicas = 0\n", "replicas"),
    ("kind = rates\nlambda = 1\nt = 1\n", "replicas"),
    ("kind = rates\nlambda = 1\nt = 1\nreplicas = 2\nbins = 4\n", "bins"),
    ("kind = rates\nlambda = 1\nt = 1\nreplicas = 2\nsnapshots = 0.5, 2\n", "snapshots"),
    ("kind = rates\nlambda = abc\nt = 1\nreplicas = 2\n", "lambda"),
    ("kind = many_to_one\nlambda = 1\nt = 1\nreplicas = 20\n", "replicas"),
    ("kind = rates\nlambda = 1\nt = 1\nreplicas = 2\nstart = 1.5\n", "start"),
])
def test_validation_errors_name_the_key(text, key):
    with pytest.raises(ValidationError) as e:
        parse_spec(text)
    assert e.value.key == key


def test_spec_hash_depends_on_content():
    a = parse_spec(SMALL_RATES)
    assert a.spec_hash() == parse_spec(SMALL_RATES).spec_hash()
    assert a.with_seed(4).spec_hash() != a.spec_hash()


def test_rates_report_and_golden_headers(tmp_path):
    record = execute(parse_spec(SMALL_RATES), dump_particles=True)
    files = emit_report(record, str(tmp_path), figures=True)
    names = {os.path.basename(f) for f in files}
    assert {"summary.csv", "rates.csv", "reports.json", "plot.gp", "particles.jsonl", "rates.png"} <= names

    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[0] == "# schema: hypbbm-summary/v1"
    assert summary[1] == "replica,t,N,martingale,max_dist,min_dist,mean_dist"
    assert tuple(summary[1].split(",")) == SUMMARY_COLUMNS
    assert len(summary) == 2 + 6 * 4

    rates = (tmp_path / "rates.csv").read_text().splitlines()
    assert rates[0] == "# schema: hypbbm-rates/v1"
    assert rates[1] == "t,max,min,max_over_t,reference"
    assert all(float(line.split(",")[4]) == 0.5 + math.sqrt(2) for line in rates[2:])

    first = json.loads((tmp_path / "particles.jsonl").read_text().splitlines()[0])
    assert tuple(first) == PARTICLE_FIELDS == ("replica", "t", "address", "u", "w", "disk_re", "disk_im")

    meta = json.loads((tmp_path / "reports.json").read_text())
    assert meta["spec_hash"] == record.spec_hash and meta["seed"] == 3 and meta["kind"] == "rates"
    assert "rates.csv" in (tmp_path / "plot.gp").read_text()
    assert read(tmp_path / "rates.png")[:8] == b"\x89PNG\r\n\x1a\n"


def test_byte_identical_across_runs_and_workers(tmp_path):
    spec = parse_spec(SMALL_RATES)
    outs = []
    for i, workers in enumerate((1, 2, 1)):
        d = tmp_path / str(i)
        emit_report(execute(spec, workers=workers, chunk_size=2, dump_particles=True), str(d), figures=False)
        outs.append(d)
    for name in ("summary.csv", "rates.csv", "reports.json", "particles.jsonl"):
        assert read(outs[0] / name) == read(outs[1] / name) == read(outs[2] / name)


def test_single_replica_determinism(tmp_path):
    spec = parse_spec("kind = clt\nlambda = 1\nt = 1\nreplicas = 1\ndt = 0.1\nseed = 5\n")
    for d in ("a", "b"):
        emit_report(execute(spec), str(tmp_path / d), figures=False)
    assert read(tmp_path / "a" / "summary.csv") == read(tmp_path / "b" / "summary.csv")


def test_regime_probe_output(tmp_path):
    for lam in (0.05, 0.25):
        spec = parse_spec(f"kind = regime_probe\nlambda = {lam}\nt = 4\nreplicas = 20\ndt = 0.1\n")
        record = execute(spec)
        emit_report(record, str(tmp_path / str(lam)), figures=False)
        lines = (tmp_path / str(lam) / "regime.csv").read_text().splitlines()
        assert lines[1] == "t,occupation_fraction"
        rows = [tuple(float(x) for x in line.split(",")) for line in lines[2:]]
        assert [r[0] for r in rows] == [1.0, 2.5, 4.0]
        assert all(0.0 <= r[1] <= 1.0 for r in rows)


@pytest.mark.parametrize("kind,extra", [
    ("population_law", ""),
    ("single_bm", "excursion = true\ndt = 0.01\n"),
    ("many_to_one", "functional = path_max\nradius = 2\n"),
    ("log_correction", "lambda = 0.1\nsnapshots = 3, 4\n"),
    ("escape", ""),
    ("boundary", "bins = 4\natom_bins = 64\n"),
    ("dimension", ""),
])
def test_every_kind_runs(tmp_path, kind, extra):
    lines = {"kind": kind, "lambda": "1", "t": "4" if kind == "log_correction" else "2",
             "replicas": "100", "dt": "0.1"}
    for line in extra.splitlines():
        k, v = (s.strip() for s in line.split("="))
        lines[k] = v
    text = "".join(f"{k} = {v}\n" for k, v in lines.items())
    record = execute(parse_spec(text))
    files = emit_report(record, str(tmp_path), figures=True)
    assert any(f.endswith(f"{kind}.png") for f in files)
    assert record.reports or kind == "dimension"
