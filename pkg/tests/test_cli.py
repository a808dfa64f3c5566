import csv
import json
import os

import pytest

from ringage.cli import EXIT_CONFIG, EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, MANIFEST_SCHEMA, main

SMALL_SWEEP = ["--ns", "8,16,32", "--trials", "2", "--horizon-multiple", "150", "--jobs", "1"]


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(path, **sections):
    data = {"ring": {"n": 6}, "sim": {"horizon": 200.0, "seed": 4}}
    data.update(sections)
    path.write_text(json.dumps(data))
    return str(path)


def files_under(root):
    return sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())


def test_simulate_is_byte_identical(workdir):
    cfg = write_config(workdir / "base.json")
    assert main(["simulate", "--config", cfg, "--seed", "7", "--out", "a/run.csv"]) == EXIT_OK
    assert main(["simulate", "--config", cfg, "--seed", "7", "--out", "b/run.csv"]) == EXIT_OK
    assert (workdir / "a/run.csv").read_bytes() == (workdir / "b/run.csv").read_bytes()
    header = (workdir / "a/run.csv").read_text().splitlines()[0]
    assert header == "node,version,transit,inter_arrival,entry_offset,hops,from_source,peak,valley"


def test_simulate_manifest_and_summary(workdir):
    cfg = write_config(workdir / "base.json")
    main(["simulate", "--config", cfg, "--out", "out/run.csv", "--trace"])
    assert files_under(workdir / "out") == ["run.csv", "run.manifest.json", "run.summary.json", "run.trace.csv"]
    manifest = json.loads((workdir / "out/run.manifest.json").read_text())
    assert manifest["schema"] == MANIFEST_SCHEMA
    assert manifest["subcommand"] == "simulate"
    assert manifest["seed"] == 4
    assert manifest["config"]["ring"]["n"] == 6
    assert {"version", "started"} <= set(manifest)
    summary = json.loads((workdir / "out/run.summary.json").read_text())
    assert summary["time_average_age"]["1"] > 0


def test_manifest_reproduces_run(workdir):
    cfg = write_config(workdir / "base.json")
    main(["simulate", "--config", cfg, "--seed", "9", "--out", "first/run.csv"])
    main(["simulate", "--config", "first/run.manifest.json", "--out", "again/run.csv"])
    assert (workdir / "first/run.csv").read_bytes() == (workdir / "again/run.csv").read_bytes()


@pytest.mark.parametrize("flag, in_config, expected", [(5, 4, 5), (None, 4, 4), (None, None, 0)])
def test_seed_precedence(workdir, flag, in_config, expected):
    sim = {"horizon": 50.0} if in_config is None else {"horizon": 50.0, "seed": in_config}
    cfg = write_config(workdir / "c.json", sim=sim)
    argv = ["simulate", "--config", cfg, "--out", "o/run.csv"] + ([] if flag is None else ["--seed", str(flag)])
    assert main(argv) == EXIT_OK
    assert json.loads((workdir / "o/run.manifest.json").read_text())["seed"] == expected


def test_flags_override_config(workdir):
    cfg = write_config(workdir / "base.json")
    main(["topo", "--config", cfg, "--n", "4", "--direction", "bi", "--edges", "gamma:2,0.5", "--out-dir", "t"])
    rows = list(csv.DictReader((workdir / "t/topology.csv").open()))
    assert len(rows) == 8
    assert {r["kind"] for r in rows} == {"gamma"}


def test_sweep_writes_csv_and_fit(workdir):
    assert main(["sweep", *SMALL_SWEEP, "--out-dir", "sw"]) == EXIT_OK
    assert files_under(workdir) == ["sw/sweep.csv", "sw/sweep.json", "sw/sweep.manifest.json"]
    report = json.loads((workdir / "sw/sweep.json").read_text())
    assert report["schema"] == "ringage.sweep/1"
    assert 0.3 < report["fit"]["slope"] < 0.9
    rows = list(csv.DictReader((workdir / "sw/sweep.csv").open()))
    assert [r["row"] for r in rows].count("replica") == 6
    assert [r["row"] for r in rows].count("summary") == 3


def test_sweep_is_reproducible(workdir):
    main(["sweep", *SMALL_SWEEP, "--seed", "3", "--out-dir", "x"])
    main(["sweep", *SMALL_SWEEP, "--seed", "3", "--out-dir", "y"])
    assert (workdir / "x/sweep.csv").read_bytes() == (workdir / "y/sweep.csv").read_bytes()


def test_regimes_and_preempt(workdir):
    assert main(["regimes", *SMALL_SWEEP, "--rules", "ceil(n^0.5),2*ceil(n^0.5)", "--out-dir", "r"]) == EXIT_OK
    rows = list(csv.DictReader((workdir / "r/regimes.csv").open()))
    assert len(rows) == 6
    assert main(["preempt", *SMALL_SWEEP, "--out-dir", "p"]) == EXIT_OK
    report = json.loads((workdir / "p/preempt.json").read_text())
    assert len(report["rows"]) == 3 and report["hops_fit"]["slope"] > 0


def test_sandwich_report(workdir, capsys):
    assert main(["lemma1", "--dist", "exponential:1", "--t", "const:10", "--trials", "100000", "--out-dir", "l"]) == 0
    report = json.loads((workdir / "l/lemma1.json").read_text())
    assert (report["lower"], report["upper"]) == (9.0, 12.0)
    assert abs(report["mean_count"] - 10.0) < 0.05
    assert report["inside"]
    assert "inside" in capsys.readouterr().out


def test_no_writes_outside_out_dir(workdir):
    main(["lemma1", "--trials", "1000", "--out-dir", "only"])
    main(["topo", "--out-dir", "only"])
    assert {p.split("/")[0] for p in files_under(workdir)} == {"only"}


@pytest.mark.parametrize(
    "argv, code, message",
    [
        (["bogus"], EXIT_USAGE, "invalid choice"),
        (["simulate", "--n", "0"], EXIT_CONFIG, "configuration error"),
        (["simulate", "--edges", "gamma:-1,2"], EXIT_CONFIG, "configuration error"),
        (["simulate", "--config", "missing.json"], EXIT_CONFIG, "not found"),
        (["lemma1", "--t", "poisson:3"], EXIT_CONFIG, "T sampler"),
        (["preempt", "--direction", "uni", *SMALL_SWEEP], EXIT_CONFIG, "bi-directional"),
        (["regimes", *SMALL_SWEEP, "--rules", "ceil(n^1)"], EXIT_DOMAIN, "domain error"),
    ],
)
def test_error_exit_codes(workdir, capsys, argv, code, message):
    assert main(argv) == code
    err = capsys.readouterr().err.strip().splitlines()
    assert message in err[-1]


def test_malformed_config(workdir, capsys):
    (workdir / "bad.json").write_text("{ring: 3")
    assert main(["simulate", "--config", "bad.json"]) == EXIT_CONFIG
    assert "malformed JSON" in capsys.readouterr().err
    (workdir / "extra.json").write_text(json.dumps({"ring": {"n": 3}, "gossip": {}}))
    assert main(["simulate", "--config", "extra.json"]) == EXIT_CONFIG


def test_jobs_env_override(workdir, monkeypatch):
    monkeypatch.setenv("RINGAGE_JOBS", "0")
    assert main(["sweep", "--ns", "8,16,32", "--trials", "1", "--out-dir", "j"]) == EXIT_CONFIG
    assert not os.path.exists(workdir / "j/sweep.csv")
