import json

import numpy as np
import pytest

from mixcomp import cli, clustering, config, hmcm, ingest, smcm

SPEED_CONFIG = """\
k = 2
max_iters = 300
mc_samples = 4
elbo_check_every = 50
elbo_eval_samples = 10
solute_classes = 2
solvent_classes = 2
"""


@pytest.fixture(scope="module")
def chain(tmp_path_factory):
    """One pass of the whole pipeline via CLI calls, shared by the tests."""
    root = tmp_path_factory.mktemp("cli-chain")
    paths = {
        "config": root / "speed.cfg",
        "corpus": root / "corpus.csv",
        "truth": root / "truth.json",
        "matrix": root / "matrix.json",
        "factors": root / "factors.json",
        "trace": root / "trace.csv",
        "completed": root / "completed.json",
        "linkage_rows": root / "linkage_rows.json",
        "linkage_cols": root / "linkage_cols.json",
        "classes_rows": root / "classes_rows.json",
        "classes_cols": root / "classes_cols.json",
        "order": root / "order.json",
        "params": root / "params.json",
    }
    paths["config"].write_text(SPEED_CONFIG, encoding="utf-8")

    def run(*argv):
        rc = cli.main([str(a) for a in argv])
        assert rc == cli.EXIT_OK, f"command {argv} exited {rc}"

    run("synth", "--out", paths["corpus"], "--truth", paths["truth"],
        "--solutes", 6, "--solvents", 6, "--k", 2,
        "--solute-classes", 2, "--solvent-classes", 2,
        "--occupancy", 0.7, "--seed", 3)
    run("ingest", "--input", paths["corpus"], "--output", paths["matrix"])
    run("fit-smcm", "--config", paths["config"], "--matrix", paths["matrix"],
        "--out-factors", paths["factors"], "--trace", paths["trace"])
    run("complete", "--factors", paths["factors"], "--out", paths["completed"])
    run("cluster", "--completed", paths["completed"], "--axis", "rows",
        "--out-linkage", paths["linkage_rows"])
    run("cluster", "--completed", paths["completed"], "--axis", "cols",
        "--out-linkage", paths["linkage_cols"])
    run("cut", "--linkage", paths["linkage_rows"], "--classes", 2,
        "--out", paths["classes_rows"])
    run("cut", "--linkage", paths["linkage_cols"], "--classes", 2,
        "--out", paths["classes_cols"])
    run("order", "--linkage", paths["linkage_rows"], "--out", paths["order"])
    run("fit-hmcm", "--config", paths["config"], "--matrix", paths["matrix"],
        "--solute-classes", paths["classes_rows"],
        "--solvent-classes", paths["classes_cols"], "--out", paths["params"])
    return paths


def test_chain_artifacts_are_loadable(chain):
    matrix = ingest.PropertyMatrix.load(chain["matrix"])
    assert matrix.I == 6 and matrix.J == 6
    factors = smcm.LatentFactorSet.load(chain["factors"])
    assert factors.k == 2 and factors.solutes == matrix.solutes
    completed, solutes, _ = smcm.load_completed(chain["completed"])
    assert completed.shape == (6, 6) and solutes == matrix.solutes
    assert np.array_equal(completed, smcm.complete_matrix(factors))
    tree = clustering.LinkageTree.load(chain["linkage_rows"])
    assert tree.n_leaves == 6 and tree.keys == matrix.solutes
    cut = clustering.ClassAssignment.load(chain["classes_rows"])
    assert cut.n_classes == 2 and len(cut) == 6
    params = hmcm.HierarchicalParams.load(chain["params"])
    assert params.R == params.S == 2
    assert params.solute_labels == cut.labels


def test_trace_file_format(chain):
    lines = chain["trace"].read_text(encoding="utf-8").splitlines()
    assert lines[0] == "iteration,elbo"
    first = lines[1].split(",")
    assert int(first[0]) == 50
    float(first[1])  # parses


def test_order_output(chain):
    obj = json.loads(chain["order"].read_text(encoding="utf-8"))
    tree = clustering.LinkageTree.load(chain["linkage_rows"])
    assert obj["order"] == clustering.sorted_order(tree)
    assert sorted(obj["order"]) == list(range(6))
    assert obj["keys"] == [tree.keys[i] for i in obj["order"]]


def test_synth_is_deterministic_and_parseable(chain, tmp_path):
    again = tmp_path / "again.csv"
    rc = cli.main(["synth", "--out", str(again), "--solutes", "6",
                   "--solvents", "6", "--k", "2", "--solute-classes", "2",
                   "--solvent-classes", "2", "--occupancy", "0.7", "--seed", "3"])
    assert rc == 0
    assert again.read_bytes() == chain["corpus"].read_bytes()
    records = ingest.parse_observations(again.read_text(encoding="utf-8"))
    assert all(r.quality_ok for r in records)
    truth = json.loads(chain["truth"].read_text(encoding="utf-8"))
    assert np.asarray(truth["ground_truth"]).shape == (6, 6)
    assert len(truth["solute_labels"]) == 6
    assert np.asarray(truth["A"]).shape == (2, 2)


def test_ingest_error_codes(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("solute,solvent,ln_gamma,quality\nS1,W1,notanumber,ok\n",
                   encoding="utf-8")
    assert cli.main(["ingest", "--input", str(bad),
                     "--output", str(tmp_path / "m.json")]) == cli.EXIT_USAGE
    assert cli.main(["ingest", "--input", str(tmp_path / "missing.csv"),
                     "--output", str(tmp_path / "m.json")]) == cli.EXIT_IO


def test_predict_to_file_and_stdout(chain, tmp_path, capsys):
    params = hmcm.HierarchicalParams.load(chain["params"])
    pairs = tmp_path / "pairs.csv"
    pairs.write_text(
        "solute,solvent\n"
        f"{params.solutes[0]},{params.solvents[1]}\n"
        f"{params.solutes[3]},{params.solvents[0]}\n",
        encoding="utf-8",
    )
    out = tmp_path / "pred.csv"
    assert cli.main(["predict", "--params", str(chain["params"]),
                     "--pairs", str(pairs), "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "solute,solvent,prediction"
    value = float(lines[1].split(",")[2])
    assert value == hmcm.predict_hmcm(params, 0, 1)  # repr round-trips

    capsys.readouterr()
    assert cli.main(["predict", "--params", str(chain["params"]),
                     "--pairs", str(pairs)]) == 0
    stdout = capsys.readouterr().out
    assert stdout.splitlines()[1] == lines[1]


def test_predict_cold_class_tokens(chain, tmp_path, capsys):
    params = hmcm.HierarchicalParams.load(chain["params"])
    pairs = tmp_path / "cold.csv"
    pairs.write_text(f"class:1,{params.solvents[2]}\n", encoding="utf-8")
    # class tokens are rejected without the explicit flag
    assert cli.main(["predict", "--params", str(chain["params"]),
                     "--pairs", str(pairs)]) == cli.EXIT_USAGE
    capsys.readouterr()
    assert cli.main(["predict", "--params", str(chain["params"]),
                     "--pairs", str(pairs), "--cold-class"]) == 0
    line = capsys.readouterr().out.splitlines()[1]
    assert float(line.split(",")[2]) == hmcm.predict_cold(params, solute_class=1, j=2)
    bad = tmp_path / "bad.csv"
    bad.write_text("class:0,class:0\n", encoding="utf-8")
    assert cli.main(["predict", "--params", str(chain["params"]),
                     "--pairs", str(bad), "--cold-class"]) == cli.EXIT_USAGE


def test_loo_cli(chain, tmp_path):
    report_path = tmp_path / "report.json"
    hist_path = tmp_path / "hist.csv"
    rc = cli.main(["loo", "--config", str(chain["config"]),
                   "--input", str(chain["corpus"]), "--folds", "0..3",
                   "--out", str(report_path), "--histogram", str(hist_path)])
    assert rc == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert report["n_folds"] == 4
    assert [f["index"] for f in report["folds"]] == [0, 1, 2, 3]
    assert hist_path.read_text(encoding="utf-8").startswith("bin_center,count\n")


def test_loo_folds_list_and_bad_range(chain, tmp_path):
    folds_file = tmp_path / "folds.txt"
    folds_file.write_text("2\n5\n", encoding="utf-8")
    report_path = tmp_path / "r.json"
    assert cli.main(["loo", "--config", str(chain["config"]),
                     "--input", str(chain["corpus"]),
                     "--folds-list", str(folds_file),
                     "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text(encoding="utf-8"))
    assert [f["index"] for f in report["folds"]] == [2, 5]
    assert cli.main(["loo", "--config", str(chain["config"]),
                     "--input", str(chain["corpus"]), "--folds", "5..2",
                     "--out", str(report_path)]) == cli.EXIT_USAGE


def test_run_writes_manifest_and_checksums(chain, tmp_path):
    outdir = tmp_path / "out"
    rc = cli.main(["run", "--config", str(chain["config"]),
                   "--input", str(chain["corpus"]), "--outdir", str(outdir)])
    assert rc == 0
    manifest = json.loads((outdir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "ok"
    assert set(manifest["artifacts"]) == set(cli.ARTIFACT_NAMES)
    for name, entry in manifest["artifacts"].items():
        path = outdir / entry["path"]
        assert path.exists()
        assert cli._sha256(path) == entry["sha256"]
    assert manifest["stage_seeds"] == {"smcm": cli._stage_seed(0, 1),
                                       "hmcm": cli._stage_seed(0, 2)}
    cfg = config.validate_config(chain["config"])
    assert manifest["config_sha256"] == config.config_sha256(cfg)
    assert manifest["backend"] in ("c", "python")

    # identical invocation reproduces identical artifact bytes
    second = tmp_path / "out2"
    assert cli.main(["run", "--config", str(chain["config"]),
                     "--input", str(chain["corpus"]),
                     "--outdir", str(second)]) == 0
    other = json.loads((second / "manifest.json").read_text(encoding="utf-8"))
    assert {n: e["sha256"] for n, e in other["artifacts"].items()} == \
        {n: e["sha256"] for n, e in manifest["artifacts"].items()}


def test_run_failure_records_stage(chain, tmp_path):
    assert cli.main(["run", "--config", str(chain["config"]),
                     "--input", str(tmp_path / "nope.csv"),
                     "--outdir", str(tmp_path / "o")]) == cli.EXIT_USAGE

    overcut = tmp_path / "overcut.cfg"
    overcut.write_text(SPEED_CONFIG.replace("solute_classes = 2",
                                            "solute_classes = 50"),
                       encoding="utf-8")
    outdir = tmp_path / "failed"
    assert cli.main(["run", "--config", str(overcut),
                     "--input", str(chain["corpus"]),
                     "--outdir", str(outdir)]) == cli.EXIT_USAGE
    manifest = json.loads((outdir / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["status"] == "failed"
    assert manifest["failed_stage"] == "cut-rows"
    assert "50" in manifest["error"]
    assert "matrix" in manifest["artifacts"]  # stages before the failure persist


def test_global_flags_work_in_both_positions(chain, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["--seed", "9", "fit-smcm", "--config", str(chain["config"]),
                     "--matrix", str(chain["matrix"]), "--out-factors", str(a)]) == 0
    assert cli.main(["fit-smcm", "--seed", "9", "--config", str(chain["config"]),
                     "--matrix", str(chain["matrix"]), "--out-factors", str(b)]) == 0
    fa = smcm.LatentFactorSet.load(a)
    fb = smcm.LatentFactorSet.load(b)
    assert np.array_equal(fa.U, fb.U) and np.array_equal(fa.V, fb.V)


def test_version_and_usage_errors(capsys):
    assert cli.main(["--version"]) == 0
    capsys.readouterr()
    assert cli.main(["not-a-command"]) == cli.EXIT_USAGE
    assert cli.main(["cut", "--linkage", "x.json"]) == cli.EXIT_USAGE  # missing flags
    assert cli.main([]) == cli.EXIT_USAGE
    capsys.readouterr()
