import dataclasses
import math
from collections import Counter

import numpy as np
import pytest

from mixcomp import config, evaluate, ingest, vi
from mixcomp.errors import ContractError, GenerationError

from oracles import two_pass_metrics

FAST_FIT = vi.FitConfig(seed=0, max_iters=400, mc_samples=4,
                        elbo_check_every=50, elbo_eval_samples=10)


def fast_pipeline_config(base_seed=0, workers=1, n_rcls=2, n_scls=2):
    base = config.default_config()
    return config.PipelineConfig(
        base_seed=base_seed, workers=workers,
        n_solute_classes=n_rcls, n_solvent_classes=n_scls,
        smcm=dataclasses.replace(base.smcm, k=2, fit=FAST_FIT),
        hmcm=dataclasses.replace(base.hmcm, k=2, fit=FAST_FIT),
    )


def grid_records(n_rows, n_cols, value=1.0):
    return [ingest.ObservationRecord(f"S{i}", f"W{j}", value, True)
            for i in range(n_rows) for j in range(n_cols)]


# --- metrics ---------------------------------------------------------------


def test_metrics_examples():
    assert evaluate.metrics([1.0, -1.0]) == (1.0, 1.0, 0.0, 0.0)
    mae, mse, mae_se, mse_se = evaluate.metrics([0.0, 0.0, 3.0])
    assert (mae, mse) == (1.0, 3.0)
    assert mae_se == pytest.approx(1.0, abs=1e-15)
    assert mse_se == pytest.approx(3.0, abs=1e-15)
    assert evaluate.metrics([0.7]) == (0.7, 0.7 * 0.7, 0.0, 0.0)


def test_metrics_against_two_pass_oracle():
    rng = np.random.default_rng(3)
    deltas = rng.normal(0, 2, 1000)
    ours = evaluate.metrics(deltas)
    ref = two_pass_metrics(deltas)
    for a, b in zip(ours, ref):
        assert a == pytest.approx(b, rel=1e-12)


def test_metrics_permutation_invariant():
    rng = np.random.default_rng(4)
    deltas = rng.normal(0, 1, 257)
    base = evaluate.metrics(deltas)
    perm = evaluate.metrics(deltas[rng.permutation(257)])
    for a, b in zip(base, perm):
        assert a == pytest.approx(b, rel=1e-12)


def test_metrics_empty():
    with pytest.raises(ContractError):
        evaluate.metrics([])


def test_eval_report():
    residuals = [
        evaluate.Residual("s", "w", 1.0, 0.0, 1.0),
        evaluate.Residual("s", "x", 0.0, 1.0, -1.0),
    ]
    report = evaluate.EvalReport.from_residuals(residuals)
    assert report.n == 2
    assert report.mae == 1.0 and report.mse == 1.0
    obj = report.to_json_obj()
    assert obj["n"] == 2
    assert obj["residuals"][0] == ["s", "w", 1.0, 0.0, 1.0]
    with pytest.raises(ContractError):
        evaluate.EvalReport.from_residuals([])


# --- histogram ---------------------------------------------------------------


def test_histogram_basic():
    hist = evaluate.histogram([0.1, 0.1, -0.1], 0.2, (-0.2, 0.2))
    assert [c for _, c in hist.bins] == [1, 2]
    assert [center for center, _ in hist.bins] == pytest.approx([-0.1, 0.1])
    assert hist.outside == 0
    assert hist.n == 3
    assert hist.inside_fraction == 1.0


def test_histogram_edge_goes_right():
    hist = evaluate.histogram([0.0], 0.2, (-0.2, 0.2))
    assert [c for _, c in hist.bins] == [0, 1]


def test_histogram_bin_count_and_outside():
    hist = evaluate.histogram([-5.0, 0.99, 1.0], 0.25, (0.0, 1.0))
    assert len(hist.bins) == 4
    assert hist.outside == 2  # -5.0 below, 1.0 == hi is outside the half-open range
    assert hist.inside_fraction == pytest.approx(1.0 / 3.0)


def test_histogram_conserves_counts():
    rng = np.random.default_rng(12)
    deltas = rng.normal(0, 1, 500)
    hist = evaluate.histogram(deltas, 0.3, (-1.0, 1.0))
    assert sum(c for _, c in hist.bins) + hist.outside == 500 == hist.n


def test_histogram_validation():
    with pytest.raises(ContractError):
        evaluate.histogram([0.0], 0.0, (0.0, 1.0))
    with pytest.raises(ContractError):
        evaluate.histogram([0.0], 0.1, (1.0, 1.0))
    with pytest.raises(ContractError):
        evaluate.histogram([0.0], 0.1, (0.0, math.inf))
    assert evaluate.Histogram([], 0, 0).inside_fraction == 0.0


def test_write_histogram_csv(tmp_path):
    hist = evaluate.histogram([0.05, 0.15, 0.15], 0.1, (0.0, 0.2))
    path = tmp_path / "hist.csv"
    evaluate.write_histogram_csv(path, hist)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "bin_center,count"
    assert lines[1].endswith(",1") and lines[2].endswith(",2")
    assert lines[3] == "outside,0"
    center = float(lines[1].split(",")[0])
    assert center == hist.bins[0][0]  # repr round-trips exactly


# --- synthetic corpus ---------------------------------------------------------


def test_synthetic_spec_validation():
    for bad in (
        dict(I=1),
        dict(k=0),
        dict(n_solute_classes=0),
        dict(n_solute_classes=21),
        dict(class_spread=-0.1),
        dict(noise_scale=-0.1),
        dict(occupancy=0.0),
        dict(occupancy=1.5),
        dict(seed=-1),
    ):
        with pytest.raises(ContractError):
            evaluate.SyntheticSpec(**bad)


def test_generate_noiseless_full_matches_truth():
    spec = evaluate.SyntheticSpec(I=6, J=5, k=2, n_solute_classes=2,
                                  n_solvent_classes=2, noise_scale=0.0,
                                  occupancy=1.0, seed=9)
    data = evaluate.generate_synthetic(spec)
    assert len(data.records) == 30
    for r in data.records:
        i, j = int(r.solute_key[1:]), int(r.solvent_key[1:])
        assert r.ln_gamma == data.ground_truth[i, j]


def test_generate_zero_spread_pins_rows_to_class_vectors():
    spec = evaluate.SyntheticSpec(I=8, J=6, k=3, n_solute_classes=2,
                                  n_solvent_classes=3, class_spread=0.0, seed=2)
    data = evaluate.generate_synthetic(spec)
    A, B = data.class_vectors
    assert np.array_equal(data.factors.U, A[data.solute_labels])
    assert np.array_equal(data.factors.V, B[data.solvent_labels])
    assert data.solute_labels == [i * 2 // 8 for i in range(8)]


def test_generate_deterministic_and_covered():
    spec = evaluate.SyntheticSpec(I=20, J=20, occupancy=0.3, seed=5)
    a = evaluate.generate_synthetic(spec)
    b = evaluate.generate_synthetic(spec)
    assert a.records == b.records
    assert np.array_equal(a.ground_truth, b.ground_truth)
    rows = Counter(r.solute_key for r in a.records)
    cols = Counter(r.solvent_key for r in a.records)
    assert len(rows) == 20 and min(rows.values()) >= 2
    assert len(cols) == 20 and min(cols.values()) >= 2


def test_generate_gives_up_on_hopeless_occupancy():
    with pytest.raises(GenerationError):
        evaluate.generate_synthetic(
            evaluate.SyntheticSpec(I=20, J=20, occupancy=0.005, seed=0)
        )


def test_thin_component():
    records = grid_records(3, 4)
    thinned = evaluate.thin_component(records, "S1", keep=2, seed=1)
    counts = Counter(r.solute_key for r in thinned)
    assert counts["S1"] == 2
    assert counts["S0"] == counts["S2"] == 4
    assert [r for r in thinned if r.solute_key != "S1"] == \
        [r for r in records if r.solute_key != "S1"]
    assert evaluate.thin_component(records, "S1", keep=2, seed=1) == thinned
    assert evaluate.thin_component(records, "S1", keep=10) == records
    with pytest.raises(ContractError):
        evaluate.thin_component(records, "nope")
    with pytest.raises(ContractError):
        evaluate.thin_component(records, "S1", keep=-1)


# --- leave-one-out ------------------------------------------------------------


def test_fold_seeds_distinct_and_stable():
    a = evaluate._fold_seeds(0, 0)
    assert a == evaluate._fold_seeds(0, 0)
    seen = {evaluate._fold_seeds(0, i) for i in range(50)}
    seen |= {evaluate._fold_seeds(1, i) for i in range(50)}
    assert len(seen) == 100
    assert all(len(pair) == 2 for pair in seen)


def stub_fold(args):
    fold_index, records, *_ = args
    held = records[fold_index]
    return evaluate.FoldRecord(fold_index, held.solute_key, held.solvent_key,
                               held.ln_gamma, pred_smcm=0.0, pred_hmcm=held.ln_gamma)


def test_loo_run_aggregates_stub_folds():
    records = [ingest.ObservationRecord(f"S{i}", f"W{i}", float(i + 1), True)
               for i in range(6)]
    cfg = fast_pipeline_config()
    report = evaluate.loo_run(records, cfg, fold_fn=stub_fold)
    assert [f.index for f in report.folds] == list(range(6))
    assert report.smcm.mae == pytest.approx(np.mean(np.abs([1, 2, 3, 4, 5, 6])))
    assert report.hmcm.mae == 0.0
    assert report.excluded == [] and report.failed == []

    parallel = evaluate.loo_run(records, cfg, workers=2, fold_fn=stub_fold)
    assert parallel.to_json_obj() == report.to_json_obj()


def test_loo_run_subset_and_validation():
    records = grid_records(2, 3)
    cfg = fast_pipeline_config()
    report = evaluate.loo_run(records, cfg, subset=[0, 3], fold_fn=stub_fold)
    assert [f.index for f in report.folds] == [0, 3]
    with pytest.raises(ContractError):
        evaluate.loo_run(records, cfg, subset=[6], fold_fn=stub_fold)
    with pytest.raises(ContractError):
        evaluate.loo_run([], cfg, fold_fn=stub_fold)


def test_loo_run_exhaustive_on_full_grid():
    # removing any single cell of a 3x3 grid keeps every component at two
    # systems, so all nine folds produce paired residuals
    rng = np.random.default_rng(31)
    records = [ingest.ObservationRecord(f"S{i}", f"W{j}", float(rng.normal()), True)
               for i in range(3) for j in range(3)]
    report = evaluate.loo_run(records, fast_pipeline_config(base_seed=7))
    assert len(report.folds) == 9
    assert all(f.status == "ok" for f in report.folds)
    assert report.smcm.n == 9 and report.hmcm.n == 9
    obj = report.to_json_obj()
    assert obj["n_folds"] == 9 and obj["n_excluded"] == 0 and obj["n_failed"] == 0


def test_loo_run_raises_when_every_fold_cascades_away():
    # dropping any cell of a 2x2 grid cascades the minimum-system filter
    # down to an empty matrix, so no fold survives
    records = grid_records(2, 2)
    with pytest.raises(ContractError):
        evaluate.loo_run(records, fast_pipeline_config())


def test_run_fold_reports_exclusion_reason():
    records = grid_records(3, 3) + [
        ingest.ObservationRecord("S9", "W0", 1.0, True),
        ingest.ObservationRecord("S9", "W1", 1.0, True),
    ]
    cfg = fast_pipeline_config()
    args = (9, records, cfg.smcm, cfg.hmcm, 2, 2, 0)
    record = evaluate.run_fold(args)
    assert record.status == "excluded"
    assert "S9" in record.reason
    assert record.pred_smcm is None and record.pred_hmcm is None

    solvent_side = grid_records(3, 3) + [
        ingest.ObservationRecord("S0", "W9", 1.0, True),
        ingest.ObservationRecord("S1", "W9", 1.0, True),
    ]
    record = evaluate.run_fold((9, solvent_side, cfg.smcm, cfg.hmcm, 2, 2, 0))
    assert record.status == "excluded"
    assert "W9" in record.reason


def test_fold_record_json():
    fold = evaluate.FoldRecord(3, "s", "w", 1.5, pred_smcm=1.0, pred_hmcm=1.2)
    obj = fold.to_json_obj()
    assert obj == {"index": 3, "solute": "s", "solvent": "w", "y_exp": 1.5,
                   "pred_smcm": 1.0, "pred_hmcm": 1.2, "status": "ok",
                   "reason": None}
