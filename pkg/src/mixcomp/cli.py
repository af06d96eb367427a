"""Command-line entry point.

One subcommand per pipeline stage plus a ``run`` orchestrator that chains
them and records a manifest of config hash, stage seeds, and artifact
checksums.  Progress goes to standard error; machine-readable artifacts go
to disk only.  Exit codes: 0 success, 2 usage or parse or config problems,
3 numerical failure, 4 I/O failure.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, _core, clustering, evaluate, hmcm, ingest, smcm
from . import config as config_mod
from .errors import (
    ConfigError,
    ContractError,
    CsvParseError,
    GenerationError,
    MixcompError,
    NumericalError,
)

log = logging.getLogger("mixcomp")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

ARTIFACT_NAMES = (
    "matrix",
    "smcm_factors",
    "completed",
    "linkage_rows",
    "linkage_cols",
    "classes_rows",
    "classes_cols",
    "hmcm_params",
)


def _common_flags() -> argparse.ArgumentParser:
    # SUPPRESS keeps unset flags off the namespace entirely, so a flag
    # given before the subcommand is not clobbered by the subparser default
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="key-value config file")
    common.add_argument("--seed", type=int, metavar="N", default=argparse.SUPPRESS,
                        help="override the seed")
    common.add_argument("--workers", type=int, metavar="N", default=argparse.SUPPRESS,
                        help="parallel workers where supported")
    common.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS,
                        help="debug-level progress on stderr")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="mixcomp",
        description="matrix completion pipeline for binary-mixture property data",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("ingest", parents=[common],
                       help="parse and preprocess a CSV into a sparse matrix")
    p.add_argument("--input", required=True, metavar="CSV")
    p.add_argument("--output", required=True, metavar="JSON")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("fit-smcm", parents=[common], help="fit the flat model")
    p.add_argument("--matrix", required=True, metavar="JSON")
    p.add_argument("--out-factors", required=True, metavar="JSON")
    p.add_argument("--k", type=int, default=argparse.SUPPRESS)
    p.add_argument("--sigma", type=float, default=argparse.SUPPRESS,
                   help="prior standard deviation")
    p.add_argument("--lambda", dest="lambda_like", type=float, default=argparse.SUPPRESS,
                   help="likelihood scale")
    p.add_argument("--trace", metavar="CSV", help="dump iteration,elbo evaluations")
    p.set_defaults(handler=cmd_fit_smcm)

    p = sub.add_parser("complete", parents=[common],
                       help="predict every cell from fitted factors")
    p.add_argument("--factors", required=True, metavar="JSON")
    p.add_argument("--out", required=True, metavar="JSON")
    p.set_defaults(handler=cmd_complete)

    p = sub.add_parser("cluster", parents=[common],
                       help="complete-linkage clustering of one axis")
    p.add_argument("--completed", required=True, metavar="JSON")
    p.add_argument("--axis", required=True, choices=("rows", "cols"))
    p.add_argument("--out-linkage", required=True, metavar="JSON")
    p.set_defaults(handler=cmd_cluster)

    p = sub.add_parser("cut", parents=[common], help="cut a linkage tree into classes")
    p.add_argument("--linkage", required=True, metavar="JSON")
    p.add_argument("--classes", required=True, type=int, metavar="K")
    p.add_argument("--out", required=True, metavar="JSON")
    p.set_defaults(handler=cmd_cut)

    p = sub.add_parser("order", parents=[common],
                       help="leaf display order of a linkage tree")
    p.add_argument("--linkage", required=True, metavar="JSON")
    p.add_argument("--out", required=True, metavar="JSON")
    p.set_defaults(handler=cmd_order)

    p = sub.add_parser("fit-hmcm", parents=[common], help="fit the hierarchical model")
    p.add_argument("--matrix", required=True, metavar="JSON")
    p.add_argument("--solute-classes", required=True, metavar="JSON")
    p.add_argument("--solvent-classes", required=True, metavar="JSON")
    p.add_argument("--out", required=True, metavar="JSON")
    p.add_argument("--k", type=int, default=argparse.SUPPRESS)
    p.add_argument("--sigma-hp", type=float, default=argparse.SUPPRESS,
                   help="class-vector hyperprior sd")
    p.add_argument("--eta", type=float, default=argparse.SUPPRESS,
                   help="deviation-scale prior mean")
    p.add_argument("--lambda", dest="lambda_like", type=float, default=argparse.SUPPRESS,
                   help="likelihood scale")
    p.add_argument("--trace", metavar="CSV", help="dump iteration,elbo evaluations")
    p.set_defaults(handler=cmd_fit_hmcm)

    p = sub.add_parser("predict", parents=[common],
                       help="predict values for solute,solvent pairs")
    p.add_argument("--params", required=True, metavar="JSON")
    p.add_argument("--pairs", required=True, metavar="CSV")
    p.add_argument("--cold-class", action="store_true",
                   help="allow class:<id> on one side of a pair")
    p.add_argument("--out", metavar="CSV", help="default: stdout")
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("loo", parents=[common], help="leave-one-out evaluation")
    p.add_argument("--input", required=True, metavar="CSV")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--folds", metavar="I..J", help="inclusive fold index range")
    group.add_argument("--folds-list", metavar="FILE", help="one fold index per line")
    p.add_argument("--out", metavar="JSON", help="report file, default: stdout")
    p.add_argument("--histogram", metavar="CSV",
                   help="hierarchical-model residual histogram")
    p.add_argument("--hist-width", type=float, default=0.2)
    p.add_argument("--hist-lo", type=float, default=-3.0)
    p.add_argument("--hist-hi", type=float, default=3.0)
    p.set_defaults(handler=cmd_loo)

    p = sub.add_parser("synth", parents=[common],
                       help="generate a synthetic corpus with known structure")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--truth", metavar="JSON", help="ground truth and factors")
    p.add_argument("--solutes", type=int, default=20)
    p.add_argument("--solvents", type=int, default=20)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--solute-classes", type=int, default=4)
    p.add_argument("--solvent-classes", type=int, default=4)
    p.add_argument("--spread", type=float, default=0.2)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--occupancy", type=float, default=0.5)
    p.set_defaults(handler=cmd_synth)

    p = sub.add_parser("run", parents=[common], help="full pipeline with manifest")
    p.add_argument("--input", metavar="CSV", default=argparse.SUPPRESS,
                   help="overrides the config input path")
    p.add_argument("--outdir", metavar="DIR", default=argparse.SUPPRESS,
                   help="overrides the config outdir")
    p.set_defaults(handler=cmd_run)

    return parser


def _resolved_config(ns) -> config_mod.PipelineConfig:
    path = getattr(ns, "config", None)
    cfg = config_mod.validate_config(path) if path else config_mod.default_config()
    seed = getattr(ns, "seed", None)
    if seed is not None:
        cfg = config_mod.with_base_seed(cfg, seed)
    workers = getattr(ns, "workers", None)
    if workers is not None:
        if workers < 1:
            raise ConfigError(["workers: must be >= 1"])
        cfg = replace(cfg, workers=workers)
    return cfg


def _write_trace(path, result):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,elbo\n")
        for iteration, value in zip(result.trace_iterations, result.elbo_trace):
            fh.write(f"{iteration},{value!r}\n")


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def cmd_ingest(ns) -> int:
    with open(ns.input, encoding="utf-8", newline="") as fh:
        records = ingest.parse_observations(fh)
    ok = ingest.filter_quality(records)
    matrix, removed = ingest.preprocess(records)
    log.info("parsed %d records, %d flagged ok", len(records), len(ok))
    if removed["solutes"] or removed["solvents"]:
        log.info(
            "minimum-system filter removed %d solutes %s and %d solvents %s",
            len(removed["solutes"]), removed["solutes"],
            len(removed["solvents"]), removed["solvents"],
        )
    log.info(
        "matrix: %d solutes x %d solvents, %d entries, occupancy %.4f",
        matrix.I, matrix.J, matrix.n_entries, matrix.occupancy,
    )
    matrix.save(ns.output)
    return EXIT_OK


def _fit_overrides(ns, model_cfg):
    updates = {}
    for name in ("k", "sigma", "lambda_like", "sigma_hp", "eta"):
        value = getattr(ns, name, None)
        if value is None:
            continue
        field = "sigma_prior" if name == "sigma" else name
        if hasattr(model_cfg, field):
            updates[field] = value
    seed = getattr(ns, "seed", None)
    if seed is not None:
        updates["fit"] = replace(model_cfg.fit, seed=seed)
    return replace(model_cfg, **updates) if updates else model_cfg


def cmd_fit_smcm(ns) -> int:
    cfg = _resolved_config(ns)
    model_cfg = _fit_overrides(ns, cfg.smcm)
    matrix = ingest.PropertyMatrix.load(ns.matrix)
    result = smcm.fit_smcm(matrix, model_cfg)
    _log_fit("flat model", result.result)
    result.factors.save(ns.out_factors)
    if ns.trace:
        _write_trace(ns.trace, result.result)
    return EXIT_OK


def _log_fit(name, fit_result):
    last = fit_result.elbo_trace[-1] if fit_result.elbo_trace else float("nan")
    log.info(
        "%s: %s after %d iterations, last ELBO estimate %.4f",
        name,
        "converged" if fit_result.converged else "stopped at max_iters",
        fit_result.n_iters,
        last,
    )


def cmd_complete(ns) -> int:
    factors = smcm.LatentFactorSet.load(ns.factors)
    completed = smcm.complete_matrix(factors)
    smcm.save_completed(ns.out, completed, factors.solutes, factors.solvents)
    log.info("completed %d x %d matrix", factors.I, factors.J)
    return EXIT_OK


def cmd_cluster(ns) -> int:
    dense, solutes, solvents = smcm.load_completed(ns.completed)
    if ns.axis == "rows":
        profiles, keys = clustering.row_profiles(dense), solutes
    else:
        profiles, keys = clustering.col_profiles(dense), solvents
    tree = clustering.hac_complete(profiles, keys)
    tree.save(ns.out_linkage)
    log.info("clustered %d %s into a %d-merge tree", len(keys), ns.axis, len(tree.merges))
    return EXIT_OK


def cmd_cut(ns) -> int:
    tree = clustering.LinkageTree.load(ns.linkage)
    assignment = clustering.cut_tree(tree, ns.classes)
    assignment.save(ns.out)
    return EXIT_OK


def cmd_order(ns) -> int:
    tree = clustering.LinkageTree.load(ns.linkage)
    order = clustering.sorted_order(tree)
    obj = {"order": order}
    if tree.keys is not None:
        obj["keys"] = [tree.keys[i] for i in order]
    _write_json(ns.out, obj)
    return EXIT_OK


def cmd_fit_hmcm(ns) -> int:
    cfg = _resolved_config(ns)
    model_cfg = _fit_overrides(ns, cfg.hmcm)
    matrix = ingest.PropertyMatrix.load(ns.matrix)
    solute_classes = clustering.ClassAssignment.load(ns.solute_classes)
    solvent_classes = clustering.ClassAssignment.load(ns.solvent_classes)
    _check_class_keys(solute_classes, matrix.solutes, "solute")
    _check_class_keys(solvent_classes, matrix.solvents, "solvent")
    result = hmcm.fit_hmcm(matrix, solute_classes, solvent_classes, model_cfg)
    _log_fit("hierarchical model", result.result)
    result.params.save(ns.out)
    if ns.trace:
        _write_trace(ns.trace, result.result)
    return EXIT_OK


def _check_class_keys(assignment, keys, axis):
    if assignment.keys is not None and assignment.keys != list(keys):
        raise ContractError(f"{axis} class file keys do not match the matrix keys")


def cmd_predict(ns) -> int:
    params = hmcm.HierarchicalParams.load(ns.params)
    solute_index = {k: i for i, k in enumerate(params.solutes)}
    solvent_index = {k: j for j, k in enumerate(params.solvents)}

    with open(ns.pairs, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(f.strip() for f in r)]
    if rows and [f.strip() for f in rows[0][:2]] == ["solute", "solvent"]:
        rows = rows[1:]

    lines = []
    for row in rows:
        if len(row) < 2:
            raise ContractError(f"pair row {row!r} needs solute,solvent")
        a, b = row[0].strip(), row[1].strip()
        value = _predict_pair(params, solute_index, solvent_index, a, b, ns.cold_class)
        lines.append(f"{a},{b},{value!r}")
    text = "solute,solvent,prediction\n" + "".join(line + "\n" for line in lines)
    if ns.out:
        with open(ns.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _parse_class_token(token, n, axis):
    try:
        label = int(token[len("class:"):], 10)
    except ValueError:
        raise ContractError(f"bad class token {token!r}") from None
    if not 0 <= label < n:
        raise ContractError(f"{axis} class {label} outside [0, {n})")
    return label


def _predict_pair(params, solute_index, solvent_index, a, b, allow_cold) -> float:
    cold_a = a.startswith("class:")
    cold_b = b.startswith("class:")
    if (cold_a or cold_b) and not allow_cold:
        raise ContractError("class:<id> tokens require --cold-class")
    if cold_a and cold_b:
        raise ContractError("at most one side of a pair may be a class")
    if cold_a:
        r = _parse_class_token(a, params.R, "solute")
        if b not in solvent_index:
            raise ContractError(f"unknown solvent key {b!r}")
        return hmcm.predict_cold(params, solute_class=r, j=solvent_index[b])
    if cold_b:
        s = _parse_class_token(b, params.S, "solvent")
        if a not in solute_index:
            raise ContractError(f"unknown solute key {a!r}")
        return hmcm.predict_cold(params, solvent_class=s, i=solute_index[a])
    if a not in solute_index:
        raise ContractError(f"unknown solute key {a!r}")
    if b not in solvent_index:
        raise ContractError(f"unknown solvent key {b!r}")
    return hmcm.predict_hmcm(params, solute_index[a], solvent_index[b])


def _parse_folds(ns):
    if ns.folds:
        text = ns.folds
        if ".." not in text:
            raise ContractError(f"--folds wants I..J, got {text!r}")
        lo_text, _, hi_text = text.partition("..")
        try:
            lo, hi = int(lo_text, 10), int(hi_text, 10)
        except ValueError:
            raise ContractError(f"--folds wants integer bounds, got {text!r}") from None
        if lo > hi:
            raise ContractError(f"--folds range {text!r} is empty")
        return list(range(lo, hi + 1))
    if ns.folds_list:
        with open(ns.folds_list, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
        try:
            return [int(ln, 10) for ln in lines]
        except ValueError as exc:
            raise ContractError(f"--folds-list: {exc}") from None
    return None


def cmd_loo(ns) -> int:
    cfg = _resolved_config(ns)
    with open(ns.input, encoding="utf-8", newline="") as fh:
        raw = ingest.parse_observations(fh)
    cleaned = ingest.deduplicate(ingest.filter_quality(raw))
    kept, removed = ingest.filter_min_systems(cleaned)
    if removed["solutes"] or removed["solvents"]:
        log.info(
            "minimum-system filter removed %d solutes and %d solvents before the sweep",
            len(removed["solutes"]), len(removed["solvents"]),
        )
    subset = _parse_folds(ns)
    report = evaluate.loo_run(kept, cfg, subset=subset, workers=cfg.workers)
    log.info(
        "flat model: mae %.4f mse %.4f; hierarchical: mae %.4f mse %.4f "
        "(%d folds, %d excluded, %d failed)",
        report.smcm.mae, report.smcm.mse, report.hmcm.mae, report.hmcm.mse,
        len(report.folds), len(report.excluded), len(report.failed),
    )
    if ns.out:
        _write_json(ns.out, report.to_json_obj())
    else:
        json.dump(report.to_json_obj(), sys.stdout, indent=1, sort_keys=True)
        sys.stdout.write("\n")
    if ns.histogram:
        hist = evaluate.histogram(
            [r.delta for r in report.hmcm.residuals],
            ns.hist_width,
            (ns.hist_lo, ns.hist_hi),
        )
        evaluate.write_histogram_csv(ns.histogram, hist)
    return EXIT_OK


def cmd_synth(ns) -> int:
    spec = evaluate.SyntheticSpec(
        I=ns.solutes,
        J=ns.solvents,
        k=ns.k,
        n_solute_classes=ns.solute_classes,
        n_solvent_classes=ns.solvent_classes,
        class_spread=ns.spread,
        noise_scale=ns.noise,
        occupancy=ns.occupancy,
        seed=getattr(ns, "seed", 0) or 0,
    )
    data = evaluate.generate_synthetic(spec)
    with open(ns.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["solute", "solvent", "ln_gamma", "quality"])
        for r in data.records:
            writer.writerow([r.solute_key, r.solvent_key, repr(r.ln_gamma), "ok"])
    log.info("wrote %d records (%d x %d grid)", len(data.records), spec.I, spec.J)
    if ns.truth:
        _write_json(ns.truth, {
            "ground_truth": data.ground_truth.tolist(),
            "solute_labels": data.solute_labels,
            "solvent_labels": data.solvent_labels,
            "U": data.factors.U.tolist(),
            "V": data.factors.V.tolist(),
            "A": data.class_vectors[0].tolist(),
            "B": data.class_vectors[1].tolist(),
        })
    return EXIT_OK


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _stage_seed(base_seed: int, stage: int) -> int:
    return int(np.random.SeedSequence([base_seed, stage]).generate_state(1)[0])


def cmd_run(ns) -> int:
    cfg = _resolved_config(ns)
    if getattr(ns, "input", None):
        cfg = replace(cfg, input=ns.input)
    if getattr(ns, "outdir", None):
        cfg = replace(cfg, outdir=ns.outdir)

    problems = []
    if not cfg.input:
        problems.append("input: not set (config key 'input' or --input)")
    elif not os.path.isfile(cfg.input):
        problems.append(f"input: path {cfg.input!r} does not exist")
    if not cfg.outdir:
        problems.append("outdir: not set (config key 'outdir' or --outdir)")
    if problems:
        raise ConfigError(problems)
    os.makedirs(cfg.outdir, exist_ok=True)

    seed_smcm = _stage_seed(cfg.base_seed, 1)
    seed_hmcm = _stage_seed(cfg.base_seed, 2)
    manifest = {
        "version": __version__,
        "backend": _core.BACKEND,
        "config_sha256": config_mod.config_sha256(cfg),
        "base_seed": cfg.base_seed,
        "stage_seeds": {"smcm": seed_smcm, "hmcm": seed_hmcm},
        "artifacts": {},
        "status": "ok",
    }

    def artifact(name):
        path = os.path.join(cfg.outdir, f"{name}.json")
        return path

    def record(name, path):
        manifest["artifacts"][name] = {
            "path": os.path.basename(path),
            "sha256": _sha256(path),
        }

    stage = "ingest"
    try:
        log.info("stage ingest: %s", cfg.input)
        with open(cfg.input, encoding="utf-8", newline="") as fh:
            raw = ingest.parse_observations(fh)
        matrix, removed = ingest.preprocess(raw)
        if removed["solutes"] or removed["solvents"]:
            log.info(
                "minimum-system filter removed solutes %s and solvents %s",
                removed["solutes"], removed["solvents"],
            )
        path = artifact("matrix")
        matrix.save(path)
        record("matrix", path)

        stage = "fit-smcm"
        log.info("stage fit-smcm: %d x %d, %d entries", matrix.I, matrix.J, matrix.n_entries)
        smcm_cfg = replace(cfg.smcm, fit=replace(cfg.smcm.fit, seed=seed_smcm))
        flat = smcm.fit_smcm(matrix, smcm_cfg)
        _log_fit("flat model", flat.result)
        path = artifact("smcm_factors")
        flat.factors.save(path)
        record("smcm_factors", path)

        stage = "complete"
        completed = smcm.complete_matrix(flat.factors)
        path = artifact("completed")
        smcm.save_completed(path, completed, matrix.solutes, matrix.solvents)
        record("completed", path)

        stage = "cluster-rows"
        rows_tree = clustering.hac_complete(clustering.row_profiles(completed), matrix.solutes)
        path = artifact("linkage_rows")
        rows_tree.save(path)
        record("linkage_rows", path)

        stage = "cluster-cols"
        cols_tree = clustering.hac_complete(clustering.col_profiles(completed), matrix.solvents)
        path = artifact("linkage_cols")
        cols_tree.save(path)
        record("linkage_cols", path)

        stage = "cut-rows"
        solute_classes = clustering.cut_tree(rows_tree, cfg.n_solute_classes)
        path = artifact("classes_rows")
        solute_classes.save(path)
        record("classes_rows", path)

        stage = "cut-cols"
        solvent_classes = clustering.cut_tree(cols_tree, cfg.n_solvent_classes)
        path = artifact("classes_cols")
        solvent_classes.save(path)
        record("classes_cols", path)

        stage = "fit-hmcm"
        log.info(
            "stage fit-hmcm: %d solute classes, %d solvent classes",
            solute_classes.n_classes, solvent_classes.n_classes,
        )
        hmcm_cfg = replace(cfg.hmcm, fit=replace(cfg.hmcm.fit, seed=seed_hmcm))
        hier = hmcm.fit_hmcm(matrix, solute_classes, solvent_classes, hmcm_cfg)
        _log_fit("hierarchical model", hier.result)
        path = artifact("hmcm_params")
        hier.params.save(path)
        record("hmcm_params", path)
    except Exception as exc:
        manifest["status"] = "failed"
        manifest["failed_stage"] = stage
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        _write_json(os.path.join(cfg.outdir, "manifest.json"), manifest)
        log.error("stage %s failed: %s", stage, exc)
        raise

    _write_json(os.path.join(cfg.outdir, "manifest.json"), manifest)
    log.info("pipeline complete: %d artifacts in %s", len(manifest["artifacts"]), cfg.outdir)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(ns, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return ns.handler(ns)
    except (ConfigError, CsvParseError, ContractError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except (NumericalError, GenerationError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO
    except MixcompError as exc:
        log.error("%s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
