"""Leave-one-out evaluation, error metrics, and the synthetic-data oracle.

A leave-one-out fold withholds one observation, re-runs the minimum-system
filter on the remainder (removing one point can push a component below
two systems, in which case the fold is excluded with a reason), fits the
flat model, clusters and cuts both axes of its completed matrix, fits the
hierarchical model on the resulting classes, and predicts the withheld
cell with both models so their errors stay paired per fold.  Folds are
independent: each derives its own seeds from (base_seed, fold_index) and
they may run across processes with deterministic ordered aggregation.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import clustering, hmcm, smcm
from .errors import ContractError, GenerationError
from .ingest import ObservationRecord, build_matrix, filter_min_systems
from .smcm import LatentFactorSet

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Residual:
    solute_key: str
    solvent_key: str
    y_exp: float
    y_pred: float
    delta: float


def metrics(deltas) -> tuple:
    """(mae, mse, mae_stderr, mse_stderr) over a sequence of residual deltas.

    Standard errors are sample standard deviations of |delta| and delta
    squared divided by sqrt(n), defined as 0 for a single residual.
    """
    deltas = np.asarray(list(deltas), dtype=float)
    n = deltas.shape[0]
    if n == 0:
        raise ContractError("metrics needs at least one residual")
    abs_d = np.abs(deltas)
    sq_d = deltas * deltas
    mae = float(np.mean(abs_d))
    mse = float(np.mean(sq_d))
    if n == 1:
        return mae, mse, 0.0, 0.0
    root_n = math.sqrt(n)
    mae_stderr = float(np.std(abs_d, ddof=1)) / root_n
    mse_stderr = float(np.std(sq_d, ddof=1)) / root_n
    return mae, mse, mae_stderr, mse_stderr


@dataclass
class EvalReport:
    residuals: list
    mae: float
    mse: float
    mae_stderr: float
    mse_stderr: float
    n: int

    @classmethod
    def from_residuals(cls, residuals) -> "EvalReport":
        residuals = list(residuals)
        mae, mse, mae_se, mse_se = metrics([r.delta for r in residuals])
        return cls(residuals, mae, mse, mae_se, mse_se, len(residuals))

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "mae": self.mae,
            "mse": self.mse,
            "mae_stderr": self.mae_stderr,
            "mse_stderr": self.mse_stderr,
            "residuals": [
                [r.solute_key, r.solvent_key, r.y_exp, r.y_pred, r.delta]
                for r in self.residuals
            ],
        }


@dataclass
class Histogram:
    bins: list
    outside: int
    n: int

    @property
    def inside_fraction(self) -> float:
        if self.n == 0:
            return 0.0
        return (self.n - self.outside) / self.n


def histogram(deltas, bin_width: float, bounds) -> Histogram:
    """Bin residuals into half-open intervals [lo + m*w, lo + (m+1)*w).

    A value exactly on an interior edge belongs to the bin on its right.
    Values outside [lo, hi) are only counted, not binned.
    """
    lo, hi = bounds
    if not bin_width > 0:
        raise ContractError("bin_width must be > 0")
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ContractError(f"invalid range ({lo}, {hi})")
    n_bins = max(1, math.ceil((hi - lo) / bin_width - 1e-9))
    counts = [0] * n_bins
    outside = 0
    total = 0
    for x in deltas:
        x = float(x)
        total += 1
        if not lo <= x < hi:
            outside += 1
            continue
        m = int(math.floor((x - lo) / bin_width))
        # nudge against rounding so the computed edges, not the quotient,
        # decide membership
        if m + 1 < n_bins and x >= lo + (m + 1) * bin_width:
            m += 1
        elif m > 0 and x < lo + m * bin_width:
            m -= 1
        m = min(max(m, 0), n_bins - 1)
        counts[m] += 1
    bins = [(lo + (m + 0.5) * bin_width, counts[m]) for m in range(n_bins)]
    return Histogram(bins, outside, total)


def write_histogram_csv(path, hist: Histogram):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_center,count\n")
        for center, count in hist.bins:
            fh.write(f"{center!r},{count}\n")
        fh.write(f"outside,{hist.outside}\n")


@dataclass(frozen=True)
class SyntheticSpec:
    I: int = 20
    J: int = 20
    k: int = 4
    n_solute_classes: int = 4
    n_solvent_classes: int = 4
    class_spread: float = 0.2
    noise_scale: float = 0.05
    occupancy: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.I < 2 or self.J < 2:
            raise ContractError("need I >= 2 and J >= 2")
        if self.k < 1:
            raise ContractError("k must be >= 1")
        if not 1 <= self.n_solute_classes <= self.I:
            raise ContractError("n_solute_classes must lie in [1, I]")
        if not 1 <= self.n_solvent_classes <= self.J:
            raise ContractError("n_solvent_classes must lie in [1, J]")
        if self.class_spread < 0:
            raise ContractError("class_spread must be >= 0")
        if self.noise_scale < 0:
            raise ContractError("noise_scale must be >= 0")
        if not 0 < self.occupancy <= 1:
            raise ContractError("occupancy must lie in (0, 1]")
        if not (isinstance(self.seed, int) and self.seed >= 0):
            raise ContractError("seed must be a non-negative integer")


@dataclass
class SyntheticData:
    records: list
    ground_truth: np.ndarray
    solute_labels: list
    solvent_labels: list
    factors: LatentFactorSet
    class_vectors: tuple


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Draw a clustered corpus with known factors and class structure.

    Class vectors are standard normal, component vectors normal around
    their class vector with sd class_spread, observations are true
    products plus Cauchy(0, noise_scale) noise, and cells are kept
    independently with probability occupancy.  The Bernoulli mask is
    redrawn up to 100 times until every row and column keeps at least two
    cells; persistent failure raises GenerationError.
    """
    rng = np.random.default_rng(spec.seed)
    A = rng.standard_normal((spec.n_solute_classes, spec.k))
    B = rng.standard_normal((spec.n_solvent_classes, spec.k))
    solute_labels = [i * spec.n_solute_classes // spec.I for i in range(spec.I)]
    solvent_labels = [j * spec.n_solvent_classes // spec.J for j in range(spec.J)]
    U = A[solute_labels] + spec.class_spread * rng.standard_normal((spec.I, spec.k))
    V = B[solvent_labels] + spec.class_spread * rng.standard_normal((spec.J, spec.k))
    solutes = [f"S{i:03d}" for i in range(spec.I)]
    solvents = [f"W{j:03d}" for j in range(spec.J)]
    factors = LatentFactorSet(U, V, solutes, solvents)
    ground_truth = smcm.complete_matrix(factors)
    y = ground_truth + spec.noise_scale * rng.standard_cauchy((spec.I, spec.J))

    mask = None
    for _ in range(100):
        candidate = rng.random((spec.I, spec.J)) < spec.occupancy
        if (candidate.sum(axis=1) >= 2).all() and (candidate.sum(axis=0) >= 2).all():
            mask = candidate
            break
    if mask is None:
        raise GenerationError(
            f"no mask with >= 2 kept cells per row and column in 100 draws "
            f"(occupancy {spec.occupancy})"
        )

    records = [
        ObservationRecord(solutes[i], solvents[j], float(y[i, j]), True)
        for i in range(spec.I)
        for j in range(spec.J)
        if mask[i, j]
    ]
    return SyntheticData(
        records, ground_truth, solute_labels, solvent_labels, factors, (A, B)
    )


def thin_component(records, solute_key: str, keep: int = 2, seed: int = 0) -> list:
    """Drop observations of one solute until only ``keep`` randomly chosen remain."""
    if keep < 0:
        raise ContractError("keep must be >= 0")
    owned = [idx for idx, r in enumerate(records) if r.solute_key == solute_key]
    if not owned:
        raise ContractError(f"no records for solute {solute_key!r}")
    if len(owned) <= keep:
        return list(records)
    chosen = np.random.default_rng(seed).choice(len(owned), size=keep, replace=False)
    keep_idx = {owned[c] for c in chosen}
    drop_idx = set(owned) - keep_idx
    return [r for idx, r in enumerate(records) if idx not in drop_idx]


@dataclass
class FoldRecord:
    index: int
    solute_key: str
    solvent_key: str
    y_exp: float
    pred_smcm: float = None
    pred_hmcm: float = None
    status: str = "ok"
    reason: str = None

    def to_json_obj(self) -> dict:
        return {
            "index": self.index,
            "solute": self.solute_key,
            "solvent": self.solvent_key,
            "y_exp": self.y_exp,
            "pred_smcm": self.pred_smcm,
            "pred_hmcm": self.pred_hmcm,
            "status": self.status,
            "reason": self.reason,
        }


@dataclass
class LooReport:
    smcm: EvalReport
    hmcm: EvalReport
    folds: list

    @property
    def excluded(self) -> list:
        return [f for f in self.folds if f.status == "excluded"]

    @property
    def failed(self) -> list:
        return [f for f in self.folds if f.status == "failed"]

    def to_json_obj(self) -> dict:
        return {
            "smcm": self.smcm.to_json_obj(),
            "hmcm": self.hmcm.to_json_obj(),
            "n_folds": len(self.folds),
            "n_excluded": len(self.excluded),
            "n_failed": len(self.failed),
            "folds": [f.to_json_obj() for f in self.folds],
        }


def _fold_seeds(base_seed: int, fold_index: int) -> tuple:
    state = np.random.SeedSequence([base_seed, fold_index]).generate_state(2)
    return int(state[0]), int(state[1])


def run_fold(args) -> FoldRecord:
    """One leave-one-out fold; module-level so process pools can pickle it."""
    fold_index, records, smcm_cfg, hmcm_cfg, n_rcls, n_scls, base_seed = args
    held = records[fold_index]
    record = FoldRecord(fold_index, held.solute_key, held.solvent_key, held.ln_gamma)
    try:
        training = records[:fold_index] + records[fold_index + 1:]
        kept, _ = filter_min_systems(training)
        matrix = build_matrix(kept)
        if held.solute_key not in matrix.solute_index:
            record.status = "excluded"
            record.reason = f"solute {held.solute_key!r} dropped by the minimum-system filter"
            return record
        if held.solvent_key not in matrix.solvent_index:
            record.status = "excluded"
            record.reason = f"solvent {held.solvent_key!r} dropped by the minimum-system filter"
            return record

        seed_s, seed_h = _fold_seeds(base_seed, fold_index)
        smcm_cfg = replace(smcm_cfg, fit=replace(smcm_cfg.fit, seed=seed_s))
        hmcm_cfg = replace(hmcm_cfg, fit=replace(hmcm_cfg.fit, seed=seed_h))

        flat = smcm.fit_smcm(matrix, smcm_cfg)
        completed = smcm.complete_matrix(flat.factors)
        # class counts cannot exceed the leaf counts of a reduced fold
        rows_cut = clustering.cut_tree(
            clustering.hac_complete(clustering.row_profiles(completed), matrix.solutes),
            min(n_rcls, matrix.I),
        )
        cols_cut = clustering.cut_tree(
            clustering.hac_complete(clustering.col_profiles(completed), matrix.solvents),
            min(n_scls, matrix.J),
        )
        hier = hmcm.fit_hmcm(matrix, rows_cut, cols_cut, hmcm_cfg)

        i = matrix.solute_index[held.solute_key]
        j = matrix.solvent_index[held.solvent_key]
        record.pred_smcm = smcm.predict(flat.factors, i, j)
        record.pred_hmcm = hmcm.predict_hmcm(hier.params, i, j)
    except Exception as exc:
        record.status = "failed"
        record.reason = f"{type(exc).__name__}: {exc}"
    return record


def loo_run(records, pipeline_config, subset=None, workers=None, fold_fn=None) -> LooReport:
    """Leave-one-out sweep over the given (preprocessed) records.

    ``subset`` selects fold indices; default is every record.  ``fold_fn``
    replaces the per-fold pipeline, mainly so tests can stub it out; it
    must be picklable when workers > 1.
    """
    records = list(records)
    if not records:
        raise ContractError("no records to evaluate")
    if subset is None:
        subset = range(len(records))
    subset = [int(i) for i in subset]
    for i in subset:
        if not 0 <= i < len(records):
            raise ContractError(f"fold index {i} outside [0, {len(records)})")
    if workers is None:
        workers = getattr(pipeline_config, "workers", 1)
    fold_fn = fold_fn or run_fold

    args = [
        (
            i,
            records,
            pipeline_config.smcm,
            pipeline_config.hmcm,
            pipeline_config.n_solute_classes,
            pipeline_config.n_solvent_classes,
            pipeline_config.base_seed,
        )
        for i in subset
    ]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            folds = list(pool.map(fold_fn, args))
    else:
        folds = [fold_fn(a) for a in args]

    folds.sort(key=lambda f: f.index)
    for f in folds:
        if f.status != "ok":
            log.info("fold %d %s: %s", f.index, f.status, f.reason)

    ok = [f for f in folds if f.status == "ok"]
    if not ok:
        raise ContractError("every fold was excluded or failed; nothing to aggregate")
    smcm_report = EvalReport.from_residuals([
        Residual(f.solute_key, f.solvent_key, f.y_exp, f.pred_smcm, f.y_exp - f.pred_smcm)
        for f in ok
    ])
    hmcm_report = EvalReport.from_residuals([
        Residual(f.solute_key, f.solvent_key, f.y_exp, f.pred_hmcm, f.y_exp - f.pred_hmcm)
        for f in ok
    ])
    return LooReport(smcm_report, hmcm_report, folds)
