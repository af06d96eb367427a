"""Observation parsing, preprocessing, and sparse matrix construction.

The input wire format is a UTF-8 CSV with header ``solute,solvent,ln_gamma,quality``
and quality values ``ok`` or ``poor``.  Records flow through four steps:
drop poor-quality rows, average duplicate (solute, solvent) pairs, remove
components observed in fewer than two systems (iterated to a fixpoint,
since one removal can push another component below the threshold), and
index the survivors into a sparse matrix by first occurrence.
"""

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, CsvParseError

HEADER = ("solute", "solvent", "ln_gamma", "quality")
_QUALITY = {"ok": True, "poor": False}


@dataclass(frozen=True)
class ObservationRecord:
    solute_key: str
    solvent_key: str
    ln_gamma: float
    quality_ok: bool = True

    def __post_init__(self):
        if not self.solute_key or not self.solvent_key:
            raise ContractError("component keys must be non-empty")
        if not math.isfinite(self.ln_gamma):
            raise ContractError(f"ln_gamma must be finite, got {self.ln_gamma!r}")


def parse_observations(source) -> list:
    """Parse a CSV character stream into observation records.

    ``source`` is an open text file or a string.  An empty stream yields an
    empty list; any malformed row raises CsvParseError with its 1-based
    line number.
    """
    if isinstance(source, str):
        source = io.StringIO(source)
    reader = csv.reader(source)
    records = []
    saw_header = False
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        fields = [f.strip() for f in row]
        if not saw_header:
            if tuple(fields) != HEADER:
                raise CsvParseError(line, f"expected header {','.join(HEADER)!r}")
            saw_header = True
            continue
        if len(fields) != 4:
            raise CsvParseError(line, f"expected 4 columns, got {len(fields)}")
        solute, solvent, raw_value, quality = fields
        if not solute:
            raise CsvParseError(line, "empty solute key")
        if not solvent:
            raise CsvParseError(line, "empty solvent key")
        try:
            value = float(raw_value)
        except ValueError:
            raise CsvParseError(line, f"non-numeric ln_gamma {raw_value!r}") from None
        if not math.isfinite(value):
            raise CsvParseError(line, f"non-finite ln_gamma {raw_value!r}")
        if quality not in _QUALITY:
            raise CsvParseError(line, f"unknown quality flag {quality!r}")
        records.append(ObservationRecord(solute, solvent, value, _QUALITY[quality]))
    return records


def filter_quality(records) -> list:
    """Keep only records flagged ok."""
    return [r for r in records if r.quality_ok]


def deduplicate(records) -> list:
    """Collapse repeated (solute, solvent) pairs to their arithmetic mean.

    Output order follows the first occurrence of each pair.  Callers drop
    poor-quality records first so the mean covers accepted points only.
    """
    sums = {}
    counts = {}
    order = []
    for r in records:
        pair = (r.solute_key, r.solvent_key)
        if pair not in sums:
            sums[pair] = 0.0
            counts[pair] = 0
            order.append(pair)
        sums[pair] += r.ln_gamma
        counts[pair] += 1
    return [
        ObservationRecord(s, w, sums[(s, w)] / counts[(s, w)], True)
        for s, w in order
    ]


def filter_min_systems(records) -> tuple:
    """Drop components observed in fewer than two systems, to a fixpoint.

    Each pass removes every record whose solute or solvent currently has
    fewer than two records, all at once, then re-counts.  Returns the kept
    records (input order preserved) and the removed component keys as
    {"solutes": [...], "solvents": [...]} in first-occurrence order.
    """
    kept = list(records)
    while True:
        solute_counts = {}
        solvent_counts = {}
        for r in kept:
            solute_counts[r.solute_key] = solute_counts.get(r.solute_key, 0) + 1
            solvent_counts[r.solvent_key] = solvent_counts.get(r.solvent_key, 0) + 1
        survivors = [
            r for r in kept
            if solute_counts[r.solute_key] >= 2 and solvent_counts[r.solvent_key] >= 2
        ]
        if len(survivors) == len(kept):
            break
        kept = survivors

    kept_solutes = {r.solute_key for r in kept}
    kept_solvents = {r.solvent_key for r in kept}
    removed = {"solutes": [], "solvents": []}
    seen = set()
    for r in records:
        if r.solute_key not in kept_solutes and ("u", r.solute_key) not in seen:
            seen.add(("u", r.solute_key))
            removed["solutes"].append(r.solute_key)
        if r.solvent_key not in kept_solvents and ("v", r.solvent_key) not in seen:
            seen.add(("v", r.solvent_key))
            removed["solvents"].append(r.solvent_key)
    return kept, removed


class PropertyMatrix:
    """Sparse I x J matrix of observed values with stable key-to-index maps.

    Entries are stored row-major sorted so that identical contents give
    identical array layouts regardless of construction order; downstream
    reductions then sum in a reproducible order.
    """

    def __init__(self, solutes, solvents, entries):
        solutes = list(solutes)
        solvents = list(solvents)
        if len(set(solutes)) != len(solutes):
            raise ContractError("duplicate solute keys")
        if len(set(solvents)) != len(solvents):
            raise ContractError("duplicate solvent keys")
        if any(not k for k in solutes) or any(not k for k in solvents):
            raise ContractError("component keys must be non-empty")
        self.solutes = solutes
        self.solvents = solvents
        self.solute_index = {k: i for i, k in enumerate(solutes)}
        self.solvent_index = {k: j for j, k in enumerate(solvents)}

        triples = sorted((int(r), int(c), float(v)) for r, c, v in entries)
        seen_cells = set()
        for r, c, v in triples:
            if not 0 <= r < len(solutes):
                raise ContractError(f"row {r} outside [0, {len(solutes)})")
            if not 0 <= c < len(solvents):
                raise ContractError(f"column {c} outside [0, {len(solvents)})")
            if (r, c) in seen_cells:
                raise ContractError(f"duplicate entry for cell ({r}, {c})")
            seen_cells.add((r, c))
            if not math.isfinite(v):
                raise ContractError(f"non-finite value at cell ({r}, {c})")
        self.rows = np.array([t[0] for t in triples], dtype=np.intp)
        self.cols = np.array([t[1] for t in triples], dtype=np.intp)
        self.values = np.array([t[2] for t in triples], dtype=float)

    @property
    def I(self) -> int:
        return len(self.solutes)

    @property
    def J(self) -> int:
        return len(self.solvents)

    @property
    def n_entries(self) -> int:
        return self.values.shape[0]

    @property
    def occupancy(self) -> float:
        if self.I == 0 or self.J == 0:
            return 0.0
        return self.n_entries / (self.I * self.J)

    def row_counts(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.I)

    def col_counts(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.J)

    def to_dense(self) -> np.ndarray:
        """Dense copy with NaN in unobserved cells."""
        dense = np.full((self.I, self.J), np.nan)
        dense[self.rows, self.cols] = self.values
        return dense

    def observed_mask(self) -> np.ndarray:
        mask = np.zeros((self.I, self.J), dtype=bool)
        mask[self.rows, self.cols] = True
        return mask

    def to_json_obj(self) -> dict:
        return {
            "solutes": list(self.solutes),
            "solvents": list(self.solvents),
            "entries": [
                [int(r), int(c), float(v)]
                for r, c, v in zip(self.rows, self.cols, self.values)
            ],
        }

    @classmethod
    def from_json_obj(cls, obj) -> "PropertyMatrix":
        try:
            return cls(obj["solutes"], obj["solvents"], obj["entries"])
        except (KeyError, TypeError) as exc:
            raise ContractError(f"malformed matrix object: {exc}") from None

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_obj(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PropertyMatrix":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json_obj(json.load(fh))


def build_matrix(records) -> PropertyMatrix:
    """Index filtered, deduplicated records into a PropertyMatrix.

    Rows and columns are assigned in first-occurrence order.  A repeated
    (solute, solvent) pair means the caller skipped deduplication.
    """
    solutes = []
    solvents = []
    solute_index = {}
    solvent_index = {}
    entries = []
    seen = set()
    for r in records:
        if r.solute_key not in solute_index:
            solute_index[r.solute_key] = len(solutes)
            solutes.append(r.solute_key)
        if r.solvent_key not in solvent_index:
            solvent_index[r.solvent_key] = len(solvents)
            solvents.append(r.solvent_key)
        cell = (solute_index[r.solute_key], solvent_index[r.solvent_key])
        if cell in seen:
            raise ContractError(
                f"duplicate pair ({r.solute_key!r}, {r.solvent_key!r}); deduplicate first"
            )
        seen.add(cell)
        entries.append((cell[0], cell[1], r.ln_gamma))
    return PropertyMatrix(solutes, solvents, entries)


def preprocess(records) -> tuple:
    """Full preprocessing chain: quality filter, deduplicate, fixpoint filter, index.

    Returns (matrix, removed component keys).
    """
    cleaned = deduplicate(filter_quality(records))
    kept, removed = filter_min_systems(cleaned)
    return build_matrix(kept), removed
