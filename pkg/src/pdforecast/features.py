"""Analysis artifacts and supervised-set assembly.

Supervised rows pair lagged visit features (previous UPDRS scores, visit
month, medication state, peptide-presence flags) with the UPDRS scores of a
visit ``horizon_months`` later.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import UPDRS_COLS, Cohort, to_feature_matrix
from .errors import (InsufficientOverlap, NoPairsProduced, TooFewPatients,
                     TooFewSamples)
from .matrix import FeatureMatrix
from .preprocess import FittedPreprocessor, one_hot_medication


@dataclass
class LagConfig:
    horizon_months: int = 6
    lag_depth: int = 2
    include_visit_month: bool = True
    include_medication: bool = True
    n_presence_peptides: int = 15

    def __post_init__(self):
        if self.horizon_months < 1:
            raise ValueError("horizon_months must be >= 1")
        if self.lag_depth < 1:
            raise ValueError("lag_depth must be >= 1")


@dataclass
class SupervisedSet:
    inputs: np.ndarray                 # [n, D]
    targets: np.ndarray                # [n, 4], raw score scale, NaN at missing
    target_mask: np.ndarray            # [n, 4] bool
    row_provenance: list[tuple[int, int, int]]  # (patient, input month, target month)
    feature_names: list[str]
    lag_depth: int = 1

    @property
    def n_rows(self) -> int:
        return self.inputs.shape[0]

    def patients(self) -> list[int]:
        return sorted({p for p, _, _ in self.row_provenance})

    def subset(self, idx: np.ndarray) -> "SupervisedSet":
        return SupervisedSet(self.inputs[idx], self.targets[idx],
                             self.target_mask[idx],
                             [self.row_provenance[i] for i in np.flatnonzero(idx)]
                             if idx.dtype == bool
                             else [self.row_provenance[i] for i in idx],
                             list(self.feature_names), self.lag_depth)

    def export_csv(self, inputs_path, targets_path) -> None:
        with open(inputs_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(self.feature_names)
            for row in self.inputs:
                w.writerow([repr(float(v)) for v in row])
        with open(targets_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(UPDRS_COLS)
            for row, mask in zip(self.targets, self.target_mask):
                w.writerow([repr(float(v)) if m else ""
                            for v, m in zip(row, mask)])


@dataclass
class DensityEstimate:
    grid: np.ndarray
    density: np.ndarray
    bandwidth: float


# ---------------------------------------------------------------------------
# Analysis


def correlation_matrix(matrix: FeatureMatrix, columns: list[str]) -> np.ndarray:
    """Pairwise-complete Pearson correlation; unit diagonal, symmetric."""
    k = len(columns)
    idx = [matrix.col_index(c) for c in columns]
    out = np.eye(k)
    for a in range(k):
        for b in range(a + 1, k):
            rows = matrix.mask[:, idx[a]] & matrix.mask[:, idx[b]]
            if rows.sum() < 2:
                raise InsufficientOverlap(columns[a], columns[b])
            x = matrix.values[rows, idx[a]]
            y = matrix.values[rows, idx[b]]
            if x.std() == 0.0 or y.std() == 0.0:
                r = 0.0
            else:
                r = float(np.corrcoef(x, y)[0, 1])
            out[a, b] = out[b, a] = min(1.0, max(-1.0, r))
    return out


def silverman_bandwidth(samples: np.ndarray) -> float:
    x = np.asarray(samples, dtype=np.float64)
    std = x.std(ddof=1) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    iqr = q75 - q25
    scale = min(s for s in (std, iqr / 1.34) if s > 0) \
        if (std > 0 or iqr > 0) else 1.0
    return float(0.9 * scale * x.size ** (-0.2))


def kde(samples: np.ndarray, bandwidth: float | None,
        grid: np.ndarray) -> DensityEstimate:
    """Gaussian-kernel density on an explicit evaluation grid."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise TooFewSamples(f"need >= 2 samples, got {x.size}")
    h = bandwidth if bandwidth is not None else silverman_bandwidth(x)
    if h <= 0:
        raise ValueError("bandwidth must be > 0")
    grid = np.asarray(grid, dtype=np.float64)
    z = (grid[:, None] - x[None, :]) / h
    dens = np.exp(-0.5 * z ** 2).sum(axis=1) / (x.size * h * math.sqrt(2 * math.pi))
    return DensityEstimate(grid, dens, h)


def default_kde_grid(samples: np.ndarray, bandwidth: float,
                     n_points: int = 256) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float64)
    return np.linspace(x.min() - 5 * bandwidth, x.max() + 5 * bandwidth, n_points)


# ---------------------------------------------------------------------------
# Feature blocks


def top_peptides(cohort: Cohort, top_k: int) -> list[str]:
    """Top-k peptide sequences by number of visits carrying a record."""
    counts: dict[str, int] = {}
    seen: set[tuple[str, str]] = set()
    for p in cohort.peptides:
        key = (p.visit_id, p.peptide_sequence)
        if key not in seen:
            seen.add(key)
            counts[p.peptide_sequence] = counts.get(p.peptide_sequence, 0) + 1
    ranked = sorted(counts, key=lambda s: (-counts[s], s))
    if top_k > len(ranked):
        raise ValueError(f"top_k={top_k} exceeds {len(ranked)} distinct peptides")
    return ranked[:top_k]


def peptide_presence(cohort: Cohort, top_k: int,
                     row_keys: list[tuple[int, int]] | None = None
                     ) -> FeatureMatrix:
    """0/1 presence flags of the top-k most frequently observed peptides."""
    selected = top_peptides(cohort, top_k)
    if row_keys is None:
        row_keys = sorted({(r.patient_id, r.visit_month) for r in cohort.clinical})
    col_of = {s: j for j, s in enumerate(selected)}
    row_of = {key: i for i, key in enumerate(row_keys)}
    values = np.zeros((len(row_keys), len(selected)))
    for p in cohort.peptides:
        key = (p.patient_id, p.visit_month)
        if key in row_of and p.peptide_sequence in col_of:
            values[row_of[key], col_of[p.peptide_sequence]] = 1.0
    return FeatureMatrix(values, np.ones_like(values, dtype=bool),
                         [f"pres_{s}" for s in selected], list(row_keys))


# ---------------------------------------------------------------------------
# Supervised set


def build_supervised(cohort: Cohort, preprocessor: FittedPreprocessor,
                     lag_config: LagConfig) -> SupervisedSet:
    """Emit one row per (patient, visit m, visit m+horizon) pair in the data.

    Inputs use the preprocessed (standardized) feature scale; targets stay in
    the raw score scale with an observedness mask. Lag slots with no earlier
    visit are zero-filled (zero = the standardized column mean).
    """
    matrix = to_feature_matrix(cohort, include_supplemental=False)
    pre = preprocessor.apply(matrix)
    row_of = {key: i for i, key in enumerate(matrix.row_keys)}
    updrs_idx = [pre.col_index(c) for c in UPDRS_COLS]
    month_idx = pre.col_index("visit_month")

    presence = None
    if lag_config.n_presence_peptides > 0:
        presence = peptide_presence(cohort, lag_config.n_presence_peptides,
                                    row_keys=matrix.row_keys)
    med_of = {(r.patient_id, r.visit_month): r.medication for r in cohort.clinical}

    feature_names = [f"{c}_lag{j}" for j in range(lag_config.lag_depth)
                     for c in UPDRS_COLS]
    if lag_config.include_visit_month:
        feature_names.append("visit_month")
    if lag_config.include_medication:
        feature_names.extend(preprocessor.medication_columns)
    if presence is not None:
        feature_names.extend(presence.col_names)

    visits_by_patient: dict[int, list[int]] = {}
    for pid, month in matrix.row_keys:
        visits_by_patient.setdefault(pid, []).append(month)
    for months in visits_by_patient.values():
        months.sort()

    raw_targets = matrix.values[:, [matrix.col_index(c) for c in UPDRS_COLS]]
    raw_mask = matrix.mask[:, [matrix.col_index(c) for c in UPDRS_COLS]]

    inputs, targets, target_mask, provenance = [], [], [], []
    for pid in sorted(visits_by_patient):
        months = visits_by_patient[pid]
        month_set = set(months)
        for pos, m in enumerate(months):
            tgt_month = m + lag_config.horizon_months
            if tgt_month not in month_set:
                continue
            tgt_row = row_of[(pid, tgt_month)]
            if not raw_mask[tgt_row].any():
                continue
            vec = []
            for j in range(lag_config.lag_depth):
                if pos - j >= 0:
                    r = row_of[(pid, months[pos - j])]
                    vec.extend(pre.values[r, updrs_idx])
                else:
                    vec.extend([0.0] * 4)
            r = row_of[(pid, m)]
            if lag_config.include_visit_month:
                vec.append(pre.values[r, month_idx])
            if lag_config.include_medication:
                vec.extend(one_hot_medication(med_of[(pid, m)]))
            if presence is not None:
                vec.extend(presence.values[r])
            inputs.append(vec)
            targets.append(raw_targets[tgt_row])
            target_mask.append(raw_mask[tgt_row])
            provenance.append((pid, m, tgt_month))

    if not inputs:
        raise NoPairsProduced(
            f"no (m, m+{lag_config.horizon_months}) visit pairs in the cohort")
    return SupervisedSet(
        inputs=np.asarray(inputs, dtype=np.float64),
        targets=np.asarray(targets, dtype=np.float64),
        target_mask=np.asarray(target_mask, dtype=bool),
        row_provenance=provenance,
        feature_names=feature_names,
        lag_depth=lag_config.lag_depth,
    )


def split_patients(patient_ids: list[int], validation_fraction: float,
                   seed: int) -> tuple[set[int], set[int]]:
    """Deterministic patient-level partition (train, validation)."""
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must be in (0, 1)")
    patients = sorted(set(patient_ids))
    if len(patients) < 2:
        raise TooFewPatients(f"need >= 2 patients, got {len(patients)}")
    n_val = max(1, int(len(patients) * validation_fraction))
    perm = np.random.default_rng(seed).permutation(len(patients))
    val = {patients[i] for i in perm[:n_val]}
    return set(patients) - val, val


def split(sset: SupervisedSet, validation_fraction: float,
          seed: int) -> tuple[SupervisedSet, SupervisedSet]:
    """Split at patient granularity so no trajectory straddles the split."""
    train_p, val_p = split_patients(sset.patients(), validation_fraction, seed)
    pids = np.array([p for p, _, _ in sset.row_provenance])
    train_idx = np.isin(pids, sorted(train_p))
    return sset.subset(train_idx), sset.subset(~train_idx)
