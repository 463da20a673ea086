"""Four-table clinical cohort: schema, CSV ingest, synthetic generation, profiling.

The cohort mirrors the public competition layout: a peptide table (mass-spec
abundances), a protein table (NPX per UniProt id), a clinical table (UPDRS
parts 1-4 plus medication state) and a supplemental clinical table without
CSF covariates. Real CSVs can be ingested; a calibrated synthetic generator
stands in when no real data is available.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (EmptyCohort, EmptyFile, InvalidConfig, MissingColumn,
                     RowParseError)
from .matrix import FeatureMatrix

PEPTIDE_HEADER = ["visit_id", "visit_month", "patient_id", "UniProt",
                  "Peptide", "PeptideAbundance"]
PROTEIN_HEADER = ["visit_id", "visit_month", "patient_id", "UniProt", "NPX"]
CLINICAL_HEADER = ["visit_id", "patient_id", "visit_month",
                   "updrs_1", "updrs_2", "updrs_3", "updrs_4",
                   "upd23b_clinical_state_on_medication"]

UPDRS_COLS = ["updrs_1", "updrs_2", "updrs_3", "updrs_4"]
UPDRS_SUM_MAX = 272.0


class Medication(str, enum.Enum):
    ON = "On"
    OFF = "Off"
    MISSING = "Missing"

    @classmethod
    def from_csv(cls, raw: str) -> "Medication":
        if raw == "" or raw.lower() == "nan":
            return cls.MISSING
        for m in (cls.ON, cls.OFF):
            if raw == m.value:
                return m
        raise ValueError(f"unknown medication state {raw!r}")

    def to_csv(self) -> str:
        return "" if self is Medication.MISSING else self.value


@dataclass
class PeptideRecord:
    visit_id: str
    visit_month: int
    patient_id: int
    uniprot_id: str
    peptide_sequence: str
    peptide_abundance: float | None


@dataclass
class ProteinRecord:
    visit_id: str
    visit_month: int
    patient_id: int
    uniprot_id: str
    npx: float | None


@dataclass
class ClinicalRecord:
    visit_id: str
    patient_id: int
    visit_month: int
    updrs: list[float | None]          # parts 1..4, None = missing
    medication: Medication = Medication.MISSING

    def updrs_part(self, k: int) -> float | None:
        """1-based part accessor."""
        return self.updrs[k - 1]


@dataclass
class Cohort:
    peptides: list[PeptideRecord] = field(default_factory=list)
    proteins: list[ProteinRecord] = field(default_factory=list)
    clinical: list[ClinicalRecord] = field(default_factory=list)
    supplemental: list[ClinicalRecord] = field(default_factory=list)

    def patient_ids(self) -> list[int]:
        return sorted({r.patient_id for r in self.clinical})


@dataclass
class DataProfile:
    n_patients: int
    visit_months: set[int]
    pct_skewed_columns: float
    pct_missing_cells: float
    per_column_missing: dict[str, float]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


@dataclass
class SynthConfig:
    n_patients: int = 248
    visit_months: tuple[int, ...] = (0, 6, 12, 24)
    n_peptides: int = 100
    target_pct_skewed: float = 20.58
    target_pct_missing: float = 8.9
    target_corr_updrs12: float = 0.66
    n_supplemental_patients: int = 0
    seed: int = 0

    def validate(self) -> None:
        if self.n_patients < 1:
            raise InvalidConfig("n_patients must be >= 1")
        if self.n_peptides < 1:
            raise InvalidConfig("n_peptides must be >= 1")
        if not self.visit_months:
            raise InvalidConfig("visit_months must be non-empty")
        if any(m < 0 for m in self.visit_months):
            raise InvalidConfig("visit months must be >= 0")
        for name in ("target_pct_skewed", "target_pct_missing"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise InvalidConfig(f"{name} must be in [0, 100]")
        if self.n_supplemental_patients < 0:
            raise InvalidConfig("n_supplemental_patients must be >= 0")


# ---------------------------------------------------------------------------
# CSV ingest / export


def _require_columns(fieldnames, required, path):
    if fieldnames is None:
        raise EmptyFile(str(path))
    for col in required:
        if col not in fieldnames:
            raise MissingColumn(col, path)


def _parse_float(raw: str, line: int, path, what: str) -> float | None:
    raw = raw.strip() if raw is not None else ""
    if raw == "":
        return None
    try:
        return float(raw)
    except ValueError:
        raise RowParseError(line, f"bad {what}: {raw!r}", path) from None


def _parse_int(raw: str, line: int, path, what: str) -> int:
    try:
        return int(float(raw))
    except (ValueError, TypeError):
        raise RowParseError(line, f"bad {what}: {raw!r}", path) from None


def _read_clinical(path) -> list[ClinicalRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, CLINICAL_HEADER, path)
        for row in reader:
            line = reader.line_num
            try:
                med = Medication.from_csv(
                    (row["upd23b_clinical_state_on_medication"] or "").strip())
            except ValueError as exc:
                raise RowParseError(line, str(exc), path) from None
            records.append(ClinicalRecord(
                visit_id=row["visit_id"],
                patient_id=_parse_int(row["patient_id"], line, path, "patient_id"),
                visit_month=_parse_int(row["visit_month"], line, path, "visit_month"),
                updrs=[_parse_float(row[c], line, path, c) for c in UPDRS_COLS],
                medication=med,
            ))
    return records


def load_cohort(peptide_path, protein_path, clinical_path,
                supplemental_path) -> Cohort:
    """Parse the four CSVs. Empty cells become missing values, never zeros."""
    peptides = []
    with open(peptide_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, PEPTIDE_HEADER, peptide_path)
        for row in reader:
            line = reader.line_num
            ab = _parse_float(row["PeptideAbundance"], line, peptide_path,
                              "PeptideAbundance")
            if ab is not None and ab < 0:
                raise RowParseError(line, f"negative abundance {ab}", peptide_path)
            peptides.append(PeptideRecord(
                visit_id=row["visit_id"],
                visit_month=_parse_int(row["visit_month"], line, peptide_path,
                                       "visit_month"),
                patient_id=_parse_int(row["patient_id"], line, peptide_path,
                                      "patient_id"),
                uniprot_id=row["UniProt"],
                peptide_sequence=row["Peptide"],
                peptide_abundance=ab,
            ))

    proteins = []
    with open(protein_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, PROTEIN_HEADER, protein_path)
        for row in reader:
            line = reader.line_num
            proteins.append(ProteinRecord(
                visit_id=row["visit_id"],
                visit_month=_parse_int(row["visit_month"], line, protein_path,
                                       "visit_month"),
                patient_id=_parse_int(row["patient_id"], line, protein_path,
                                      "patient_id"),
                uniprot_id=row["UniProt"],
                npx=_parse_float(row["NPX"], line, protein_path, "NPX"),
            ))

    clinical = _read_clinical(clinical_path)
    supplemental = _read_clinical(supplemental_path)
    return Cohort(peptides=peptides, proteins=proteins,
                  clinical=clinical, supplemental=supplemental)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_cohort(cohort: Cohort, out_dir,
                 names=("peptides.csv", "proteins.csv",
                        "clinical.csv", "supplemental.csv")) -> dict[str, Path]:
    """Serialize to the four-CSV layout; round-trips through load_cohort."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}

    p = out_dir / names[0]
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PEPTIDE_HEADER)
        for r in cohort.peptides:
            w.writerow([r.visit_id, r.visit_month, r.patient_id, r.uniprot_id,
                        r.peptide_sequence, _fmt(r.peptide_abundance)])
    paths["peptides"] = p

    p = out_dir / names[1]
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PROTEIN_HEADER)
        for r in cohort.proteins:
            w.writerow([r.visit_id, r.visit_month, r.patient_id, r.uniprot_id,
                        _fmt(r.npx)])
    paths["proteins"] = p

    for key, recs, name in (("clinical", cohort.clinical, names[2]),
                            ("supplemental", cohort.supplemental, names[3])):
        p = out_dir / name
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CLINICAL_HEADER)
            for r in recs:
                w.writerow([r.visit_id, r.patient_id, r.visit_month]
                           + [_fmt(v) for v in r.updrs]
                           + [r.medication.to_csv()])
        paths[key] = p
    return paths


# ---------------------------------------------------------------------------
# Synthetic generation

_AMINO = "ACDEFGHIKLMNPQRSTVWY"

# UPDRS part means / spreads and the shared-severity loading per part; the
# loadings put corr(updrs_1, updrs_2) near the 0.66 calibration target.
_UPDRS_MEAN = np.array([10.0, 9.0, 22.0, 4.0])
_UPDRS_STD = np.array([4.0, 4.5, 9.0, 2.2])
_UPDRS_DRIFT_W = np.array([0.3, 0.3, 1.0, 0.1])


def _severity_loadings(target_corr: float) -> np.ndarray:
    a12 = math.sqrt(min(max(target_corr, 0.0), 0.98))
    return np.array([a12, a12, 0.95 * a12, 0.55 * a12])


def _random_sequences(rng: np.random.Generator, n: int) -> list[str]:
    seqs: list[str] = []
    seen = set()
    while len(seqs) < n:
        length = int(rng.integers(8, 15))
        s = "".join(_AMINO[i] for i in rng.integers(0, len(_AMINO), size=length))
        if s not in seen:
            seen.add(s)
            seqs.append(s)
    return seqs


def _clinical_scores(rng, patient_ids, months, loadings):
    """Per-patient monotone-trending UPDRS trajectories with shared severity."""
    rows = []
    for pid in patient_ids:
        base = rng.normal()                     # patient severity
        part_effects = rng.normal(size=4)       # per-part patient effect
        drift = rng.uniform(0.05, 0.15)
        for month in months:
            f = math.sqrt(0.7) * base + math.sqrt(0.3) * rng.normal()
            eta = math.sqrt(0.5) * part_effects + math.sqrt(0.5) * rng.normal(size=4)
            z = loadings * f + np.sqrt(1.0 - loadings ** 2) * eta
            score = _UPDRS_MEAN + _UPDRS_DRIFT_W * drift * month + _UPDRS_STD * z
            score = np.clip(score, 0.0, None)
            rows.append((pid, month, [round(float(s), 1) for s in score]))
    return rows


def generate_synthetic(config: SynthConfig) -> Cohort:
    """Deterministic synthetic cohort calibrated to the profiling targets."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    months = sorted(set(int(m) for m in config.visit_months))
    n_pep = config.n_peptides

    sequences = _random_sequences(rng, n_pep)
    uniprots = [f"P{20000 + i // 2:05d}" for i in range(n_pep)]

    # column budget for skew calibration: visit_month + 4 UPDRS + peptides,
    # with the non-peptide columns assumed unskewed
    n_cols = 5 + n_pep
    n_skewed = min(n_pep, int(round(config.target_pct_skewed / 100.0 * n_cols)))
    skewed_idx = set(rng.choice(n_pep, size=n_skewed, replace=False).tolist())
    log_mu = rng.uniform(2.0, 4.0, size=n_pep)
    lin_mu = rng.uniform(15.0, 25.0, size=n_pep)

    patient_ids = list(range(1, config.n_patients + 1))
    loadings = _severity_loadings(config.target_corr_updrs12)
    score_rows = _clinical_scores(rng, patient_ids, months, loadings)
    n_rows = len(score_rows)

    abundance = np.empty((n_rows, n_pep))
    for j in range(n_pep):
        if j in skewed_idx:
            abundance[:, j] = np.exp(rng.normal(log_mu[j], 1.0, size=n_rows))
        else:
            abundance[:, j] = np.clip(
                rng.normal(lin_mu[j], 0.1 * lin_mu[j], size=n_rows), 0.01, None)
    abundance = np.round(abundance, 4)

    # missingness: updrs_4 carries the highest rate, the remainder of the
    # target budget spreads over updrs_1..3 and the peptide columns
    p = config.target_pct_missing / 100.0
    r4 = min(0.6, 3.5 * p)
    r123 = min(0.5, p)
    r_pep = max(0.0, (p * n_cols - r4 - 3 * r123) / n_pep) if n_pep else 0.0
    updrs_missing = np.column_stack([
        rng.random(n_rows) < r123,
        rng.random(n_rows) < r123,
        rng.random(n_rows) < r123,
        rng.random(n_rows) < r4,
    ])
    pep_missing = rng.random((n_rows, n_pep)) < r_pep
    # keep every peptide column observable somewhere
    for j in range(n_pep):
        if pep_missing[:, j].all():
            pep_missing[int(rng.integers(0, n_rows)), j] = False

    med_states = rng.choice(3, size=n_rows, p=[0.35, 0.15, 0.5])
    med_enum = [Medication.ON, Medication.OFF, Medication.MISSING]

    clinical: list[ClinicalRecord] = []
    peptides: list[PeptideRecord] = []
    proteins: list[ProteinRecord] = []
    for i, (pid, month, score) in enumerate(score_rows):
        vid = f"{pid}_{month}"
        updrs = [None if updrs_missing[i, k] else score[k] for k in range(4)]
        clinical.append(ClinicalRecord(
            visit_id=vid, patient_id=pid, visit_month=month,
            updrs=updrs, medication=med_enum[med_states[i]]))
        npx_sum: dict[str, float] = {}
        for j in range(n_pep):
            if pep_missing[i, j]:
                continue
            peptides.append(PeptideRecord(
                visit_id=vid, visit_month=month, patient_id=pid,
                uniprot_id=uniprots[j], peptide_sequence=sequences[j],
                peptide_abundance=float(abundance[i, j])))
            npx_sum[uniprots[j]] = npx_sum.get(uniprots[j], 0.0) + float(abundance[i, j])
        for up in sorted(npx_sum):
            proteins.append(ProteinRecord(
                visit_id=vid, visit_month=month, patient_id=pid,
                uniprot_id=up, npx=round(math.log(npx_sum[up] + 1.0), 4)))

    supplemental: list[ClinicalRecord] = []
    if config.n_supplemental_patients:
        supp_ids = list(range(config.n_patients + 1,
                              config.n_patients + 1 + config.n_supplemental_patients))
        for pid, month, score in _clinical_scores(rng, supp_ids, months, loadings):
            supplemental.append(ClinicalRecord(
                visit_id=f"{pid}_{month}", patient_id=pid, visit_month=month,
                updrs=[float(s) for s in score], medication=Medication.MISSING))

    return Cohort(peptides=peptides, proteins=proteins,
                  clinical=clinical, supplemental=supplemental)


# ---------------------------------------------------------------------------
# Merged feature table and profiling


def to_feature_matrix(cohort: Cohort, include_supplemental: bool = False
                      ) -> FeatureMatrix:
    """Merge clinical scores and peptide abundances into one visit-row table.

    Columns: visit_month, updrs_1..4, then one ``pep_<sequence>`` column per
    distinct peptide. Peptide rows whose visit has no clinical record are
    skipped here (validate_cohort flags them as orphaned).
    """
    records = list(cohort.clinical)
    if include_supplemental:
        records = records + list(cohort.supplemental)
    if not records:
        raise EmptyCohort("no clinical records")
    records.sort(key=lambda r: (r.patient_id, r.visit_month))

    row_keys = []
    key_to_row = {}
    for r in records:
        key = (r.patient_id, r.visit_month)
        if key not in key_to_row:
            key_to_row[key] = len(row_keys)
            row_keys.append(key)

    pep_names = sorted({p.peptide_sequence for p in cohort.peptides})
    col_names = ["visit_month"] + list(UPDRS_COLS) + [f"pep_{s}" for s in pep_names]
    pep_col = {s: 5 + j for j, s in enumerate(pep_names)}

    values = np.full((len(row_keys), len(col_names)), np.nan)
    for r in records:
        i = key_to_row[(r.patient_id, r.visit_month)]
        values[i, 0] = r.visit_month
        for k in range(4):
            if r.updrs[k] is not None:
                values[i, 1 + k] = r.updrs[k]
    for p in cohort.peptides:
        key = (p.patient_id, p.visit_month)
        if key in key_to_row and p.peptide_abundance is not None:
            values[key_to_row[key], pep_col[p.peptide_sequence]] = p.peptide_abundance

    mask = np.isfinite(values)
    return FeatureMatrix(values, mask, col_names, row_keys)


def profile(cohort: Cohort, skew_threshold: float = 0.5) -> DataProfile:
    """Summarize cohort shape, missingness, and column skew."""
    from .preprocess import skewness  # local import to avoid a cycle

    matrix = to_feature_matrix(cohort, include_supplemental=True)
    n_cells = matrix.values.size
    pct_missing = 100.0 * (1.0 - matrix.mask.sum() / n_cells)

    n_eligible = 0
    n_skewed = 0
    per_column_missing = {}
    for j, name in enumerate(matrix.col_names):
        col_mask = matrix.mask[:, j]
        per_column_missing[name] = 100.0 * (1.0 - col_mask.mean())
        obs = matrix.values[col_mask, j]
        if obs.size < 3 or np.ptp(obs) == 0.0:
            continue
        n_eligible += 1
        if abs(skewness(obs)) > skew_threshold:
            n_skewed += 1

    all_clinical = list(cohort.clinical) + list(cohort.supplemental)
    return DataProfile(
        n_patients=len({r.patient_id for r in all_clinical}),
        visit_months={r.visit_month for r in all_clinical},
        pct_skewed_columns=100.0 * n_skewed / n_eligible if n_eligible else 0.0,
        pct_missing_cells=pct_missing,
        per_column_missing=per_column_missing,
    )


def validate_cohort(cohort: Cohort) -> ValidationReport:
    """Collect schema violations without mutating the cohort."""
    report = ValidationReport()
    known_visits = {r.visit_id for r in cohort.clinical} \
        | {r.visit_id for r in cohort.supplemental}

    for r in cohort.peptides:
        if r.visit_id not in known_visits:
            report.violations.append(
                f"orphaned visit: peptide record {r.visit_id} ({r.peptide_sequence})")
        if r.peptide_abundance is not None and r.peptide_abundance < 0:
            report.violations.append(
                f"negative abundance: {r.visit_id} {r.peptide_sequence}")
    for r in cohort.proteins:
        if r.visit_id not in known_visits:
            report.violations.append(
                f"orphaned visit: protein record {r.visit_id} ({r.uniprot_id})")

    for r in list(cohort.clinical) + list(cohort.supplemental):
        present = [v for v in r.updrs if v is not None]
        if any(v < 0 for v in present):
            report.violations.append(f"negative updrs score at {r.visit_id}")
        if sum(present) > UPDRS_SUM_MAX:
            report.violations.append(
                f"updrs sum exceeds 272 at {r.visit_id} (sum={sum(present):g})")
        if r.visit_month < 0:
            report.violations.append(f"negative visit_month at {r.visit_id}")
    return report
