"""Preprocessing pipeline: skew correction, imputation, standardization, one-hot.

Pipeline order is transform -> impute -> standardize (transforming first keeps
the Box-Cox positivity domain valid; imputing before standardizing means the
fitted means/stds describe the completed table). The medication one-hot block
is appended downstream during supervised-set assembly.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Medication
from .errors import (AllMissingColumn, NoObservedEntries, NonPositiveInput,
                     TooFewValues, ZeroVariance)
from .matrix import FeatureMatrix

POSITIVITY_EPS = 1e-6
MEDICATION_COLUMNS = ("med_on", "med_off", "med_missing")


class TransformKind(str, enum.Enum):
    NONE = "none"
    LOG = "log"
    BOXCOX = "boxcox"
    SQRT = "sqrt"


@dataclass
class TransformSpec:
    kind: TransformKind = TransformKind.NONE
    lam: float | None = None     # Box-Cox parameter
    shift: float = 0.0           # offset enforcing positivity

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kind is TransformKind.NONE:
            return x.copy()
        # values below the fitted positivity shift (possible when applying to
        # rows outside the fit set) clamp to the domain edge
        shifted = np.maximum(x + self.shift, POSITIVITY_EPS)
        if self.kind is TransformKind.LOG:
            return np.log(shifted)
        if self.kind is TransformKind.SQRT:
            return np.sqrt(shifted)
        return boxcox(shifted, self.lam)


class Missingness(str, enum.Enum):
    MCAR = "MCAR"
    MAR = "MAR"
    MNAR = "MNAR"


@dataclass
class ImputeConfig:
    sv_threshold: float = 0.1
    max_iter: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.sv_threshold < 0:
            raise ValueError("sv_threshold must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be > 0")


# ---------------------------------------------------------------------------
# Skewness and transforms


def skewness(column: np.ndarray) -> float:
    """Fisher-Pearson g1 with population (ddof=0) moments."""
    x = np.asarray(column, dtype=np.float64)
    if x.size < 3:
        raise TooFewValues(f"need >= 3 values, got {x.size}")
    mu = x.mean()
    d = x - mu
    m2 = np.mean(d ** 2)
    if m2 == 0.0:
        raise ZeroVariance("column has zero variance")
    return float(np.mean(d ** 3) / m2 ** 1.5)


def boxcox(x, lam: float):
    """(x^lam - 1)/lam, continuously extended to ln x at lam = 0."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise NonPositiveInput("box-cox requires strictly positive input")
    if lam == 0.0:
        return np.log(x)
    return (np.power(x, lam) - 1.0) / lam


def boxcox_loglik(x: np.ndarray, lam: float) -> float:
    z = boxcox(x, lam)
    var = z.var()
    if var <= 0:
        return -np.inf
    n = x.size
    return float(-0.5 * n * math.log(var) + (lam - 1.0) * np.sum(np.log(x)))


def boxcox_mle(column: np.ndarray, lo: float = -5.0, hi: float = 5.0,
               tol: float = 1e-4) -> float:
    """Golden-section maximization of the Box-Cox profile log-likelihood."""
    x = np.asarray(column, dtype=np.float64)
    if np.any(x <= 0):
        raise NonPositiveInput("box-cox MLE requires strictly positive input")
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = boxcox_loglik(x, c)
    fd = boxcox_loglik(x, d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = boxcox_loglik(x, c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = boxcox_loglik(x, d)
    return 0.5 * (a + b)


def select_transform(column: np.ndarray) -> TransformSpec:
    """Pick the candidate transform minimizing |skewness| of the column."""
    x = np.asarray(column, dtype=np.float64)
    if x.size < 3:
        raise TooFewValues(f"need >= 3 values, got {x.size}")
    shift = max(0.0, POSITIVITY_EPS - float(x.min()))

    candidates = [TransformSpec(TransformKind.NONE)]
    try:
        lam = boxcox_mle(x + shift)
    except NonPositiveInput:
        lam = None
    for kind in (TransformKind.LOG, TransformKind.BOXCOX, TransformKind.SQRT):
        if kind is TransformKind.BOXCOX and lam is None:
            continue
        candidates.append(TransformSpec(kind, lam if kind is TransformKind.BOXCOX
                                        else None, shift))

    best = None
    best_abs = math.inf
    for spec in candidates:
        try:
            s = abs(skewness(spec.apply(x)))
        except (ZeroVariance, NonPositiveInput, FloatingPointError):
            continue
        if not math.isfinite(s):
            continue
        if s < best_abs:
            best, best_abs = spec, s
    if best is None:
        raise ZeroVariance("no transform candidate has finite skewness")
    return best


# ---------------------------------------------------------------------------
# Standardization


def fit_standardizer(matrix: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population std over observed entries."""
    means = np.zeros(matrix.n_cols)
    stds = np.zeros(matrix.n_cols)
    for j in range(matrix.n_cols):
        obs = matrix.values[matrix.mask[:, j], j]
        if obs.size:
            means[j] = obs.mean()
            stds[j] = obs.std()
    return means, stds


def standardize(matrix: FeatureMatrix, means: np.ndarray,
                stds: np.ndarray) -> FeatureMatrix:
    """(x - mean)/std on observed cells; constant columns map to 0."""
    out = matrix.copy()
    safe = np.where(stds > 0, stds, 1.0)
    scaled = (out.values - means) / safe
    scaled[:, stds == 0] = 0.0
    out.values = np.where(out.mask, scaled, out.values)
    return out


# ---------------------------------------------------------------------------
# Missingness classification and imputation


def classify_missingness(matrix: FeatureMatrix, threshold: float = 0.2
                         ) -> dict[str, Missingness]:
    """MCAR vs MAR via point-biserial correlation of the missing indicator.

    A column is MCAR when no other observed column correlates with its
    missingness indicator beyond ``threshold`` in absolute value. MNAR is not
    separately detectable here; non-MCAR columns route to soft impute.
    """
    result: dict[str, Missingness] = {}
    for j, name in enumerate(matrix.col_names):
        miss = ~matrix.mask[:, j]
        if not miss.any():
            continue
        max_abs_r = 0.0
        for k in range(matrix.n_cols):
            if k == j:
                continue
            rows = matrix.mask[:, k]
            if rows.sum() < 3:
                continue
            ind = miss[rows].astype(np.float64)
            other = matrix.values[rows, k]
            if ind.std() == 0.0 or other.std() == 0.0:
                continue
            r = np.corrcoef(ind, other)[0, 1]
            max_abs_r = max(max_abs_r, abs(float(r)))
        result[name] = Missingness.MCAR if max_abs_r <= threshold else Missingness.MAR
    return result


def mean_impute(matrix: FeatureMatrix, columns: list[str],
                means: dict[str, float] | None = None) -> FeatureMatrix:
    """Fill missing cells of the listed columns with their observed means.

    ``means`` overrides per-column fill values (used at apply time with
    train-fitted means).
    """
    out = matrix.copy()
    for name in columns:
        j = out.col_index(name)
        miss = ~out.mask[:, j]
        if not miss.any():
            continue
        if means is not None and name in means:
            fill = means[name]
        else:
            obs = out.values[out.mask[:, j], j]
            if obs.size == 0:
                raise AllMissingColumn(name)
            fill = float(obs.mean())
        out.values[miss, j] = fill
        out.mask[miss, j] = True
    return out


@dataclass
class SoftImputeResult:
    matrix: FeatureMatrix
    converged: bool
    n_iter: int


def soft_impute(matrix: FeatureMatrix, config: ImputeConfig) -> SoftImputeResult:
    """Iterative SVD soft-thresholding; observed entries are held bit-exact."""
    mask = matrix.mask
    if not mask.any():
        raise NoObservedEntries("matrix has no observed entries")
    if mask.all():
        return SoftImputeResult(matrix.copy(), True, 0)
    if (~mask.any(axis=1)).any():
        raise NoObservedEntries("some row has no observed entries")
    if (~mask.any(axis=0)).any():
        raise NoObservedEntries("some column has no observed entries")

    observed = matrix.values
    x = observed.copy()
    col_means = np.array([observed[mask[:, j], j].mean()
                          for j in range(matrix.n_cols)])
    miss = ~mask
    x[miss] = np.broadcast_to(col_means, x.shape)[miss]

    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        u, s, vt = np.linalg.svd(x, full_matrices=False)
        s_shrunk = np.maximum(s - config.sv_threshold, 0.0)
        recon = (u * s_shrunk) @ vt
        new = observed.copy()
        new[miss] = recon[miss]
        denom = max(np.linalg.norm(x), 1e-12)
        rel = np.linalg.norm(new - x) / denom
        x = new
        if rel < config.tol:
            converged = True
            break

    out = FeatureMatrix(x, np.ones_like(mask, dtype=bool),
                        list(matrix.col_names), list(matrix.row_keys))
    # observed cells must survive untouched
    out.values[mask] = observed[mask]
    return SoftImputeResult(out, converged, it)


# ---------------------------------------------------------------------------
# One-hot encoding


def one_hot_medication(status: Medication) -> np.ndarray:
    """On -> [1,0,0], Off -> [0,1,0], Missing -> [0,0,1]."""
    vec = np.zeros(3)
    vec[{Medication.ON: 0, Medication.OFF: 1, Medication.MISSING: 2}[status]] = 1.0
    return vec


# ---------------------------------------------------------------------------
# Fitted pipeline


@dataclass
class FittedPreprocessor:
    col_names: list[str]
    transforms: dict[str, TransformSpec]
    missingness: dict[str, Missingness]
    impute_means: dict[str, float]       # post-transform observed means (train)
    means: np.ndarray                    # post-imputation standardization
    stds: np.ndarray
    impute_config: ImputeConfig = field(default_factory=ImputeConfig)
    medication_columns: tuple[str, str, str] = MEDICATION_COLUMNS

    def apply(self, matrix: FeatureMatrix) -> FeatureMatrix:
        """Replay the fitted pipeline on a (possibly new) matrix."""
        if list(matrix.col_names) != list(self.col_names):
            raise AllMissingColumn(
                "column layout differs from the fitted preprocessor")
        out = matrix.copy()
        for name, spec in self.transforms.items():
            j = out.col_index(name)
            obs = out.mask[:, j]
            out.values[obs, j] = spec.apply(out.values[obs, j])

        mcar_cols = [c for c, m in self.missingness.items()
                     if m is Missingness.MCAR]
        out = mean_impute(out, mcar_cols, means=self.impute_means)
        if not out.mask.all():
            # columns with no observations at apply time fall back to the
            # train mean before the SVD loop
            for j, name in enumerate(out.col_names):
                if not out.mask[:, j].any():
                    out.values[:, j] = self.impute_means.get(name, 0.0)
                    out.mask[:, j] = True
            if not out.mask.all():
                out = soft_impute(out, self.impute_config).matrix
        return standardize(out, self.means, self.stds)

    def to_json(self) -> str:
        doc = {
            "version": 1,
            "col_names": self.col_names,
            "transforms": {
                name: {"kind": spec.kind.value, "lambda": spec.lam,
                       "shift": spec.shift}
                for name, spec in self.transforms.items()
            },
            "missingness": {k: v.value for k, v in self.missingness.items()},
            "impute_means": self.impute_means,
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "impute_config": {"sv_threshold": self.impute_config.sv_threshold,
                              "max_iter": self.impute_config.max_iter,
                              "tol": self.impute_config.tol},
            "medication_columns": list(self.medication_columns),
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FittedPreprocessor":
        doc = json.loads(text)
        if doc.get("version") != 1:
            raise ValueError(f"unsupported preprocessor version {doc.get('version')}")
        return cls(
            col_names=doc["col_names"],
            transforms={
                name: TransformSpec(TransformKind(d["kind"]), d["lambda"],
                                    d["shift"])
                for name, d in doc["transforms"].items()
            },
            missingness={k: Missingness(v) for k, v in doc["missingness"].items()},
            impute_means=doc["impute_means"],
            means=np.asarray(doc["means"]),
            stds=np.asarray(doc["stds"]),
            impute_config=ImputeConfig(**doc["impute_config"]),
            medication_columns=tuple(doc["medication_columns"]),
        )


def fit_preprocessor(train_matrix: FeatureMatrix,
                     impute_config: ImputeConfig | None = None,
                     skew_threshold: float = 0.5) -> FittedPreprocessor:
    """Fit transform/impute/standardize state on training rows only."""
    impute_config = impute_config or ImputeConfig()
    work = train_matrix.copy()

    transforms: dict[str, TransformSpec] = {}
    for j, name in enumerate(work.col_names):
        obs_rows = work.mask[:, j]
        obs = work.values[obs_rows, j]
        if obs.size < 3 or np.ptp(obs) == 0.0:
            transforms[name] = TransformSpec(TransformKind.NONE)
            continue
        try:
            if abs(skewness(obs)) <= skew_threshold:
                transforms[name] = TransformSpec(TransformKind.NONE)
                continue
            spec = select_transform(obs)
        except (TooFewValues, ZeroVariance):
            spec = TransformSpec(TransformKind.NONE)
        transforms[name] = spec
        work.values[obs_rows, j] = spec.apply(obs)

    missingness = classify_missingness(work)
    impute_means = {}
    for j, name in enumerate(work.col_names):
        obs = work.values[work.mask[:, j], j]
        impute_means[name] = float(obs.mean()) if obs.size else 0.0

    mcar_cols = [c for c, m in missingness.items() if m is Missingness.MCAR]
    work = mean_impute(work, mcar_cols)
    if not work.mask.all():
        work = soft_impute(work, impute_config).matrix

    means, stds = fit_standardizer(work)
    return FittedPreprocessor(
        col_names=list(train_matrix.col_names),
        transforms=transforms,
        missingness=missingness,
        impute_means=impute_means,
        means=means,
        stds=stds,
        impute_config=impute_config,
    )
