import numpy as np
import pytest

from pdforecast.dataset import (ClinicalRecord, Cohort, Medication,
                                PeptideRecord, to_feature_matrix)
from pdforecast.errors import NoPairsProduced, TooFewPatients
from pdforecast.features import (LagConfig, build_supervised,
                                 correlation_matrix, default_kde_grid, kde,
                                 peptide_presence, silverman_bandwidth, split,
                                 split_patients, top_peptides)
from pdforecast.preprocess import fit_preprocessor


def _mini_cohort(months_by_patient, peptides=()):
    clinical = []
    for pid, months in months_by_patient.items():
        for m in months:
            clinical.append(ClinicalRecord(
                visit_id=f"{pid}_{m}", patient_id=pid, visit_month=m,
                updrs=[5.0, 6.0, 20.0, 1.0], medication=Medication.ON))
    peps = [PeptideRecord(visit_id=f"{pid}_{m}", visit_month=m,
                          patient_id=pid, uniprot_id="P00001",
                          peptide_sequence=seq, peptide_abundance=10.0)
            for (pid, m, seq) in peptides]
    return Cohort(peptides=peps, clinical=clinical)


# ---------------------------------------------------------------------------
# Correlation and KDE


def test_correlation_matrix_properties(default_cohort):
    m = to_feature_matrix(default_cohort)
    cols = ["updrs_1", "updrs_2", "updrs_3", "updrs_4"]
    corr = correlation_matrix(m, cols)
    np.testing.assert_array_equal(np.diag(corr), np.ones(4))
    np.testing.assert_array_equal(corr, corr.T)
    assert (np.abs(corr) <= 1.0).all()


def test_correlation_matches_numpy_on_complete_data(rng):
    from pdforecast.matrix import FeatureMatrix
    vals = rng.normal(size=(100, 3))
    vals[:, 1] += 0.5 * vals[:, 0]
    m = FeatureMatrix(vals, np.ones_like(vals, dtype=bool), ["a", "b", "c"],
                      [(i, 0) for i in range(100)])
    corr = correlation_matrix(m, ["a", "b", "c"])
    np.testing.assert_allclose(corr, np.corrcoef(vals.T), atol=1e-12)


def test_kde_standard_normal_peak():
    # two coincident samples, bandwidth 1: density at 0 is phi(0)=0.3989
    est = kde(np.array([0.0, 0.0]), 1.0, np.array([0.0]))
    assert est.density[0] == pytest.approx(0.3989422804014327, abs=1e-9)


def test_kde_integrates_to_one(rng):
    x = rng.normal(size=300)
    h = silverman_bandwidth(x)
    grid = default_kde_grid(x, h, n_points=2001)
    est = kde(x, h, grid)
    area = np.trapezoid(est.density, grid)
    assert area == pytest.approx(1.0, abs=1e-3)


def test_silverman_bandwidth_scipy_reference(rng):
    scipy_stats = pytest.importorskip("scipy.stats")
    x = rng.normal(size=500)
    h = silverman_bandwidth(x)
    # scipy's silverman factor uses n^(-1/5) scaling on the std as well
    ref = scipy_stats.gaussian_kde(x, bw_method="silverman").factor * x.std(ddof=1)
    assert h == pytest.approx(ref, rel=0.25)


# ---------------------------------------------------------------------------
# Peptide features


def test_top_peptides_ranking():
    cohort = _mini_cohort({1: [0, 6], 2: [0]},
                          peptides=[(1, 0, "AAA"), (1, 6, "AAA"), (2, 0, "AAA"),
                                    (1, 0, "BBB"), (2, 0, "CCC"), (1, 0, "CCC")])
    assert top_peptides(cohort, 3) == ["AAA", "CCC", "BBB"]
    with pytest.raises(ValueError):
        top_peptides(cohort, 10)


def test_peptide_presence_flags():
    cohort = _mini_cohort({1: [0, 6]}, peptides=[(1, 0, "AAA")])
    pres = peptide_presence(cohort, 1)
    assert pres.col_names == ["pres_AAA"]
    assert pres.values[pres.row_keys.index((1, 0)), 0] == 1.0
    assert pres.values[pres.row_keys.index((1, 6)), 0] == 0.0


# ---------------------------------------------------------------------------
# Supervised pairs


def _fit(cohort):
    return fit_preprocessor(to_feature_matrix(cohort))


def test_pair_enumeration_single_pair():
    cohort = _mini_cohort({1: [0, 6]})
    sset = build_supervised(cohort, _fit(cohort),
                            LagConfig(horizon_months=6, lag_depth=1,
                                      n_presence_peptides=0))
    assert sset.n_rows == 1
    assert sset.row_provenance == [(1, 0, 6)]


def test_pair_enumeration_default_months():
    cohort = _mini_cohort({1: [0, 6, 12, 24]})
    sset = build_supervised(cohort, _fit(cohort),
                            LagConfig(horizon_months=6, lag_depth=1,
                                      n_presence_peptides=0))
    # 0->6 and 6->12 exist; 12->18 and 24->30 do not
    assert [(m, t) for _, m, t in sset.row_provenance] == [(0, 6), (6, 12)]


def test_pair_enumeration_no_pairs():
    cohort = _mini_cohort({1: [0, 6, 12]})
    with pytest.raises(NoPairsProduced):
        build_supervised(cohort, _fit(cohort),
                         LagConfig(horizon_months=99, lag_depth=1,
                                   n_presence_peptides=0))


def test_feature_vector_width_default(default_cohort):
    pre = fit_preprocessor(to_feature_matrix(default_cohort))
    sset = build_supervised(default_cohort, pre, LagConfig())
    # 4 scores x 2 lags + visit_month + 3 medication + 15 presence = 27
    assert sset.inputs.shape[1] == 27
    assert len(sset.feature_names) == 27
    assert sset.feature_names[0] == "updrs_1_lag0"
    assert sset.feature_names[8] == "visit_month"
    assert sset.feature_names[9:12] == ["med_on", "med_off", "med_missing"]
    assert np.isfinite(sset.inputs).all()


def test_lag_zero_fill_for_first_visit():
    cohort = _mini_cohort({1: [0, 6]})
    sset = build_supervised(cohort, _fit(cohort),
                            LagConfig(horizon_months=6, lag_depth=2,
                                      n_presence_peptides=0))
    # the only pair starts at month 0, so lag 1 has no earlier visit
    assert (sset.inputs[0, 4:8] == 0.0).all()


def test_targets_stay_raw_scale():
    cohort = _mini_cohort({1: [0, 6]})
    sset = build_supervised(cohort, _fit(cohort),
                            LagConfig(horizon_months=6, lag_depth=1,
                                      n_presence_peptides=0))
    assert sset.targets[0].tolist() == [5.0, 6.0, 20.0, 1.0]
    assert sset.target_mask.all()


# ---------------------------------------------------------------------------
# Splitting


def test_split_patients_deterministic_and_disjoint():
    ids = list(range(100))
    tr1, va1 = split_patients(ids, 0.2, seed=3)
    tr2, va2 = split_patients(ids, 0.2, seed=3)
    assert tr1 == tr2 and va1 == va2
    assert not (tr1 & va1)
    assert tr1 | va1 == set(ids)
    assert len(va1) == 20
    tr3, va3 = split_patients(ids, 0.2, seed=4)
    assert va3 != va1


def test_split_patients_errors():
    with pytest.raises(TooFewPatients):
        split_patients([1], 0.2, seed=0)
    with pytest.raises(ValueError):
        split_patients([1, 2], 1.5, seed=0)


def test_split_is_patient_granular(default_cohort):
    pre = fit_preprocessor(to_feature_matrix(default_cohort))
    sset = build_supervised(default_cohort, pre, LagConfig())
    tr, va = split(sset, 0.2, seed=0)
    assert tr.n_rows + va.n_rows == sset.n_rows
    assert not (set(tr.patients()) & set(va.patients()))
