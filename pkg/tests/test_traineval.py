import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdforecast.errors import EmptyDataset, LengthMismatch
from pdforecast.features import SupervisedSet
from pdforecast.models import KanForecaster, KanForecasterConfig
from pdforecast.traineval import (EarlyStopper, TargetScaler, TrainConfig,
                                  evaluate, fit_target_scaler, mse, rmse,
                                  smape, train)


# ---------------------------------------------------------------------------
# Metrics


def test_smape_known_values():
    assert smape([1.0], [3.0]) == pytest.approx(100.0)
    assert smape([5.0], [5.0]) == 0.0
    assert smape([0.0], [7.0]) == pytest.approx(200.0)
    assert smape([0.0], [0.0]) == 0.0      # zero-denominator term counts as 0


def test_mse_rmse_known_values():
    assert mse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(2.0)
    assert rmse([1.0, 2.0], [1.0, 4.0]) == pytest.approx(math.sqrt(2.0),
                                                         abs=1e-12)


def test_metric_input_checks():
    with pytest.raises(LengthMismatch):
        smape([1.0, 2.0], [1.0])
    with pytest.raises(EmptyDataset):
        mse([], [])


@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1,
                max_size=50),
       st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1,
                max_size=50))
@settings(max_examples=100, deadline=None)
def test_smape_bounded_and_symmetric(a, b):
    n = min(len(a), len(b))
    a, b = a[:n], b[:n]
    s = smape(a, b)
    assert 0.0 <= s <= 200.0
    assert s == pytest.approx(smape(b, a), abs=1e-9)


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=50, deadline=None)
def test_rmse_squared_equals_mse(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=20)
    b = rng.normal(size=20)
    assert rmse(a, b) ** 2 == pytest.approx(mse(a, b), rel=1e-12)


# ---------------------------------------------------------------------------
# Target scaling


def test_target_scaler_round_trip(rng):
    scaler = TargetScaler(np.array([1.0, 2.0, 3.0, 4.0]),
                          np.array([1.0, 2.0, 0.0, 4.0]))
    y = rng.normal(size=(6, 4))
    np.testing.assert_allclose(scaler.inverse(scaler.transform(y)), y,
                               atol=1e-12)
    back = TargetScaler.from_dict(scaler.to_dict())
    np.testing.assert_array_equal(back.means, scaler.means)


def _toy_set(rng, n=60, d=6):
    inputs = rng.uniform(-2.0, 2.0, size=(n, d))
    w = rng.normal(size=(d, 4))
    targets = inputs @ w + 0.05 * rng.normal(size=(n, 4)) + 10.0
    mask = np.ones((n, 4), dtype=bool)
    mask[0, 3] = False
    return SupervisedSet(inputs, targets, mask,
                         [(i, 0, 6) for i in range(n)],
                         [f"f{j}" for j in range(d)], lag_depth=1)


def test_fit_target_scaler_uses_observed_only(rng):
    sset = _toy_set(rng)
    scaler = fit_target_scaler(sset)
    obs = sset.targets[sset.target_mask[:, 3], 3]
    assert scaler.means[3] == pytest.approx(obs.mean())
    assert scaler.stds[3] == pytest.approx(obs.std())


# ---------------------------------------------------------------------------
# Early stopping


def test_early_stopper_contract_60_then_flat():
    stopper = EarlyStopper(patience=50)
    epoch = 0
    losses = [1.0 / (e + 1) for e in range(60)] + [2.0] * 1000
    for epoch, loss in enumerate(losses, start=1):
        stopper.update(epoch, loss)
        if stopper.should_stop:
            break
    assert epoch == 110
    assert stopper.best_epoch == 60


def test_early_stopper_requires_strict_improvement():
    stopper = EarlyStopper(patience=2)
    assert stopper.update(1, 1.0)
    assert not stopper.update(2, 1.0)      # ties do not count
    assert not stopper.should_stop
    stopper.update(3, 1.0)
    assert stopper.should_stop
    assert stopper.best_epoch == 1


# ---------------------------------------------------------------------------
# Training loop


def test_train_learns_toy_problem(rng):
    sset = _toy_set(rng, n=80)
    tr = sset.subset(np.arange(60))
    va = sset.subset(np.arange(60, 80))
    model = KanForecaster(KanForecasterConfig(widths=(6, 8), grid_size=5,
                                              dropout=0.0), seed=0)
    model, history = train(model, tr, va,
                           TrainConfig(lr=5e-3, max_epochs=120, patience=120,
                                       seed=0))
    first, last = history.entries[0][1], min(v for _, v in history.entries)
    assert last < 0.5 * first
    assert history.best_epoch >= 1


def test_train_is_deterministic(rng):
    sset = _toy_set(rng)
    tr = sset.subset(np.arange(40))
    va = sset.subset(np.arange(40, 60))
    cfg = TrainConfig(lr=1e-3, max_epochs=10, patience=10, seed=3)
    runs = []
    for _ in range(2):
        model = KanForecaster(KanForecasterConfig(widths=(6, 5), grid_size=4),
                              seed=1)
        _, history = train(model, tr, va, cfg)
        runs.append(history.entries)
    assert runs[0] == runs[1]


def test_train_returns_best_snapshot(rng):
    sset = _toy_set(rng)
    tr = sset.subset(np.arange(40))
    va = sset.subset(np.arange(40, 60))
    model = KanForecaster(KanForecasterConfig(widths=(6, 5), grid_size=4,
                                              dropout=0.0), seed=1)
    scaler = fit_target_scaler(tr)
    model, history = train(model, tr, va,
                           TrainConfig(lr=5e-3, max_epochs=40, patience=40,
                                       seed=0), scaler=scaler)
    from pdforecast.nncore import mse_loss
    y = np.where(va.target_mask, scaler.transform(va.targets), 0.0)
    val_loss = mse_loss(model.forward(va.inputs), y, va.target_mask)[0]
    best = min(v for _, v in history.entries)
    assert val_loss == pytest.approx(best, abs=1e-9)


def test_train_rejects_empty_sets(rng):
    sset = _toy_set(rng)
    empty = sset.subset(np.array([], dtype=int))
    model = KanForecaster(KanForecasterConfig(widths=(6, 5), grid_size=4),
                          seed=0)
    with pytest.raises(EmptyDataset):
        train(model, empty, sset, TrainConfig())


def test_evaluate_report_structure(rng):
    sset = _toy_set(rng)
    model = KanForecaster(KanForecasterConfig(widths=(6, 5), grid_size=4),
                          seed=0)
    scaler = fit_target_scaler(sset)
    report = evaluate(model, sset, scaler)
    assert set(report.per_target) == {"updrs_1", "updrs_2", "updrs_3",
                                      "updrs_4"}
    for m in report.per_target.values():
        assert m.rmse ** 2 == pytest.approx(m.mse, rel=1e-12)
    avg = np.mean([report.per_target[k].mse for k in report.per_target])
    assert report.average.mse == pytest.approx(avg)
    csv_text = report.to_csv()
    assert csv_text.startswith("target,smape,mse,rmse\n")
    assert csv_text.rstrip().splitlines()[-1].startswith("Average,")


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(patience=600, max_epochs=500)
