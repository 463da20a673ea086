import numpy as np
import pytest

from pdforecast.errors import InvalidConfig
from pdforecast.gradcheck import FAMILIES, check_family, run_suite
from pdforecast.models import (KanForecaster, KanForecasterConfig,
                               LstmForecaster, LstmForecasterConfig,
                               summarize)


def test_lstm_config_validation():
    with pytest.raises(InvalidConfig):
        LstmForecasterConfig(input_width=10, hidden=64, bidirectional=True,
                             attention_width=64).validate()
    with pytest.raises(InvalidConfig):
        LstmForecasterConfig(input_width=0).validate()
    LstmForecasterConfig(input_width=415).validate()


def test_lstm_reference_parameter_total():
    model = LstmForecaster(LstmForecasterConfig(input_width=415), seed=0,
                           lag_depth=1)
    summary = summarize(model)
    assert summary.total == 273941
    counts = {stage: c for stage, _, c in summary.rows}
    assert counts["LSTM"] == 246272
    assert counts["Attention"] == 16641
    assert counts["FC 64->32"] == 2080
    assert counts["FC 32->16"] == 528


def test_kan_reference_parameter_total():
    model = KanForecaster(KanForecasterConfig(), seed=0)
    assert summarize(model).total == 330181


def test_lstm_sequence_reshape_round_trip(rng):
    cfg = LstmForecasterConfig(input_width=6, hidden=3, bidirectional=True,
                               attention_width=6, head_widths=(5, 4, 3),
                               dropout=0.0)
    model = LstmForecaster(cfg, seed=0, lag_depth=2)
    x = rng.normal(size=(3, 10))    # 2 lag blocks of 4 + 2 context features
    seq = model._to_sequence(x)
    assert seq.shape == (3, 2, 6)
    # newest visit (lag 0) occupies the last timestep
    np.testing.assert_array_equal(seq[:, 1, :4], x[:, 0:4])
    np.testing.assert_array_equal(seq[:, 0, :4], x[:, 4:8])
    # shared context repeats on every step
    np.testing.assert_array_equal(seq[:, 0, 4:], x[:, 8:])
    np.testing.assert_array_equal(seq[:, 1, 4:], x[:, 8:])


def test_forward_shapes_and_determinism(rng):
    cfg = LstmForecasterConfig(input_width=6, hidden=3, bidirectional=True,
                               attention_width=6, head_widths=(5, 4, 3))
    model = LstmForecaster(cfg, seed=0, lag_depth=2)
    x = rng.normal(size=(5, 10))
    a = model.forward(x, training=False)
    b = model.forward(x, training=False)
    assert a.shape == (5, 4)
    np.testing.assert_array_equal(a, b)


def test_snapshot_set_params_round_trip(rng):
    model = KanForecaster(KanForecasterConfig(widths=(5, 4), grid_size=4),
                          seed=0)
    x = rng.uniform(-2.0, 2.0, size=(6, 5))
    before = model.forward(x)
    snap = model.snapshot()
    for p in model.params.values():
        p += 0.1
    assert not np.allclose(model.forward(x), before)
    model.set_params(snap)
    np.testing.assert_array_equal(model.forward(x), before)


def test_dropout_only_fires_with_rng(rng):
    cfg = KanForecasterConfig(widths=(5, 4), grid_size=4, dropout=0.5)
    model = KanForecaster(cfg, seed=0)
    x = rng.uniform(-2.0, 2.0, size=(6, 5))
    # training without an rng (the finite-difference path) is deterministic
    np.testing.assert_array_equal(model.forward(x, training=True),
                                  model.forward(x, training=True))


def test_gradcheck_families_cover_both_forecasters():
    assert "lstm_forecaster" in FAMILIES
    assert "kan_forecaster" in FAMILIES
    assert {"linear", "batchnorm", "lstm", "attention", "kan_layer"} \
        <= set(FAMILIES)


def test_check_family_single_seed_passes():
    for fam in FAMILIES:
        report = check_family(fam, seed=0)
        assert report.passed, (fam, report.max_rel_error)


def test_run_suite_aggregates():
    results = run_suite([0, 1], families=("linear", "attention"))
    assert [r.family for r in results] == ["linear", "attention"]
    assert all(r.passed for r in results)
