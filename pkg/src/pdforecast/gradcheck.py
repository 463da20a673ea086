"""Self-contained gradient checks per layer family and full forecaster."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kan import BSplineConfig, KanLayer
from .models import (KanForecaster, KanForecasterConfig, LstmForecaster,
                     LstmForecasterConfig)
from .nncore import (LSTM, Attention, BatchNorm, GradCheckReport, Linear,
                     grad_check, mse_loss)

FAMILIES = ("linear", "batchnorm", "lstm", "attention", "kan_layer",
            "lstm_forecaster", "kan_forecaster")


class _LayerModel:
    """Adapter running one layer under the grad_check model contract."""

    def __init__(self, layer, training: bool = True):
        self.layer = layer
        self.training = training

    @property
    def params(self):
        return self.layer.params

    def _forward(self, x):
        if isinstance(self.layer, BatchNorm):
            return self.layer.forward(x, self.training)
        return self.layer.forward(x)

    def loss(self, x, y, mask=None):
        return mse_loss(self._forward(x), y, mask)[0]

    def loss_and_grad(self, x, y, mask=None):
        self.layer.zero_grad()
        loss, dout = mse_loss(self._forward(x), y, mask)
        self.layer.backward(dout)
        return loss, self.layer.grads


def _family_instance(family: str, seed: int):
    rng = np.random.default_rng(seed)
    if family == "linear":
        model = _LayerModel(Linear(3, 4, rng))
        x = rng.normal(size=(5, 3))
        y = rng.normal(size=(5, 4))
    elif family == "batchnorm":
        model = _LayerModel(BatchNorm(4))
        model.layer.params["gamma"][:] = rng.uniform(0.5, 1.5, size=4)
        model.layer.params["beta"][:] = rng.normal(size=4)
        x = rng.normal(size=(6, 4))
        y = rng.normal(size=(6, 4))
    elif family == "lstm":
        model = _LayerModel(LSTM(3, 4, bidirectional=True, rng=rng))
        x = rng.normal(size=(3, 5, 3))
        y = rng.normal(size=(3, 5, 8))
    elif family == "attention":
        model = _LayerModel(Attention(5, rng))
        x = rng.normal(size=(3, 4, 5))
        y = rng.normal(size=(3, 5))
    elif family == "kan_layer":
        cfg = BSplineConfig(grid_size=5, spline_order=3)
        model = _LayerModel(KanLayer(3, 2, cfg, rng))
        x = rng.uniform(-2.0, 2.0, size=(4, 3))
        y = rng.normal(size=(4, 2))
    elif family == "lstm_forecaster":
        cfg = LstmForecasterConfig(input_width=6, hidden=3, bidirectional=True,
                                   attention_width=6, head_widths=(5, 4, 3),
                                   dropout=0.0)
        model = LstmForecaster(cfg, seed=seed, lag_depth=2)
        x = rng.normal(size=(4, 10))      # 2 lag blocks of 4 + 2 context
        y = rng.normal(size=(4, 4))
    elif family == "kan_forecaster":
        cfg = KanForecasterConfig(widths=(5, 4, 3), grid_size=4,
                                  spline_order=3, dropout=0.0)
        model = KanForecaster(cfg, seed=seed)
        x = rng.uniform(-2.0, 2.0, size=(4, 5))
        y = rng.normal(size=(4, 4))
    else:
        raise ValueError(f"unknown family {family!r}")
    return model, x, y


def check_family(family: str, seed: int, eps: float = 1e-5,
                 tol: float = 1e-4) -> GradCheckReport:
    model, x, y = _family_instance(family, seed)
    return grad_check(model, x, y, eps=eps, tol=tol)


@dataclass
class FamilyResult:
    family: str
    max_rel_error: float
    passed: bool


def run_suite(seeds, eps: float = 1e-5, tol: float = 1e-4,
              families=FAMILIES) -> list[FamilyResult]:
    results = []
    for family in families:
        worst = 0.0
        ok = True
        for seed in seeds:
            report = check_family(family, seed, eps=eps, tol=tol)
            worst = max(worst, max(report.max_rel_error.values()))
            ok = ok and report.passed
        results.append(FamilyResult(family, worst, ok))
    return results
