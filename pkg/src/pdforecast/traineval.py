"""Training loop with early stopping, and SMAPE/MSE/RMSE reporting.

The loss is masked MSE on standardized targets; report metrics are computed
in the original score scale, so loss-curve values and table metrics are
different quantities by design.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import UPDRS_COLS
from .errors import (EmptyDataset, LengthMismatch, NoObservedTargets,
                     NonFiniteLoss)
from .features import SupervisedSet
from .nncore import AdamState, adam_step, mse_loss


@dataclass
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.0
    max_epochs: int = 500
    patience: int = 50
    batch_size: int = 32
    seed: int = 0
    dropout: float = 0.2

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0 < self.patience <= self.max_epochs:
            raise ValueError("need 0 < patience <= max_epochs")


LSTM_TRAIN_DEFAULTS = TrainConfig(lr=1e-3, weight_decay=1e-5)
KAN_TRAIN_DEFAULTS = TrainConfig(lr=5e-4, weight_decay=1e-5)


# ---------------------------------------------------------------------------
# Metrics


def _check_pair(actual, predicted):
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape:
        raise LengthMismatch(f"{a.shape} vs {p.shape}")
    if a.size == 0:
        raise EmptyDataset("empty metric input")
    return a, p


def smape(actual, predicted) -> float:
    """Symmetric MAPE in [0, 200]; zero-denominator terms contribute 0."""
    a, p = _check_pair(actual, predicted)
    denom = np.abs(a) + np.abs(p)
    terms = np.zeros_like(denom)
    nz = denom > 0
    terms[nz] = 2.0 * np.abs(a[nz] - p[nz]) / denom[nz]
    return float(100.0 * terms.mean())


def mse(actual, predicted) -> float:
    a, p = _check_pair(actual, predicted)
    return float(np.mean((a - p) ** 2))


def rmse(actual, predicted) -> float:
    return math.sqrt(mse(actual, predicted))


@dataclass
class Metrics:
    smape: float
    mse: float
    rmse: float


# ---------------------------------------------------------------------------
# Target scaling


@dataclass
class TargetScaler:
    means: np.ndarray
    stds: np.ndarray

    def transform(self, targets: np.ndarray) -> np.ndarray:
        safe = np.where(self.stds > 0, self.stds, 1.0)
        return (targets - self.means) / safe

    def inverse(self, z: np.ndarray) -> np.ndarray:
        safe = np.where(self.stds > 0, self.stds, 1.0)
        return z * safe + self.means

    def to_dict(self):
        return {"means": self.means.tolist(), "stds": self.stds.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["means"]), np.asarray(d["stds"]))


def fit_target_scaler(train_set: SupervisedSet) -> TargetScaler:
    means = np.zeros(4)
    stds = np.ones(4)
    for k in range(4):
        obs = train_set.targets[train_set.target_mask[:, k], k]
        if obs.size:
            means[k] = obs.mean()
            stds[k] = obs.std() if obs.std() > 0 else 1.0
    return TargetScaler(means, stds)


# ---------------------------------------------------------------------------
# Early stopping


class EarlyStopper:
    """Stop after `patience` consecutive epochs without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_val = math.inf
        self.best_epoch = 0
        self._since_best = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best_val:
            self.best_val = val_loss
            self.best_epoch = epoch
            self._since_best = 0
            return True
        self._since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self._since_best >= self.patience


@dataclass
class History:
    entries: list[tuple[float, float]] = field(default_factory=list)
    best_epoch: int = 0                 # 1-based
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        for i, (tr, va) in enumerate(self.entries, start=1):
            lines.append(f"{i},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Training


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    batches = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) < 2:
        batches[-2] = np.concatenate([batches[-2], batches[-1]])
        batches.pop()
    return batches


def train(model, train_set: SupervisedSet, val_set: SupervisedSet,
          config: TrainConfig, scaler: TargetScaler | None = None
          ) -> tuple[object, History]:
    """Mini-batch Adam with early stopping; returns the best-val snapshot."""
    if train_set.n_rows == 0 or val_set.n_rows == 0:
        raise EmptyDataset("train and validation sets must be non-empty")
    scaler = scaler or fit_target_scaler(train_set)

    x_tr = train_set.inputs
    y_tr = np.where(train_set.target_mask,
                    scaler.transform(train_set.targets), 0.0)
    m_tr = train_set.target_mask
    x_va = val_set.inputs
    y_va = np.where(val_set.target_mask,
                    scaler.transform(val_set.targets), 0.0)
    m_va = val_set.target_mask

    adam = AdamState(lr=config.lr, weight_decay=config.weight_decay)
    stopper = EarlyStopper(config.patience)
    history = History()
    best_params = model.snapshot()

    for epoch in range(1, config.max_epochs + 1):
        shuffle_rng = np.random.default_rng([config.seed, epoch])
        dropout_rng = np.random.default_rng([config.seed, epoch, 1])
        sq_sum = 0.0
        n_obs = 0
        for idx in _batches(train_set.n_rows, config.batch_size, shuffle_rng):
            model.zero_grad()
            pred = model.forward(x_tr[idx], training=True, rng=dropout_rng)
            loss, dpred = mse_loss(pred, y_tr[idx], m_tr[idx])
            model.backward(dpred)
            adam_step(model.params, model.grads, adam)
            k = int(m_tr[idx].sum())
            sq_sum += loss * k
            n_obs += k
        train_loss = sq_sum / n_obs

        val_pred = model.forward(x_va, training=False)
        val_loss = mse_loss(val_pred, y_va, m_va)[0]
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NonFiniteLoss(
                f"epoch {epoch}: train={train_loss}, val={val_loss}")
        history.entries.append((float(train_loss), float(val_loss)))

        if stopper.update(epoch, val_loss):
            best_params = model.snapshot()
        if stopper.should_stop:
            history.stopped_early = True
            break

    history.best_epoch = stopper.best_epoch
    model.set_params(best_params)
    return model, history


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalReport:
    per_target: dict[str, Metrics]
    average: Metrics
    predictions: list[tuple[str, float, float]]   # (target, actual, predicted)

    def to_csv(self) -> str:
        lines = ["target,smape,mse,rmse"]
        for name in UPDRS_COLS:
            m = self.per_target[name]
            lines.append(f"{name},{m.smape!r},{m.mse!r},{m.rmse!r}")
        a = self.average
        lines.append(f"Average,{a.smape!r},{a.mse!r},{a.rmse!r}")
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        lines = [f"{'Target':<10} {'SMAPE':>10} {'MSE':>10} {'RMSE':>10}"]
        for name in UPDRS_COLS:
            m = self.per_target[name]
            lines.append(f"{name:<10} {m.smape:>10.2f} {m.mse:>10.2f} "
                         f"{m.rmse:>10.3f}")
        a = self.average
        lines.append(f"{'Average':<10} {a.smape:>10.2f} {a.mse:>10.2f} "
                     f"{a.rmse:>10.3f}")
        return "\n".join(lines)

    def predictions_csv(self) -> str:
        lines = ["target,actual,predicted"]
        for name, actual, predicted in self.predictions:
            lines.append(f"{name},{actual!r},{predicted!r}")
        return "\n".join(lines) + "\n"


def evaluate(model, val_set: SupervisedSet, scaler: TargetScaler) -> EvalReport:
    """Metrics per UPDRS target in the original score scale."""
    pred_std = model.forward(val_set.inputs, training=False)
    pred = scaler.inverse(pred_std)

    per_target = {}
    predictions = []
    for k, name in enumerate(UPDRS_COLS):
        obs = val_set.target_mask[:, k]
        if not obs.any():
            raise NoObservedTargets(name)
        actual = val_set.targets[obs, k]
        predicted = pred[obs, k]
        per_target[name] = Metrics(smape(actual, predicted),
                                   mse(actual, predicted),
                                   rmse(actual, predicted))
        predictions.extend((name, float(a), float(p))
                           for a, p in zip(actual, predicted))

    average = Metrics(*(float(np.mean([getattr(per_target[n], f)
                                       for n in UPDRS_COLS]))
                        for f in ("smape", "mse", "rmse")))
    return EvalReport(per_target, average, predictions)
