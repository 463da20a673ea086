"""The two forecasters behind one model contract.

Both models consume the flat supervised feature vector and emit 4 UPDRS
predictions. The attention-LSTM reshapes the lag blocks into a short time
axis (one step per lagged visit, each step = that visit's UPDRS slice plus
the shared context features); the KAN consumes the vector as-is.

Model contract used by training/evaluation and the gradient checker:
``params``/``grads`` dicts, ``forward(x, training, rng)``,
``loss(x, y, mask)`` and ``loss_and_grad(x, y, mask)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig
from .kan import BSplineConfig, KanNetwork, build_kan
from .nncore import (LSTM, Attention, BatchNorm, Dropout, Linear, mse_loss)


@dataclass
class LstmForecasterConfig:
    input_width: int                   # per-timestep feature width
    hidden: int = 64
    bidirectional: bool = True
    attention_width: int = 128
    head_widths: tuple[int, int, int] = (64, 32, 16)
    output: int = 4
    dropout: float = 0.2

    def validate(self):
        if self.input_width < 1:
            raise InvalidConfig("input_width must be >= 1")
        expected = self.hidden * (2 if self.bidirectional else 1)
        if self.attention_width != expected:
            raise InvalidConfig(
                f"attention_width {self.attention_width} != lstm output {expected}")
        if self.output != 4:
            raise InvalidConfig("output must be 4 (UPDRS parts)")


@dataclass
class KanForecasterConfig:
    widths: tuple[int, ...] = (27, 45, 91, 183)
    grid_size: int = 10
    spline_order: int = 3
    output: int = 4
    dropout: float = 0.2

    def validate(self):
        if len(self.widths) < 1 or any(w < 1 for w in self.widths):
            raise InvalidConfig(f"bad widths {self.widths}")
        if self.output != 4:
            raise InvalidConfig("output must be 4 (UPDRS parts)")


class _ModelBase:
    """Shared parameter plumbing over an ordered dict of named layers."""

    def __init__(self):
        self._layers: dict[str, object] = {}

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr
                for ln, layer in self._layers.items()
                for pn, arr in layer.params.items()}

    @property
    def grads(self) -> dict[str, np.ndarray]:
        return {f"{ln}.{pn}": arr
                for ln, layer in self._layers.items()
                for pn, arr in layer.grads.items()}

    def zero_grad(self):
        for layer in self._layers.values():
            layer.zero_grad()

    def set_params(self, values: dict[str, np.ndarray]) -> None:
        own = self.params
        for name, arr in values.items():
            own[name][...] = arr

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def loss(self, x, y, mask=None) -> float:
        pred = self.forward(x, training=True)
        return mse_loss(pred, y, mask)[0]

    def loss_and_grad(self, x, y, mask=None):
        self.zero_grad()
        pred = self.forward(x, training=True)
        loss, dpred = mse_loss(pred, y, mask)
        self.backward(dpred)
        return loss, self.grads


class LstmForecaster(_ModelBase):
    """(bi)LSTM -> dropout -> additive attention -> tanh MLP head -> 4 scores."""

    def __init__(self, config: LstmForecasterConfig, seed: int = 0,
                 lag_depth: int = 1):
        super().__init__()
        config.validate()
        self.config = config
        self.lag_depth = lag_depth
        rng = np.random.default_rng(seed)
        h0, h1, h2 = config.head_widths
        self.lstm = LSTM(config.input_width, config.hidden,
                         config.bidirectional, rng)
        self.drop = Dropout(config.dropout)
        self.att = Attention(config.attention_width, rng)
        self.fc_a = Linear(config.attention_width, h0, rng)
        self.fc_b = Linear(h0, h1, rng)
        self.bn_b = BatchNorm(h1)
        self.fc_c = Linear(h1, h2, rng)
        self.bn_c = BatchNorm(h2)
        self.out = Linear(h2, config.output, rng)
        self._layers = {"lstm": self.lstm, "att": self.att,
                        "fc_a": self.fc_a, "fc_b": self.fc_b, "bn_b": self.bn_b,
                        "fc_c": self.fc_c, "bn_c": self.bn_c, "out": self.out}

    def _to_sequence(self, x: np.ndarray) -> np.ndarray:
        """Lag blocks become the time axis, oldest visit first."""
        n, d = x.shape
        depth = self.lag_depth
        ctx = x[:, 4 * depth:]
        seq = np.empty((n, depth, 4 + ctx.shape[1]))
        for step in range(depth):
            lag = depth - 1 - step
            seq[:, step, :4] = x[:, 4 * lag:4 * lag + 4]
            seq[:, step, 4:] = ctx
        return seq

    def _sequence_grad(self, dseq: np.ndarray, d_flat: int) -> np.ndarray:
        n = dseq.shape[0]
        depth = self.lag_depth
        dx = np.zeros((n, d_flat))
        for step in range(depth):
            lag = depth - 1 - step
            dx[:, 4 * lag:4 * lag + 4] = dseq[:, step, :4]
            dx[:, 4 * depth:] += dseq[:, step, 4:]
        return dx

    def forward(self, x: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        self._d_flat = x.shape[1]
        seq = self._to_sequence(x)
        h = self.lstm.forward(seq)
        h = self.drop.forward(h, training and rng is not None, rng)
        ctx = self.att.forward(h)
        a = self.fc_a.forward(ctx)
        self._t1 = np.tanh(a)
        b = self.bn_b.forward(self.fc_b.forward(self._t1), training)
        self._t2 = np.tanh(b)
        c = self.bn_c.forward(self.fc_c.forward(self._t2), training)
        self._t3 = np.tanh(c)
        return self.out.forward(self._t3)

    def backward(self, dpred: np.ndarray) -> np.ndarray:
        d = self.out.backward(dpred) * (1.0 - self._t3 ** 2)
        d = self.fc_c.backward(self.bn_c.backward(d)) * (1.0 - self._t2 ** 2)
        d = self.fc_b.backward(self.bn_b.backward(d)) * (1.0 - self._t1 ** 2)
        d = self.fc_a.backward(d)
        dh = self.att.backward(d)
        dh = self.drop.backward(dh)
        dseq = self.lstm.backward(dh)
        return self._sequence_grad(dseq, self._d_flat)

    def stage_counts(self) -> list[tuple[str, int, int]]:
        cfg = self.config
        h0, h1, h2 = cfg.head_widths
        return [
            ("LSTM", cfg.hidden, self.lstm.param_count()),
            ("Attention", cfg.attention_width, self.att.param_count()),
            (f"FC {cfg.attention_width}->{h0}", cfg.attention_width,
             self.fc_a.param_count()),
            (f"FC {h0}->{h1}", h0, self.fc_b.param_count()),
            (f"BatchNorm {h1}", h1, self.bn_b.param_count()),
            (f"FC {h1}->{h2}", h1, self.fc_c.param_count()),
            (f"BatchNorm {h2}", h2, self.bn_c.param_count()),
            (f"FC {h2}->{cfg.output}", h2, self.out.param_count()),
        ]


class KanForecaster(_ModelBase):
    def __init__(self, config: KanForecasterConfig, seed: int = 0):
        super().__init__()
        config.validate()
        self.config = config
        spline = BSplineConfig(grid_size=config.grid_size,
                               spline_order=config.spline_order)
        self.network: KanNetwork = build_kan(list(config.widths), spline,
                                             seed, out_dim=config.output,
                                             dropout_rate=config.dropout)

    @property
    def params(self):
        return self.network.params

    @property
    def grads(self):
        return self.network.grads

    def zero_grad(self):
        self.network.zero_grad()

    def forward(self, x: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        return self.network.forward(x, training and rng is not None, rng)

    def backward(self, dpred: np.ndarray) -> np.ndarray:
        return self.network.backward(dpred)

    def stage_counts(self) -> list[tuple[str, int, int]]:
        return self.network.stage_counts()


def build_lstm_forecaster(config: LstmForecasterConfig, seed: int = 0,
                          lag_depth: int = 1) -> LstmForecaster:
    return LstmForecaster(config, seed=seed, lag_depth=lag_depth)


def build_kan_forecaster(config: KanForecasterConfig,
                         seed: int = 0) -> KanForecaster:
    return KanForecaster(config, seed=seed)


@dataclass
class ModelSummary:
    rows: list[tuple[str, int, int]]   # (stage, width, parameter count)
    total: int = field(init=False)

    def __post_init__(self):
        self.total = sum(r[2] for r in self.rows)

    def render_text(self) -> str:
        name_w = max(len("Stage"), *(len(r[0]) for r in self.rows))
        lines = [f"{'Stage':<{name_w}}  {'Width':>6}  {'Params':>10}"]
        for stage, width, count in self.rows:
            lines.append(f"{stage:<{name_w}}  {width:>6}  {count:>10,}")
        lines.append(f"{'Total':<{name_w}}  {'':>6}  {self.total:>10,}")
        return "\n".join(lines)

    def to_csv(self) -> str:
        lines = ["stage,width,parameters"]
        for stage, width, count in self.rows:
            lines.append(f"{stage},{width},{count}")
        lines.append(f"Total,,{self.total}")
        return "\n".join(lines) + "\n"


def summarize(model) -> ModelSummary:
    """Per-stage parameter table; total always equals the live tensor sizes."""
    summary = ModelSummary(model.stage_counts())
    live = sum(p.size for p in model.params.values())
    assert summary.total == live, (summary.total, live)
    return summary
