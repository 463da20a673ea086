"""Minimal differentiable layers with exact analytic gradients.

Everything runs in float64; each layer caches what its backward pass needs
and exposes ``params``/``grads`` dicts of same-shaped arrays. A central
finite-difference gradient checker is the module's master oracle.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (BatchTooSmall, EmptyMask, InvalidRate, NonFiniteLoss,
                     ShapeMismatch)


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    """Parameter container; subclasses fill params/grads with matching keys."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k in self.params:
            self.grads[k] = np.zeros_like(self.params[k])

    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())


class Linear(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.params = {"W": uniform_init(rng, (out_dim, in_dim), in_dim),
                       "b": np.zeros(out_dim)}
        self.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatch(f"expected {self.in_dim} inputs, got {x.shape}")
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.grads["W"] += dout.T @ self._x
        self.grads["b"] += dout.sum(axis=0)
        return dout @ self.params["W"]


class BatchNorm(Layer):
    def __init__(self, features: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.features = features
        self.momentum = momentum
        self.eps = eps
        self.params = {"gamma": np.ones(features), "beta": np.zeros(features)}
        self.running_mean = np.zeros(features)
        self.running_var = np.ones(features)
        self.zero_grad()

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.shape[1] != self.features:
            raise ShapeMismatch(f"expected {self.features} features, got {x.shape}")
        self._training = training
        if training:
            if x.shape[0] < 2:
                raise BatchTooSmall("batchnorm needs batch >= 2 in training mode")
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            self.running_mean = (1 - self.momentum) * self.running_mean \
                + self.momentum * mu
            self.running_var = (1 - self.momentum) * self.running_var \
                + self.momentum * var
        else:
            mu, var = self.running_mean, self.running_var
        self._istd = 1.0 / np.sqrt(var + self.eps)
        self._xhat = (x - mu) * self._istd
        self._x = x
        return self.params["gamma"] * self._xhat + self.params["beta"]

    def backward(self, dout: np.ndarray) -> np.ndarray:
        self.grads["gamma"] += (dout * self._xhat).sum(axis=0)
        self.grads["beta"] += dout.sum(axis=0)
        dxhat = dout * self.params["gamma"]
        if not self._training:
            return dxhat * self._istd
        n = dout.shape[0]
        # backward through the batch statistics
        return (self._istd / n) * (n * dxhat - dxhat.sum(axis=0)
                                   - self._xhat * (dxhat * self._xhat).sum(axis=0))


class Dropout(Layer):
    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise InvalidRate(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x: np.ndarray, training: bool,
                rng: np.random.Generator | None = None) -> np.ndarray:
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate) / keep
        return x * self._mask

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return dout if self._mask is None else dout * self._mask


class LSTM(Layer):
    """(Bi)directional LSTM with gates i, f, g, o and full BPTT.

    Two bias vectors per direction (input and recurrent) so the parameter
    count matches the usual framework accounting: dirs * (4h(in+h) + 8h).
    """

    def __init__(self, input_size: int, hidden_size: int, bidirectional: bool,
                 rng: np.random.Generator):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.bidirectional = bidirectional
        h = hidden_size
        for d in self._dirs():
            self.params[f"W_ih_{d}"] = uniform_init(rng, (4 * h, input_size),
                                                    input_size)
            self.params[f"W_hh_{d}"] = uniform_init(rng, (4 * h, h), h)
            b_ih = np.zeros(4 * h)
            b_ih[h:2 * h] = 1.0          # forget-gate bias stabilization
            self.params[f"b_ih_{d}"] = b_ih
            self.params[f"b_hh_{d}"] = np.zeros(4 * h)
        self.zero_grad()

    def _dirs(self):
        return ("fwd", "bwd") if self.bidirectional else ("fwd",)

    @property
    def output_size(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)

    def _run_dir(self, x: np.ndarray, d: str):
        n, T, _ = x.shape
        h = self.hidden_size
        W_ih, W_hh = self.params[f"W_ih_{d}"], self.params[f"W_hh_{d}"]
        b = self.params[f"b_ih_{d}"] + self.params[f"b_hh_{d}"]
        order = range(T - 1, -1, -1) if d == "bwd" else range(T)
        h_t = np.zeros((n, h))
        c_t = np.zeros((n, h))
        out = np.zeros((n, T, h))
        cache = []
        for t in order:
            z = x[:, t] @ W_ih.T + h_t @ W_hh.T + b
            i = sigmoid(z[:, :h])
            f = sigmoid(z[:, h:2 * h])
            g = np.tanh(z[:, 2 * h:3 * h])
            o = sigmoid(z[:, 3 * h:])
            c_new = f * c_t + i * g
            tanh_c = np.tanh(c_new)
            out[:, t] = o * tanh_c
            cache.append((t, x[:, t], h_t, c_t, i, f, g, o, tanh_c))
            h_t, c_t = out[:, t], c_new
        return out, cache

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 3 or x.shape[2] != self.input_size:
            raise ShapeMismatch(f"expected [n, T, {self.input_size}], got {x.shape}")
        self._caches = {}
        outs = []
        for d in self._dirs():
            out, cache = self._run_dir(x, d)
            self._caches[d] = cache
            outs.append(out)
        return np.concatenate(outs, axis=2) if self.bidirectional else outs[0]

    def _backward_dir(self, dh_seq: np.ndarray, d: str) -> np.ndarray:
        h = self.hidden_size
        cache = self._caches[d]
        n = dh_seq.shape[0]
        W_ih, W_hh = self.params[f"W_ih_{d}"], self.params[f"W_hh_{d}"]
        dW_ih = np.zeros_like(W_ih)
        dW_hh = np.zeros_like(W_hh)
        db = np.zeros(4 * h)
        dx = np.zeros((n, dh_seq.shape[1], self.input_size))
        dh_next = np.zeros((n, h))
        dc_next = np.zeros((n, h))
        for t, x_t, h_prev, c_prev, i, f, g, o, tanh_c in reversed(cache):
            dh = dh_seq[:, t] + dh_next
            do = dh * tanh_c
            dc = dh * o * (1.0 - tanh_c ** 2) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                                 dg * (1 - g ** 2), do * o * (1 - o)], axis=1)
            dW_ih += dz.T @ x_t
            dW_hh += dz.T @ h_prev
            db += dz.sum(axis=0)
            dx[:, t] = dz @ W_ih
            dh_next = dz @ W_hh
            dc_next = dc * f
        self.grads[f"W_ih_{d}"] += dW_ih
        self.grads[f"W_hh_{d}"] += dW_hh
        self.grads[f"b_ih_{d}"] += db
        self.grads[f"b_hh_{d}"] += db
        return dx

    def backward(self, dout: np.ndarray) -> np.ndarray:
        h = self.hidden_size
        dx = self._backward_dir(dout[:, :, :h], "fwd")
        if self.bidirectional:
            dx = dx + self._backward_dir(dout[:, :, h:], "bwd")
        return dx


class Attention(Layer):
    """Additive attention pooling over time: s_t = v.tanh(W h_t + b_W) + b_v."""

    def __init__(self, d: int, rng: np.random.Generator):
        super().__init__()
        self.d = d
        self.params = {"W": uniform_init(rng, (d, d), d),
                       "b_W": np.zeros(d),
                       "v": uniform_init(rng, (d,), d),
                       "b_v": np.zeros(1)}
        self.zero_grad()

    def forward(self, H: np.ndarray) -> np.ndarray:
        if H.ndim != 3 or H.shape[2] != self.d:
            raise ShapeMismatch(f"expected [n, T, {self.d}], got {H.shape}")
        self._H = H
        self._u = np.tanh(H @ self.params["W"].T + self.params["b_W"])
        s = self._u @ self.params["v"] + self.params["b_v"][0]
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        self._alpha = e / e.sum(axis=1, keepdims=True)
        return np.einsum("nt,ntd->nd", self._alpha, H)

    def backward(self, dctx: np.ndarray) -> np.ndarray:
        H, u, alpha = self._H, self._u, self._alpha
        dalpha = np.einsum("nd,ntd->nt", dctx, H)
        ds = alpha * (dalpha - (alpha * dalpha).sum(axis=1, keepdims=True))
        self.grads["v"] += np.einsum("nt,ntd->d", ds, u)
        self.grads["b_v"] += np.array([ds.sum()])
        du = ds[:, :, None] * self.params["v"]
        dz = du * (1.0 - u ** 2)
        self.grads["W"] += np.einsum("ntd,nte->de", dz, H)
        self.grads["b_W"] += dz.sum(axis=(0, 1))
        return dz @ self.params["W"] + alpha[:, :, None] * dctx[:, None, :]


# ---------------------------------------------------------------------------
# Loss


def mse_loss(pred: np.ndarray, target: np.ndarray,
             mask: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean of squared errors over observed cells, with its gradient."""
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape} vs {target.shape}")
    if mask is None:
        mask = np.ones(pred.shape, dtype=bool)
    n_obs = int(mask.sum())
    if n_obs == 0:
        raise EmptyMask("no observed targets")
    diff = np.where(mask, pred - target, 0.0)
    loss = float((diff ** 2).sum() / n_obs)
    return loss, 2.0 * diff / n_obs


# ---------------------------------------------------------------------------
# Adam with decoupled weight decay


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> None:
    """One in-place Adam update with decoupled weight decay."""
    state.t += 1
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{name}: grad {g.shape} vs param {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** state.t)
        v_hat = v / (1 - state.beta2 ** state.t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: dict[str, float]
    passed: bool
    tolerance: float


def grad_check(model, x: np.ndarray, target: np.ndarray, eps: float = 1e-5,
               tol: float = 1e-4, mask: np.ndarray | None = None,
               abs_floor: float = 1e-9) -> GradCheckReport:
    """Central finite differences per scalar parameter vs analytic gradients.

    ``model`` exposes ``params`` (name -> array, mutated in place),
    ``loss(x, y, mask)`` and ``loss_and_grad(x, y, mask)``. Differences below
    ``abs_floor`` count as zero: parameters whose true gradient vanishes (for
    example a bias feeding a batch-normalized stage) leave only float64
    roundoff in the difference quotient, which would otherwise dominate the
    relative error.
    """
    loss, grads = model.loss_and_grad(x, target, mask)
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss}")
    report: dict[str, float] = {}
    for name, p in model.params.items():
        analytic = grads[name]
        worst = 0.0
        flat = p.reshape(-1)
        aflat = analytic.reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + eps
            lp = model.loss(x, target, mask)
            flat[idx] = orig - eps
            lm = model.loss(x, target, mask)
            flat[idx] = orig
            numeric = (lp - lm) / (2 * eps)
            a = aflat[idx]
            diff = abs(a - numeric)
            if diff < abs_floor:
                continue
            rel = diff / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, rel)
        report[name] = worst
    return GradCheckReport(report, all(v < tol for v in report.values()), tol)


# ---------------------------------------------------------------------------
# Checkpoints

_MAGIC = b"PDFK1\n"


def save_checkpoint(params: dict[str, np.ndarray], path) -> None:
    """Flat binary: magic, JSON manifest, then raw little-endian float64."""
    names = sorted(params)
    header = json.dumps({
        "version": 1,
        "tensors": [{"name": n, "shape": list(params[n].shape)} for n in names],
    }).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(Path(path), "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise ValueError(f"{path} is not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        out = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8")
            out[spec["name"]] = data.reshape(shape).astype(np.float64)
        return out
