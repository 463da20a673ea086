"""Kolmogorov-Arnold layers: learnable B-spline activations per edge.

Each edge (i -> j) carries base_weight * silu(x) plus a spline correction
scaler * sum_c coeff_c * B_c(x) over a uniform knot grid. Basis functions come
from the Cox-de Boor recursion; inputs outside the domain are clamped to the
domain edge (inputs are standardized, domain defaults to [-3, 3]).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidWidths, ShapeMismatch
from .nncore import Layer, Linear, Dropout, sigmoid, uniform_init


@dataclass
class BSplineConfig:
    grid_size: int = 10
    spline_order: int = 3
    grid_min: float = -3.0
    grid_max: float = 3.0

    def __post_init__(self):
        if self.grid_size < 1:
            raise ValueError("grid_size must be >= 1")
        if self.spline_order < 0:
            raise ValueError("spline_order must be >= 0")
        if not self.grid_min < self.grid_max:
            raise ValueError("grid_min must be < grid_max")

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.spline_order

    def knots(self) -> np.ndarray:
        g, k = self.grid_size, self.spline_order
        h = (self.grid_max - self.grid_min) / g
        return self.grid_min + (np.arange(g + 2 * k + 1) - k) * h


def bspline_basis(x, config: BSplineConfig,
                  with_derivative: bool = False):
    """Cox-de Boor basis values (and optional d/dx) for each point in x.

    Returns an array shaped like x with a trailing axis of G+k basis values.
    Out-of-domain points are clamped, so their derivative is zero.
    """
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape
    xf = x.reshape(-1)
    t = config.knots()
    g, k = config.grid_size, config.spline_order

    inside = (xf >= config.grid_min) & (xf <= config.grid_max)
    xc = np.clip(xf, config.grid_min, config.grid_max)

    # degree 0: half-open interval indicators, closing the last interior cell
    b = ((xc[:, None] >= t[None, :-1]) & (xc[:, None] < t[None, 1:])).astype(np.float64)
    at_max = xc == config.grid_max
    if at_max.any():
        b[at_max] = 0.0
        b[at_max, k + g - 1] = 1.0

    prev = None
    for r in range(1, k + 1):
        prev = b
        left = (xc[:, None] - t[None, :-(r + 1)]) / (t[r:-1] - t[:-(r + 1)])
        right = (t[None, r + 1:] - xc[:, None]) / (t[r + 1:] - t[1:-r])
        b = left * b[:, :-1] + right * b[:, 1:]

    basis = b.reshape(*shape, config.n_basis)
    if not with_derivative:
        return basis

    if k == 0:
        deriv = np.zeros_like(b)
    else:
        # d/dx B_{j,k} = k/(t_{j+k}-t_j) B_{j,k-1} - k/(t_{j+k+1}-t_{j+1}) B_{j+1,k-1}
        left = k / (t[k:-1] - t[:-(k + 1)])
        right = k / (t[k + 1:] - t[1:-k])
        deriv = left * prev[:, :-1] - right * prev[:, 1:]
        deriv[~inside] = 0.0
    return basis, deriv.reshape(*shape, config.n_basis)


class KanLayer(Layer):
    def __init__(self, in_dim: int, out_dim: int, config: BSplineConfig,
                 rng: np.random.Generator):
        super().__init__()
        self.in_dim, self.out_dim = in_dim, out_dim
        self.config = config
        c = config.n_basis
        self.params = {
            "spline_coeffs": rng.normal(0.0, 0.1 / np.sqrt(c),
                                        size=(out_dim, in_dim, c)),
            "base_weight": uniform_init(rng, (out_dim, in_dim), in_dim),
            "spline_scaler": np.ones((out_dim, in_dim)),
        }
        self.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ShapeMismatch(f"expected [n, {self.in_dim}], got {x.shape}")
        self._x = x
        self._sig = sigmoid(x)
        self._silu = x * self._sig
        self._B, self._dB = bspline_basis(x, self.config, with_derivative=True)
        # per-edge spline values, kept for the scaler gradient
        self._sval = np.einsum("oic,nic->noi", self.params["spline_coeffs"],
                               self._B)
        return self._silu @ self.params["base_weight"].T \
            + np.einsum("noi,oi->no", self._sval, self.params["spline_scaler"])

    def backward(self, dout: np.ndarray) -> np.ndarray:
        scaler = self.params["spline_scaler"]
        self.grads["base_weight"] += dout.T @ self._silu
        self.grads["spline_scaler"] += np.einsum("no,noi->oi", dout, self._sval)
        self.grads["spline_coeffs"] += \
            np.einsum("no,nic->oic", dout, self._B) * scaler[:, :, None]

        dsilu = self._sig * (1.0 + self._x * (1.0 - self._sig))
        dx = (dout @ self.params["base_weight"]) * dsilu
        dsv = np.einsum("oic,nic->noi", self.params["spline_coeffs"], self._dB)
        dx += np.einsum("no,noi,oi->ni", dout, dsv, scaler)
        return dx


class KanNetwork:
    """Stack of KAN layers with inter-layer dropout and a linear output head."""

    def __init__(self, layers: list[KanLayer], head: Linear,
                 dropout_rate: float = 0.2):
        self.layers = layers
        self.head = head
        self.dropouts = [Dropout(dropout_rate) for _ in layers]

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].in_dim] + [l.out_dim for l in self.layers]

    @property
    def params(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.params.items():
                out[f"kan{i}.{k}"] = v
        for k, v in self.head.params.items():
            out[f"head.{k}"] = v
        return out

    @property
    def grads(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            for k, v in layer.grads.items():
                out[f"kan{i}.{k}"] = v
        for k, v in self.head.grads.items():
            out[f"head.{k}"] = v
        return out

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()
        self.head.zero_grad()

    def forward(self, x: np.ndarray, training: bool = False,
                rng: np.random.Generator | None = None) -> np.ndarray:
        h = x
        for layer, drop in zip(self.layers, self.dropouts):
            h = layer.forward(h)
            h = drop.forward(h, training, rng)
        return self.head.forward(h)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        dh = self.head.backward(dout)
        for layer, drop in zip(reversed(self.layers), reversed(self.dropouts)):
            dh = drop.backward(dh)
            dh = layer.backward(dh)
        return dh

    def stage_counts(self) -> list[tuple[str, int, int]]:
        rows = [(f"KAN {l.in_dim}->{l.out_dim}", l.in_dim, l.param_count())
                for l in self.layers]
        rows.append((f"Output {self.head.in_dim}->{self.head.out_dim}",
                     self.head.in_dim, self.head.param_count()))
        return rows


def build_kan(widths: list[int], config: BSplineConfig, seed: int,
              out_dim: int = 4, dropout_rate: float = 0.2) -> KanNetwork:
    """KAN layers along consecutive widths, then a linear head to out_dim."""
    if len(widths) < 1 or any(w < 1 for w in widths):
        raise InvalidWidths(f"bad widths {widths}")
    rng = np.random.default_rng(seed)
    layers = [KanLayer(widths[i], widths[i + 1], config, rng)
              for i in range(len(widths) - 1)]
    head = Linear(widths[-1], out_dim, rng)
    return KanNetwork(layers, head, dropout_rate)


def param_count(network: KanNetwork) -> int:
    return sum(count for _, _, count in network.stage_counts())
