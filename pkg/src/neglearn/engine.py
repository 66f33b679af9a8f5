"""Small fully connected classifier with manual backprop and momentum SGD.

Everything works on batches: ``x`` is ``(n, d)`` (a single vector is promoted
to a one-row batch), logits and probabilities are ``(n, c)``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# Shared floor/ceiling for probabilities before any log.
EPS = 1e-12

ACTIVATIONS = ("relu", "identity")


class InputShapeError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match weight {self.weight.shape}"
            )

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]


class Prediction(NamedTuple):
    logits: np.ndarray
    probs: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class Network:
    layers: list[Layer]
    seed: int | None = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.fan_out != b.fan_in:
                raise ValueError(f"layer dims do not chain: {a.fan_out} -> {b.fan_in}")
        if self.n_classes < 2:
            raise ValueError("output dimension must be at least 2")

    @classmethod
    def init(cls, sizes, seed: int = 0) -> "Network":
        """He-uniform weights, zero biases; ReLU everywhere except the output layer.

        ``sizes`` is ``[d, h1, ..., c]``.
        """
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2:
            raise ValueError("sizes must list input and output dimensions")
        rng = np.random.default_rng(seed)
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            act = "identity" if i == len(sizes) - 2 else "relu"
            layers.append(Layer(w, np.zeros(fan_out), act))
        return cls(layers, seed=seed)

    @property
    def n_classes(self) -> int:
        return self.layers[-1].fan_out

    @property
    def n_inputs(self) -> int:
        return self.layers[0].fan_in

    @property
    def sizes(self) -> list[int]:
        return [self.n_inputs] + [layer.fan_out for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "Network":
        return Network(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers],
            seed=self.seed,
        )

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n_inputs:
            raise InputShapeError(
                f"expected input of width {self.n_inputs}, got shape {np.shape(x)}"
            )
        return x

    def _activations(self, x: np.ndarray) -> list[np.ndarray]:
        # acts[i] is the input to layer i; acts[-1] are the logits
        acts = [x]
        h = x
        for layer in self.layers:
            h = h @ layer.weight + layer.bias
            if layer.activation == "relu":
                h = np.maximum(h, 0.0)
            acts.append(h)
        return acts

    def forward(self, x) -> Prediction:
        single = np.ndim(x) == 1
        logits = self._activations(self._check_input(x))[-1]
        probs = softmax(logits)
        if single:
            return Prediction(logits[0], probs[0])
        return Prediction(logits, probs)

    def predict_proba(self, x, batch_size: int = 4096) -> np.ndarray:
        x = self._check_input(x)
        out = [self.forward(x[i : i + batch_size]).probs for i in range(0, len(x), batch_size)]
        return np.concatenate(out, axis=0)

    def forward_backward(self, x, grad_fn):
        """Run one forward pass, hand the probabilities to ``grad_fn``, backprop.

        ``grad_fn(probs)`` returns ``(value, logit_grad)``; the value is passed
        through untouched. Returns ``(value, probs, param_grads)``.
        """
        x = self._check_input(x)
        acts = self._activations(x)
        probs = softmax(acts[-1])
        value, logit_grad = grad_fn(probs)
        return value, probs, self._backprop(acts, np.asarray(logit_grad, dtype=np.float64))

    def backward(self, x, logit_grad) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. ``params()`` given dLoss/dlogits.

        For a batch, ``logit_grad`` holds one row per sample and the returned
        gradients are summed over the rows.
        """
        x = self._check_input(x)
        logit_grad = np.asarray(logit_grad, dtype=np.float64)
        if logit_grad.ndim == 1:
            logit_grad = logit_grad[None, :]
        return self._backprop(self._activations(x), logit_grad)

    def _backprop(self, acts, logit_grad) -> list[np.ndarray]:
        if logit_grad.shape != acts[-1].shape:
            raise InputShapeError(
                f"logit gradient shape {logit_grad.shape} != logits shape {acts[-1].shape}"
            )
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))  # type: ignore[list-item]
        delta = logit_grad
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if layer.activation == "relu":
                delta = delta * (acts[i + 1] > 0)
            grads[2 * i] = acts[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ layer.weight.T
        return grads


@dataclass
class OptimizerState:
    """Momentum SGD hyperparameters and per-parameter velocity buffers."""

    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    buffers: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")

    @classmethod
    def for_network(cls, net: Network, lr: float, momentum=0.9, weight_decay=1e-4):
        bufs = [np.zeros_like(p) for p in net.params()]
        return cls(lr, momentum, weight_decay, bufs)


def sgd_step(net: Network, grads, state: OptimizerState, lr: float | None = None):
    """In-place momentum step: v <- m*v + g + wd*w ; w <- w - lr*v.

    Weight decay touches weight matrices only, never biases. ``lr`` overrides
    the state's rate for scheduled training; pass 0 to freeze parameters.
    Returns ``(net, state)`` for chaining.
    """
    params = net.params()
    if len(grads) != len(params):
        raise InputShapeError(f"got {len(grads)} gradients for {len(params)} parameters")
    if not state.buffers:
        state.buffers = [np.zeros_like(p) for p in params]
    rate = state.lr if lr is None else lr
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise InputShapeError(f"gradient {i} has shape {g.shape}, parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(
                f"non-finite gradient in parameter {i} (layer {i // 2}, "
                f"{'weight' if i % 2 == 0 else 'bias'}); aborting update"
            )
    for i, (p, g) in enumerate(zip(params, grads)):
        v = state.buffers[i]
        if v.shape != p.shape:
            raise InputShapeError(f"momentum buffer {i} has shape {v.shape}, parameter {p.shape}")
        v *= state.momentum
        v += g
        if i % 2 == 0 and state.weight_decay:
            v += state.weight_decay * p
        if rate:
            p -= rate * v
    return net, state


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_FORMAT = "neglearn-mlp"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, net: Network, state: OptimizerState | None = None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": net.sizes,
        "activations": [l.activation for l in net.layers],
        "seed": net.seed,
        "layers": [{"weight": l.weight.tolist(), "bias": l.bias.tolist()} for l in net.layers],
    }
    if state is not None:
        doc["optimizer"] = {
            "lr": state.lr,
            "momentum": state.momentum,
            "weight_decay": state.weight_decay,
            "buffers": [b.tolist() for b in state.buffers],
        }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        json.dump(doc, f)
    os.replace(tmp, path)


def load_checkpoint(path):
    """Returns ``(net, state_or_None)``."""
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    layers = [
        Layer(np.array(l["weight"], dtype=np.float64), np.array(l["bias"], dtype=np.float64), act)
        for l, act in zip(doc["layers"], doc["activations"])
    ]
    net = Network(layers, seed=doc.get("seed"))
    if net.sizes != doc["sizes"]:
        raise ValueError(f"{path}: header sizes {doc['sizes']} do not match stored layers")
    state = None
    if "optimizer" in doc:
        opt = doc["optimizer"]
        state = OptimizerState(
            opt["lr"],
            opt["momentum"],
            opt["weight_decay"],
            [np.array(b, dtype=np.float64) for b in opt["buffers"]],
        )
    return net, state
