"""Dense layers, activations and dropout with hand-written backward passes"""
from typing import List

import numpy as np

from src.common.errors import PreconditionError

ACTIVATIONS = ("relu", "identity")


class Dense:
    """Affine map X W + b; remembers its input for the backward pass"""

    def __init__(self, n_in, n_out, rng, scale=None):
        # He initialization unless a scale is forced (0 gives an all-zero layer)
        std = np.sqrt(2.0 / n_in) if scale is None else scale
        self.W = rng.normal(0.0, 1.0, size=(n_in, n_out)) * std if std > 0 else np.zeros((n_in, n_out))
        self.b = np.zeros(n_out)
        self.grad_W = np.zeros_like(self.W)
        self.grad_b = np.zeros_like(self.b)
        self._input = None

    @property
    def n_in(self):
        return self.W.shape[0]

    def forward(self, X, training=False):
        if X.shape[1] != self.n_in:
            raise PreconditionError(f"layer expects {self.n_in} inputs, got {X.shape[1]}")
        if training:
            self._input = X
        return X @ self.W + self.b

    def backward(self, grad):
        self.grad_W = self._input.T @ grad
        self.grad_b = grad.sum(axis=0)
        return grad @ self.W.T

    def parameters(self) -> List[np.ndarray]:
        return [self.W, self.b]

    def gradients(self) -> List[np.ndarray]:
        return [self.grad_W, self.grad_b]

    def weight_matrices(self) -> List[np.ndarray]:
        return [self.W]


class Activation:
    def __init__(self, kind="relu"):
        if kind not in ACTIVATIONS:
            raise PreconditionError(f"unknown activation '{kind}'")
        self.kind = kind
        self._pre = None

    def forward(self, X, training=False):
        if training:
            self._pre = X
        return np.maximum(X, 0.0) if self.kind == "relu" else X

    def backward(self, grad):
        if self.kind == "relu":
            return grad * (self._pre > 0)
        return grad

    def parameters(self):
        return []

    def gradients(self):
        return []

    def weight_matrices(self):
        return []


class Dropout:
    """Inverted dropout; the identity at inference"""

    def __init__(self, rate, rng):
        if not 0.0 <= rate < 1.0:
            raise PreconditionError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng
        self._mask = None

    def forward(self, X, training=False):
        if not training:
            return X
        if self.rate == 0.0:
            self._mask = None
            return X
        self._mask = (self.rng.random(X.shape) >= self.rate) / (1.0 - self.rate)
        return X * self._mask

    def backward(self, grad):
        return grad if self._mask is None else grad * self._mask

    def parameters(self):
        return []

    def gradients(self):
        return []

    def weight_matrices(self):
        return []


class Block:
    """A stack of layers run in order"""

    def __init__(self, layers):
        self.layers = list(layers)

    @classmethod
    def hidden(cls, widths, n_in, activation, rng, dropout=0.0):
        layers = []
        for width in widths:
            layers.append(Dense(n_in, width, rng))
            layers.append(Activation(activation))
            if dropout > 0:
                layers.append(Dropout(dropout, rng))
            n_in = width
        return cls(layers)

    @property
    def n_out(self):
        dense = [layer for layer in self.layers if isinstance(layer, Dense)]
        return dense[-1].W.shape[1] if dense else None

    def forward(self, X, training=False):
        for layer in self.layers:
            X = layer.forward(X, training=training)
        return X

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]

    def gradients(self):
        return [g for layer in self.layers for g in layer.gradients()]

    def weight_matrices(self):
        return [w for layer in self.layers for w in layer.weight_matrices()]
