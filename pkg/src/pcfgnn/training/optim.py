"""
First-order optimizers over named numpy tensors.

Both update the arrays in place, so views held elsewhere (``PcfParams``,
CTR model tables) see the new values.
"""

from abc import ABC, abstractmethod
from collections.abc import Mapping

import numpy as np

from pcfgnn.errors import ContractError


class Optimizer(ABC):
    """Base class; ``step`` consumes one gradient per named tensor."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    @abstractmethod
    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        pass


class Sgd(Optimizer):
    """Plain gradient descent with a fixed learning rate."""

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        for name, tensor in params.items():
            tensor -= (self.learning_rate * grads[name]).astype(tensor.dtype)


class Adam(Optimizer):
    """Adam with bias-corrected moments; state is kept per tensor name."""

    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        super().__init__(learning_rate)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, tensor in params.items():
            g = grads[name]
            m = self._m.setdefault(name, np.zeros_like(tensor))
            v = self._v.setdefault(name, np.zeros_like(tensor))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            update = self.learning_rate * (m / c1) / (np.sqrt(v / c2) + self.eps)
            tensor -= update.astype(tensor.dtype)


def make_optimizer(
    name: str, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
) -> Optimizer:
    if name == "sgd":
        return Sgd(learning_rate)
    if name == "adam":
        return Adam(learning_rate, beta1, beta2, eps)
    raise ContractError(f"unknown optimizer {name!r}")
