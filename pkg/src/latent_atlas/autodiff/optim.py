"""Adam with per-epoch exponential learning-rate decay, plus Glorot init."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError, ValidationError
from .tensor import Tensor


@dataclass
class Adam:
    """Adam state over a named parameter map.

    ``decay`` multiplies ``lr`` once per call to :meth:`decay_epoch`.
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.95
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lr > 0:
            raise ValidationError(f"learning rate must be positive, got {self.lr}")

    def step(self, params, grads):
        """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

        Parameters missing from ``grads`` are treated as having zero gradient.
        """
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1**t
        c2 = 1.0 - self.beta2**t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                g = np.zeros_like(p.data)
            elif g.shape != p.data.shape:
                raise ShapeError(f"gradient for {name!r} has shape {g.shape}, parameter {p.data.shape}")
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params

    def decay_epoch(self):
        self.lr *= self.decay
        return self.lr


def adam_step(state, params, grads):
    return state.step(params, grads)


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform(-a, a) parameter with a = sqrt(6 / (fan_in + fan_out))."""
    a = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(-a, a, size=shape), requires_grad=True)


def zeros(*shape):
    return Tensor(np.zeros(shape), requires_grad=True)
