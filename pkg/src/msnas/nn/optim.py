"""SGD with momentum and Adam over a keyed parameter dict.

A step touches only parameters that received a gradient, so training one
sub-network of a shared store never moves the others. Adam keeps a per-key
update count for bias correction because keys are updated intermittently.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter


class Optimizer:
    def __init__(self, params: dict[str, Parameter], lr: float):
        self.params = params
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _active(self):
        for key in sorted(self.params):
            p = self.params[key]
            if p.trainable and p.grad is not None:
                yield key, p

    def step(self) -> None:
        raise NotImplementedError

    def state_dict(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def __init__(self, params, lr, momentum: float = 0.9, weight_decay: float = 0.0):
        super().__init__(params, lr)
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity: dict[str, np.ndarray] = {}

    def step(self) -> None:
        for key, p in self._active():
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            v = self.velocity.get(key)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[key] = v
            p.data -= self.lr * v

    def state_dict(self):
        return {f"vel.{k}": v for k, v in self.velocity.items()}

    def load_state_dict(self, state):
        self.velocity = {k[len("vel."):]: np.array(v) for k, v in state.items() if k.startswith("vel.")}


class Adam(Optimizer):
    def __init__(self, params, lr, betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0):
        super().__init__(params, lr)
        self.beta1, self.beta2 = float(betas[0]), float(betas[1])
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self) -> None:
        for key, p in self._active():
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            t = self.t.get(key, 0) + 1
            self.t[key] = t
            m = self.m.get(key)
            v = self.v.get(key)
            m = (1 - self.beta1) * g if m is None else self.beta1 * m + (1 - self.beta1) * g
            v = (1 - self.beta2) * g * g if v is None else self.beta2 * v + (1 - self.beta2) * g * g
            self.m[key] = m
            self.v[key] = v
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_dict(self):
        out: dict[str, np.ndarray] = {}
        for k, m in self.m.items():
            out[f"m.{k}"] = m
            out[f"v.{k}"] = self.v[k]
            out[f"t.{k}"] = np.asarray(self.t[k], dtype=np.int64)
        return out

    def load_state_dict(self, state):
        self.m, self.v, self.t = {}, {}, {}
        for k, a in state.items():
            kind, key = k.split(".", 1)
            if kind == "m":
                self.m[key] = np.array(a)
            elif kind == "v":
                self.v[key] = np.array(a)
            elif kind == "t":
                self.t[key] = int(a)


def make_optimizer(name: str, params: dict[str, Parameter], lr: float, momentum: float = 0.9):
    if name == "adam":
        return Adam(params, lr)
    if name == "sgd":
        return SGD(params, lr, momentum=momentum)
    raise ValueError(f"unknown optimizer {name!r}")
