"""Small dense networks with explicit backpropagation.

One tanh hidden layer, scaled uniform fan-in initialization, float64
throughout.  Parameters live in a single flat vector (layer matrices are
views into it), which keeps optimizer steps to a handful of vector ops
and makes finite-difference checking and serialization direct.
"""

from __future__ import annotations

import numpy as np


class DenseNet:
    """Input -> tanh hidden -> linear output, parameters in one flat vector."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator):
        self.n_in, self.n_hidden, self.n_out = n_in, n_hidden, n_out
        self._shapes = {
            "W1": (n_in, n_hidden),
            "b1": (n_hidden,),
            "W2": (n_hidden, n_out),
            "b2": (n_out,),
        }
        self._slices = {}
        offset = 0
        for key, shape in self._shapes.items():
            size = int(np.prod(shape))
            self._slices[key] = slice(offset, offset + size)
            offset += size
        self.theta = np.zeros(offset)
        lim1 = 1.0 / np.sqrt(n_in)
        lim2 = 1.0 / np.sqrt(n_hidden)
        self._view("W1")[:] = rng.uniform(-lim1, lim1, size=self._shapes["W1"])
        self._view("W2")[:] = rng.uniform(-lim2, lim2, size=self._shapes["W2"])

    def _view(self, key: str) -> np.ndarray:
        return self.theta[self._slices[key]].reshape(self._shapes[key])

    @property
    def W1(self) -> np.ndarray:
        return self._view("W1")

    @property
    def b1(self) -> np.ndarray:
        return self._view("b1")

    @property
    def W2(self) -> np.ndarray:
        return self._view("W2")

    @property
    def b2(self) -> np.ndarray:
        return self._view("b2")

    def forward(self, x: np.ndarray):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        hidden = np.tanh(x @ self.W1 + self.b1)
        out = hidden @ self.W2 + self.b2
        return out, (x, hidden)

    def backward(self, cache, grad_out: np.ndarray) -> np.ndarray:
        """Flat gradient of a scalar loss given d loss / d output."""
        x, hidden = cache
        grad_out = np.atleast_2d(grad_out)
        grad = np.empty_like(self.theta)
        grad[self._slices["W2"]] = (hidden.T @ grad_out).ravel()
        grad[self._slices["b2"]] = grad_out.sum(axis=0)
        d_hidden = (grad_out @ self.W2.T) * (1.0 - hidden**2)
        grad[self._slices["W1"]] = (x.T @ d_hidden).ravel()
        grad[self._slices["b1"]] = d_hidden.sum(axis=0)
        return grad

    def get_flat(self) -> np.ndarray:
        return self.theta.copy()

    def set_flat(self, flat: np.ndarray) -> None:
        self.theta[:] = flat

    def copy_from(self, other: "DenseNet") -> None:
        self.theta[:] = other.theta


class SgdOptimizer:
    """Plain gradient step."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, net: DenseNet, grad: np.ndarray) -> None:
        net.theta -= self.lr * grad


class AdamOptimizer:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: np.ndarray | None = None
        self.v: np.ndarray | None = None
        self.t = 0

    def step(self, net: DenseNet, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
            self._scratch = np.empty_like(grad)
            self._scaled = np.empty_like(grad)
        self.t += 1
        m, v, scratch, scaled = self.m, self.v, self._scratch, self._scaled
        m *= self.beta1
        np.multiply(grad, 1.0 - self.beta1, out=scratch)
        m += scratch
        v *= self.beta2
        np.multiply(grad, grad, out=scratch)
        scratch *= 1.0 - self.beta2
        v += scratch
        np.sqrt(v, out=scratch)
        scratch /= np.sqrt(1.0 - self.beta2**self.t)
        scratch += self.eps
        np.divide(m, scratch, out=scaled)
        scaled *= self.lr / (1.0 - self.beta1**self.t)
        net.theta -= scaled


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return SgdOptimizer(lr)
    if kind == "adam":
        return AdamOptimizer(lr)
    raise ValueError(f"unknown optimizer {kind!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


class PolicyNetwork:
    """Per-agent actor: observation window in, action distribution out."""

    def __init__(self, obs_dim: int, n_actions: int, hidden: int, rng: np.random.Generator):
        self.net = DenseNet(obs_dim, hidden, n_actions, rng)
        self.n_actions = n_actions

    def logits(self, obs: np.ndarray):
        return self.net.forward(obs)

    def probs(self, obs: np.ndarray) -> np.ndarray:
        logits, _ = self.net.forward(obs)
        return softmax(logits)

    def sample(self, obs: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
        logits, _ = self.net.forward(obs)
        logp = log_softmax(logits)[0]
        cdf = np.cumsum(np.exp(logp))
        action = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")),
                     self.n_actions - 1)
        return action, float(logp[action])

    def greedy_action(self, obs: np.ndarray) -> int:
        logits, _ = self.net.forward(obs)
        return int(np.argmax(logits[0]))

    def clone(self) -> "PolicyNetwork":
        twin = PolicyNetwork(self.net.n_in, self.n_actions, self.net.n_hidden,
                             np.random.default_rng(0))
        twin.net.copy_from(self.net)
        return twin


class CriticNetwork:
    """Centralized critic: joint observations plus the other agents'
    actions in, one Q value per own action out."""

    def __init__(self, central_dim: int, n_actions: int, hidden: int, rng: np.random.Generator):
        self.net = DenseNet(central_dim, hidden, n_actions, rng)
        self.n_actions = n_actions

    def q_values(self, central_input: np.ndarray):
        return self.net.forward(central_input)

    def clone(self) -> "CriticNetwork":
        twin = CriticNetwork(self.net.n_in, self.n_actions, self.net.n_hidden,
                             np.random.default_rng(0))
        twin.net.copy_from(self.net)
        return twin
