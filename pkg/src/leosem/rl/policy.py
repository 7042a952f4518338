"""Feed-forward networks with hand-written backprop, and masked factored heads."""
from __future__ import annotations

import math

import numpy as np

from .. import kernels
from ..errors import FullyMaskedHead
from ..masking import SlotMasker


class MLP:
    """tanh MLP with a linear output layer; parameters in ``self.params``."""

    def __init__(self, sizes, rng: np.random.Generator | None = None, out_scale: float = 0.01):
        self.sizes = tuple(int(s) for s in sizes)
        self.params: dict[str, np.ndarray] = {}
        if rng is None:
            return
        n_layers = len(self.sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(self.sizes, self.sizes[1:])):
            scale = math.sqrt(1.0 / fan_in)
            if i == n_layers - 1:
                scale *= out_scale
            self.params[f"W{i}"] = rng.normal(0.0, scale, (fan_in, fan_out))
            self.params[f"b{i}"] = np.zeros(fan_out)

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, x: np.ndarray):
        h = np.atleast_2d(x)
        cache = [h]
        for i in range(self.n_layers):
            z = h @ self.params[f"W{i}"] + self.params[f"b{i}"]
            h = np.tanh(z) if i < self.n_layers - 1 else z
            cache.append(h)
        return h, cache

    def backward(self, cache, dout: np.ndarray) -> dict[str, np.ndarray]:
        grads = {}
        g = dout
        for i in reversed(range(self.n_layers)):
            h_in = cache[i]
            grads[f"W{i}"] = h_in.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.params[f"W{i}"].T) * (1.0 - cache[i] ** 2)
        return grads

    def copy(self) -> "MLP":
        other = MLP(self.sizes)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def keys(self):
        return sorted(self.params)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in self.keys()])

    def set_flat(self, vec: np.ndarray) -> None:
        i = 0
        for k in self.keys():
            n = self.params[k].size
            self.params[k] = vec[i:i + n].reshape(self.params[k].shape).copy()
            i += n


class Adam:
    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            m_hat = self.m[k] / (1 - b1 ** self.t)
            v_hat = self.v[k] / (1 - b2 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Policy:
    """Stochastic policy: one masked categorical per action head."""

    def __init__(self, obs_size: int, offsets, hidden=(128, 128), rng: np.random.Generator | None = None):
        self.offsets = np.asarray(offsets, dtype=np.intp)
        self.net = MLP((obs_size, *hidden, int(self.offsets[-1])), rng)

    @property
    def n_heads(self) -> int:
        return len(self.offsets) - 1

    def copy(self) -> "Policy":
        other = Policy.__new__(Policy)
        other.offsets = self.offsets.copy()
        other.net = self.net.copy()
        return other

    def logits(self, states: np.ndarray) -> tuple[np.ndarray, list]:
        return self.net.forward(states)


def sample_action(policy: Policy, state_vector: np.ndarray, masker: SlotMasker,
                  rng: np.random.Generator, greedy: bool = False):
    """Walk the heads, sampling each from its masked softmax.

    Returns (head indices, joint log-probability, flat boolean mask).
    """
    logits, _ = policy.logits(state_vector)
    logits = logits[0]
    offsets = policy.offsets
    mask_row = np.zeros(int(offsets[-1]), dtype=bool)
    logp = 0.0
    for h in range(policy.n_heads):
        lo, hi = int(offsets[h]), int(offsets[h + 1])
        mk = masker.mask()
        legal = np.flatnonzero(mk)
        if legal.size == 0:
            raise FullyMaskedHead(f"head {h} has no legal option")
        mask_row[lo:hi] = mk
        if legal.size == 1:
            idx = int(legal[0])
        else:
            lp = kernels.masked_log_softmax(logits[None, lo:hi], mk[None, :].view(np.uint8),
                                            np.array([0, hi - lo], dtype=np.intp))[0]
            if greedy:
                idx = int(np.argmax(lp))
            else:
                idx = int(kernels.sample_segment(lp, 0, hi - lo, rng.random()))
            logp += float(lp[idx])
        masker.choose(idx, check=False)
    return tuple(masker.choices), logp, mask_row


def batch_log_probs(policy: Policy, logits: np.ndarray, actions: np.ndarray, masks: np.ndarray):
    """Per-row joint log-probabilities plus the full per-option log-softmax."""
    lp_all = kernels.masked_log_softmax(logits, masks.view(np.uint8), policy.offsets)
    cols = policy.offsets[:-1][None, :] + actions
    rows = np.arange(actions.shape[0])[:, None]
    return lp_all[rows, cols].sum(axis=1), lp_all


def dlogp_dlogits(policy: Policy, lp_all: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Gradient of each row's joint log-probability w.r.t. its logits."""
    g = -np.exp(lp_all)
    cols = policy.offsets[:-1][None, :] + actions
    rows = np.arange(actions.shape[0])[:, None]
    np.add.at(g, (np.broadcast_to(rows, cols.shape), cols), 1.0)
    return g
