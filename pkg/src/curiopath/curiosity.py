"""Curiosity signal: a next-state predictor whose squared error is the reward."""

from __future__ import annotations

import threading

import numpy as np

from .neuralnet import AdamState, Mlp, adam_step

MEMORY_CAPACITY = 6000
BATCH_SIZE = 64
PREDICTOR_LR = {"discrete": 0.006, "continuous": 0.002}
PREDICTOR_DEPTH = {"discrete": 2, "continuous": 3}


class ReplayMemory:
    """FIFO ring buffer of ``(s_hat, action, s_hat_next)`` transitions."""

    def __init__(self, capacity: int, n_points: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, n_points))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.next_states = np.zeros((capacity, n_points))
        self._ptr = 0
        self.size = 0
        self.pushed = 0

    def __len__(self):
        return self.size

    def push(self, s_hat, action: int, s_hat_next) -> None:
        i = self._ptr
        self.states[i] = s_hat
        self.actions[i] = action
        self.next_states[i] = s_hat_next
        self._ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushed += 1

    def sample(self, n: int, rng: np.random.Generator):
        """Uniform draw with replacement."""
        idx = rng.integers(0, self.size, size=n)
        return self.states[idx], self.actions[idx], self.next_states[idx]

    def ordered(self):
        """Contents oldest first."""
        if self.size < self.capacity:
            order = np.arange(self.size)
        else:
            order = (np.arange(self.capacity) + self._ptr) % self.capacity
        return self.states[order], self.actions[order], self.next_states[order]


class Predictor:
    """Next-state model ``f(s_hat, a)`` on ``[s_hat, one_hot(a)]``.

    Reads and training steps take an internal lock so several workers can
    share one predictor; each Adam step is applied whole.
    """

    def __init__(self, n_points: int, n_actions: int, hidden=(64, 64),
                 learning_rate: float = 0.006, rng: np.random.Generator | None = None,
                 net: Mlp | None = None):
        self.n_points = n_points
        self.n_actions = n_actions
        dims = [n_points + n_actions, *hidden, n_points]
        self.net = Mlp.create(dims, "identity", rng) if net is None else net
        self.opt = AdamState.for_params(self.net.params, learning_rate)
        self._eye = np.eye(n_actions)
        self.lock = threading.Lock()

    @classmethod
    def for_mode(cls, mode: str, n_points: int, n_actions: int, width: int = 64,
                 rng: np.random.Generator | None = None, learning_rate: float | None = None):
        hidden = (width,) * PREDICTOR_DEPTH[mode]
        lr = PREDICTOR_LR[mode] if learning_rate is None else learning_rate
        return cls(n_points, n_actions, hidden, lr, rng)

    def inputs(self, s_hat, actions) -> np.ndarray:
        s_hat = np.atleast_2d(np.asarray(s_hat, dtype=float))
        return np.hstack([s_hat, self._eye[np.atleast_1d(actions)]])

    def predict_next(self, s_hat, action: int) -> np.ndarray:
        x = np.concatenate([np.asarray(s_hat, dtype=float), self._eye[action]])
        with self.lock:
            return self.net.forward(x)

    def batch_loss(self, states, actions, next_states) -> float:
        pred = self.net.forward(self.inputs(states, actions))
        return float(np.sum((pred - next_states) ** 2))

    def train_batch(self, states, actions, next_states) -> float:
        """One Adam step on the summed squared error of a batch; returns the pre-step loss."""
        x = self.inputs(states, actions)
        with self.lock:
            pred, acts = self.net.forward_cached(x)
            diff = pred - next_states
            grad = self.net.backward_cached(acts, 2.0 * diff)
            adam_step(self.net.params, grad, self.opt)
        return float(np.sum(diff * diff))


def predict_next(p: Predictor, s_hat, action: int) -> np.ndarray:
    return p.predict_next(s_hat, action)


def curiosity_reward(s_hat_next, s_tilde_next) -> float:
    """Squared Euclidean prediction error."""
    d = np.asarray(s_hat_next, dtype=float) - np.asarray(s_tilde_next, dtype=float)
    return float(d @ d)


def store_and_train(p: Predictor, mem: ReplayMemory, transition, rng: np.random.Generator,
                    batch_size: int = BATCH_SIZE, mem_lock: threading.Lock | None = None):
    """Append one transition, then train on a sampled batch once the memory holds
    at least ``batch_size`` entries. Returns the batch loss, or None during warm-up."""
    s_hat, action, s_hat_next = transition
    if mem_lock is None:
        mem.push(s_hat, action, s_hat_next)
        if len(mem) < batch_size:
            return None
        batch = mem.sample(batch_size, rng)
    else:
        with mem_lock:
            mem.push(s_hat, action, s_hat_next)
            if len(mem) < batch_size:
                return None
            batch = tuple(np.copy(b) for b in mem.sample(batch_size, rng))
    return p.train_batch(*batch)


class CuriosityModule:
    """Predictor plus replay memory, shared by every worker of one training run."""

    def __init__(self, predictor: Predictor, capacity: int = MEMORY_CAPACITY,
                 batch_size: int = BATCH_SIZE):
        self.predictor = predictor
        self.memory = ReplayMemory(capacity, predictor.n_points)
        self.batch_size = batch_size
        self.mem_lock = threading.Lock()

    def step(self, s_hat, action: int, s_hat_next, rng: np.random.Generator) -> float:
        """Reward from the current predictor, then store and train."""
        s_tilde = self.predictor.predict_next(s_hat, action)
        reward = curiosity_reward(s_hat_next, s_tilde)
        store_and_train(self.predictor, self.memory, (s_hat, action, s_hat_next), rng,
                        self.batch_size, self.mem_lock)
        return reward
