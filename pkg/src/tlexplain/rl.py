"""Tabular trainers producing stochastic policies for product MDPs.

The default trainer is exact soft (entropy-regularized) value iteration: it
is deterministic, so replicate selection is trivial and whole runs are
bitwise reproducible.  A tabular Q-learning trainer is kept as the stochastic
path that makes replicate selection meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax, xlogy

from .product import ProductMdp, TransitionTable

EXACT_SOFT_VI = "exact-soft-vi"
Q_LEARNING = "q-learning"


class NoConvergenceError(RuntimeError):
    pass


class EmptySampleError(ValueError):
    pass


@dataclass
class TrainerConfig:
    mode: str = EXACT_SOFT_VI
    tau: float = 0.1
    tolerance: float = 1e-9
    max_iterations: int = 10_000
    # q-learning only
    episodes: int = 2000
    learning_rate: float = 0.2
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass
class TabularPolicy:
    """Per-row action distribution over non-terminal product states."""

    probs: np.ndarray
    tau: float
    trainer: str
    seed: int | None = None

    def __post_init__(self):
        rowsums = self.probs.sum(axis=1)
        if (self.probs < 0).any() or not np.allclose(rowsums, 1.0, atol=1e-9):
            raise ValueError("policy rows must be probability simplexes")

    def save(self, path):
        """Plain-text tabular format: a header line then one row per state."""
        lines = [f"tlexplain-policy states={self.probs.shape[0]} "
                 f"actions={self.probs.shape[1]} tau={self.tau!r} trainer={self.trainer}"]
        for row in self.probs:
            lines.append(" ".join(repr(float(p)) for p in row))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "TabularPolicy":
        lines = Path(path).read_text().splitlines()
        header = dict(kv.split("=", 1) for kv in lines[0].split()[1:])
        probs = np.array([[float(x) for x in line.split()] for line in lines[1:]])
        if probs.shape != (int(header["states"]), int(header["actions"])):
            raise ValueError(f"policy file shape {probs.shape} does not match header")
        return cls(probs, float(header["tau"]), header["trainer"])


def _soft_backup(table: TransitionTable, v: np.ndarray, gamma: float, tau: float):
    v_next = np.where(table.branch_next_row >= 0, v[table.branch_next_row], 0.0)
    contrib = table.branch_prob * (table.branch_reward + gamma * v_next)
    cells = table.branch_row * table.n_actions + table.branch_action
    q = np.bincount(cells, weights=contrib,
                    minlength=table.n_rows * table.n_actions)
    q = q.reshape(table.n_rows, table.n_actions)
    return q, tau * logsumexp(q / tau, axis=1)


def soft_value_iteration(mdp: ProductMdp, cfg: TrainerConfig) -> TabularPolicy:
    """Iterate the soft Bellman backup to tolerance; seed-independent."""
    table = mdp.table
    v = np.zeros(table.n_rows)
    for _ in range(cfg.max_iterations):
        q, v_new = _soft_backup(table, v, mdp.gamma, cfg.tau)
        delta = np.abs(v_new - v).max()
        v = v_new
        if delta < cfg.tolerance:
            return TabularPolicy(softmax(q / cfg.tau, axis=1), cfg.tau, EXACT_SOFT_VI)
    raise NoConvergenceError(
        f"soft value iteration did not reach {cfg.tolerance} in {cfg.max_iterations} sweeps")


def q_learning(mdp: ProductMdp, cfg: TrainerConfig, rng: np.random.Generator,
               seed: int | None = None) -> TabularPolicy:
    """Epsilon-greedy tabular Q-learning; final policy is softmax over Q."""
    table = mdp.table
    q = np.zeros((table.n_rows, table.n_actions))
    for ep in range(cfg.episodes):
        eps = cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * ep / max(cfg.episodes - 1, 1)
        ps = mdp.initial_product_state(rng)
        for _ in range(mdp.horizon):
            row = mdp.model.row_of[ps[0]]
            if rng.random() < eps:
                a = int(rng.integers(table.n_actions))
            else:
                a = int(np.argmax(q[row]))
            ps_next, reward, terminal = mdp.product_step(ps, a, rng)
            target = reward
            if not terminal:
                target += mdp.gamma * q[mdp.model.row_of[ps_next[0]]].max()
            q[row, a] += cfg.learning_rate * (target - q[row, a])
            ps = ps_next
            if terminal:
                break
    return TabularPolicy(softmax(q / cfg.tau, axis=1), cfg.tau, Q_LEARNING, seed=seed)


def train(mdp: ProductMdp, cfg: TrainerConfig, rng: np.random.Generator | None = None,
          seed: int | None = None) -> TabularPolicy:
    if cfg.mode == EXACT_SOFT_VI:
        return soft_value_iteration(mdp, cfg)
    if cfg.mode == Q_LEARNING:
        if rng is None:
            raise ValueError("q-learning needs an rng")
        return q_learning(mdp, cfg, rng, seed=seed)
    raise ValueError(f"unknown trainer mode {cfg.mode!r}")


def policy_entropy(policy: TabularPolicy, sample_rows) -> float:
    """Mean Shannon entropy (natural log) of action rows over a state sample."""
    rows = np.asarray(sample_rows, dtype=int)
    if rows.size == 0:
        raise EmptySampleError("entropy needs a nonempty state sample")
    p = policy.probs[rows]
    return float(-xlogy(p, p).sum(axis=1).mean())


def select_replicate(policies, sample_rows, mode: str = "by-entropy",
                     utility_fn=None) -> TabularPolicy:
    """Pick one of several trained replicates.

    ``by-entropy`` maximizes mean action entropy over the sample;
    ``by-utility`` maximizes ``utility_fn(policy)``.  Ties go to the lowest
    replicate index.
    """
    if not policies:
        raise ValueError("no replicates to select from")
    if mode == "by-entropy":
        scores = [policy_entropy(p, sample_rows) for p in policies]
    elif mode == "by-utility":
        if utility_fn is None:
            raise ValueError("by-utility selection needs a utility function")
        scores = [utility_fn(p) for p in policies]
    else:
        raise ValueError(f"unknown replicate selection mode {mode!r}")
    return policies[int(np.argmax(scores))]
