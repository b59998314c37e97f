"""Automaton-augmented product MDP over a tabular environment.

With the three-state template automaton, acceptance and trap are absorbing
and terminal, so the only product states that need actions are ``(s, q0)``
for non-terminal environment states ``s``.  Policies are therefore indexed by
rows of non-terminal environment states; the automaton component shows up in
transition targets and rewards only.

The automaton consumes the post-transition environment state: after the
environment moves to ``s'``, the run advances on ``features(s')`` and the
transition reward is the (signed) robustness of the guard that fired,
evaluated at ``s'``.  The initial state is processed from ``q0`` without
consuming the start state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .envs import StateSpaceTooLargeError, StepOnTerminalError
from .fspa import Fspa, Q0_I, Q_ACC_I, Q_TRAP_I

SPARSE = "sparse"
DENSE = "dense"


@dataclass
class EnvModel:
    """Enumerated environment: states, features, and exact branch arrays.

    Shared by every candidate explanation evaluated on the same environment;
    building it once amortizes the BFS and feature computation.
    """

    env: object
    states: list
    features: np.ndarray       # (n_states, n_features)
    terminal: np.ndarray       # (n_states,) bool
    rows: np.ndarray           # row -> state index, non-terminal states only
    row_of: np.ndarray         # state index -> row, -1 for terminal
    branch_row: np.ndarray     # flat branch arrays, sorted by (row, action)
    branch_action: np.ndarray
    branch_next: np.ndarray    # state index of the successor
    branch_prob: np.ndarray
    cell_offsets: np.ndarray   # CSR offsets per (row * n_actions + action)
    start_rows: np.ndarray
    start_probs: np.ndarray

    @property
    def n_actions(self) -> int:
        return self.env.n_actions

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def index_of(self, state) -> int:
        return self._index[state]

    def __post_init__(self):
        self._index = {s: i for i, s in enumerate(self.states)}


def build_env_model(env, cap: int = 2_000_000) -> EnvModel:
    states = env.enumerate_states(cap=cap)
    index = {s: i for i, s in enumerate(states)}
    features = np.array([env.features(s) for s in states])
    terminal = np.array([env.is_terminal(s) for s in states])
    rows = np.flatnonzero(~terminal)
    row_of = np.full(len(states), -1, dtype=int)
    row_of[rows] = np.arange(len(rows))

    n_actions = env.n_actions
    b_row, b_act, b_next, b_prob = [], [], [], []
    for r, si in enumerate(rows):
        s = states[si]
        for a in range(n_actions):
            for nxt, p in env.transitions(s, a):
                b_row.append(r)
                b_act.append(a)
                b_next.append(index[nxt])
                b_prob.append(p)
    b_row = np.array(b_row)
    b_act = np.array(b_act)
    b_next = np.array(b_next)
    b_prob = np.array(b_prob)
    cells = b_row * n_actions + b_act
    counts = np.bincount(cells, minlength=len(rows) * n_actions)
    offsets = np.concatenate([[0], np.cumsum(counts)])

    starts = env.initial_states()
    start_rows = np.array([row_of[index[s]] for s, _ in starts])
    start_probs = np.array([p for _, p in starts])
    if (start_rows < 0).any():
        raise StateSpaceTooLargeError("start states must be non-terminal")
    return EnvModel(env, states, features, terminal, rows, row_of,
                    b_row, b_act, b_next, b_prob, offsets,
                    start_rows, start_probs)


@dataclass
class TransitionTable:
    """Exact product transition model for one candidate explanation.

    ``branch_next_row`` is -1 for transitions into terminal product states
    (acceptance, trap, or a terminal environment state), whose value is zero.
    """

    n_rows: int
    n_actions: int
    branch_row: np.ndarray
    branch_action: np.ndarray
    branch_next_row: np.ndarray
    branch_prob: np.ndarray
    branch_reward: np.ndarray
    cell_offsets: np.ndarray

    def __post_init__(self):
        # padded copies for vectorized branch sampling
        counts = np.diff(self.cell_offsets)
        maxb = int(counts.max())
        n_cells = self.n_rows * self.n_actions
        self.pad_prob = np.zeros((n_cells, maxb))
        self.pad_next_row = np.full((n_cells, maxb), -1, dtype=int)
        self.pad_reward = np.zeros((n_cells, maxb))
        slot = np.concatenate([np.arange(c) for c in counts]) if len(counts) else np.array([], int)
        cells = self.branch_row * self.n_actions + self.branch_action
        self.pad_prob[cells, slot] = self.branch_prob
        self.pad_next_row[cells, slot] = self.branch_next_row
        self.pad_reward[cells, slot] = self.branch_reward
        self.pad_cum = np.cumsum(self.pad_prob, axis=1)


class ProductMdp:
    """FSPA-augmented MDP with sparse or dense guard-robustness rewards."""

    def __init__(self, model: EnvModel, fspa: Fspa, reward_mode: str = SPARSE,
                 beta: float = 0.1, gamma: float = 0.95, horizon: int = 100):
        if not (0.0 <= beta < 1.0):
            raise ValueError(f"beta must be in [0, 1): {beta}")
        if not (0.0 <= gamma < 1.0):
            raise ValueError(f"gamma must be in [0, 1): {gamma}")
        if reward_mode not in (SPARSE, DENSE):
            raise ValueError(f"unknown reward mode {reward_mode!r}")
        self.model = model
        self.fspa = fspa
        self.reward_mode = reward_mode
        self.beta = beta
        self.gamma = gamma
        self.horizon = horizon

        rho_f, rho_g = fspa.part_robustness(model.features)
        self.rho_f, self.rho_g = rho_f, rho_g
        # automaton successor and transition reward as a function of the
        # post-transition environment state, entered from q0
        self.q_next = fspa.step_codes(rho_f, rho_g)
        reward = np.where(
            self.q_next == Q_TRAP_I, rho_g,
            np.where(self.q_next == Q_ACC_I, np.minimum(rho_g, rho_f), 0.0))
        if reward_mode == DENSE:
            stay_bonus = beta * np.minimum(rho_g, np.maximum(rho_f, -rho_f))
            reward = np.where(self.q_next == Q0_I, stay_bonus, reward)
        self.reward_next = reward
        self._table = None

    @property
    def table(self) -> TransitionTable:
        if self._table is None:
            m = self.model
            nxt = m.branch_next
            keeps_going = (self.q_next[nxt] == Q0_I) & ~m.terminal[nxt]
            next_row = np.where(keeps_going, m.row_of[nxt], -1)
            self._table = TransitionTable(
                m.n_rows, m.n_actions, m.branch_row, m.branch_action,
                next_row, m.branch_prob, self.reward_next[nxt], m.cell_offsets)
        return self._table

    # -- stepping ----------------------------------------------------------

    def initial_product_state(self, rng: np.random.Generator):
        if len(self.model.start_rows) == 1:
            row = self.model.start_rows[0]
        else:
            row = rng.choice(self.model.start_rows, p=self.model.start_probs)
        return (int(self.model.rows[row]), Q0_I)

    def product_step(self, product_state, action: int, rng: np.random.Generator):
        """One sampled transition; returns (next product state, reward, terminal)."""
        idx, q = product_state
        row = self.model.row_of[idx]
        if q != Q0_I or row < 0:
            raise StepOnTerminalError(f"step on terminal product state {product_state}")
        t = self.table
        cell = row * t.n_actions + action
        lo, hi = t.cell_offsets[cell], t.cell_offsets[cell + 1]
        probs = t.branch_prob[lo:hi]
        k = lo + (rng.random() >= np.cumsum(probs)).sum() if hi - lo > 1 else lo
        k = min(k, hi - 1)
        nxt_state = int(self.model.branch_next[k])
        q2 = int(self.q_next[nxt_state])
        reward = float(t.branch_reward[k])
        terminal = t.branch_next_row[k] < 0
        return (nxt_state, q2), reward, terminal

    def expand_transitions(self):
        """Explicit table {(product state, action): [(next, prob, reward)]}."""
        t = self.table
        out = {}
        for k in range(len(t.branch_row)):
            row, a = int(t.branch_row[k]), int(t.branch_action[k])
            ps = (int(self.model.rows[row]), Q0_I)
            nxt_state = int(self.model.branch_next[k])
            nxt = (nxt_state, int(self.q_next[nxt_state]))
            out.setdefault((ps, a), []).append(
                (nxt, float(t.branch_prob[k]), float(t.branch_reward[k])))
        return out

    # -- rollouts ----------------------------------------------------------

    def rollout(self, policy, rng: np.random.Generator):
        """One sampled episode; returns (product-state trajectory, return)."""
        ps = self.initial_product_state(rng)
        trajectory = [ps]
        total = 0.0
        for _ in range(self.horizon):
            row = self.model.row_of[ps[0]]
            probs = policy.probs[row]
            a = min((rng.random() >= np.cumsum(probs)).sum(), len(probs) - 1)
            ps, reward, terminal = self.product_step(ps, int(a), rng)
            trajectory.append(ps)
            total += reward
            if terminal:
                break
        return trajectory, total

    def average_return(self, policy, n_ep: int, rng: np.random.Generator) -> float:
        """Mean undiscounted return over ``n_ep`` episodes, batch-stepped."""
        if n_ep < 1:
            raise ValueError("n_ep must be >= 1")
        t = self.table
        m = self.model
        if len(m.start_rows) == 1:
            rows = np.full(n_ep, m.start_rows[0])
        else:
            rows = rng.choice(m.start_rows, size=n_ep, p=m.start_probs)
        returns = np.zeros(n_ep)
        active = np.ones(n_ep, dtype=bool)
        for _ in range(self.horizon):
            live = np.flatnonzero(active)
            if live.size == 0:
                break
            r = rows[live]
            acdf = np.cumsum(policy.probs[r], axis=1)
            u = rng.random((live.size, 1))
            acts = np.minimum((u >= acdf).sum(axis=1), t.n_actions - 1)
            cells = r * t.n_actions + acts
            bu = rng.random((live.size, 1))
            branch = np.minimum((bu >= t.pad_cum[cells]).sum(axis=1),
                                t.pad_cum.shape[1] - 1)
            returns[live] += t.pad_reward[cells, branch]
            nxt = t.pad_next_row[cells, branch]
            done = nxt < 0
            rows[live] = np.where(done, 0, nxt)
            active[live[done]] = False
        return float(returns.mean())
