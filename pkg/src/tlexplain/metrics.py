"""Policy-similarity utility: KL divergence weighted by target confidence.

A candidate explanation's utility is the negative weighted sum of per-state
KL divergences between its policy's action distribution and the target's,
over a fixed sample of non-trap product states.  Weights come from the
target's normalized action entropy, so states where the target is decisive
count more.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

KL_EPS = 1e-8


class NoNontrapStatesError(RuntimeError):
    pass


class CoverageGapError(ValueError):
    pass


@dataclass(frozen=True)
class StateSample:
    """Sampled non-trap states (policy rows) with their utility weights."""

    rows: tuple[int, ...]
    weights: np.ndarray
    seed: int | None = None
    degenerate: bool = False  # target uniform everywhere; uniform fallback


@dataclass(frozen=True)
class UtilityRecord:
    key: str
    wkl: float | None
    utility: float | None
    mean_return: float
    filtered: bool
    replicates: int = 1
    trainer: str = ""
    seed: int | None = None


def sample_nontrap(model, n: int, rng: np.random.Generator) -> list[int]:
    """Draw policy rows uniformly; these are exactly the non-trap, non-terminal
    product states (the automaton component of every actionable state is q0).

    Without replacement when enough rows exist, with replacement otherwise.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    n_rows = model.n_rows
    if n_rows == 0:
        raise NoNontrapStatesError("no non-trap states to sample")
    replace = n > n_rows
    return sorted(rng.choice(n_rows, size=min(n, n_rows) if not replace else n,
                             replace=replace).tolist())


def _clamp(p: np.ndarray, eps: float) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), eps, 1.0)
    return p / p.sum(axis=-1, keepdims=True)


def kl(p, q, eps: float = KL_EPS) -> float:
    """Discrete KL(p || q) with epsilon-clamped, renormalized inputs."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    pc, qc = _clamp(p, eps), _clamp(q, eps)
    return float(np.sum(pc * np.log(pc / qc)))


def kl_rows(p: np.ndarray, q: np.ndarray, eps: float = KL_EPS) -> np.ndarray:
    """Row-wise KL for stacked distributions, same clamping as :func:`kl`."""
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    pc, qc = _clamp(p, eps), _clamp(q, eps)
    return (pc * np.log(pc / qc)).sum(axis=-1)


def normalized_entropy(p, h_max: float) -> float:
    """1 - H(p)/H_max: zero for a uniform row, one for a deterministic row."""
    if h_max <= 0:
        raise ValueError("h_max must be > 0")
    p = np.asarray(p, dtype=float)
    return float(1.0 + xlogy(p, p).sum() / h_max)


def weights(target, sample_rows, enabled: bool = True):
    """Per-state utility weights from the target's normalized entropy.

    Returns ``(weights, degenerate)``.  With ``enabled=False`` (the ablation)
    every weight is 1.  A target uniform on every sampled state zeroes the
    normalizer; that degenerate case falls back to uniform weights.
    """
    rows = np.asarray(sample_rows, dtype=int)
    if rows.size == 0:
        raise ValueError("empty state sample")
    if not enabled:
        return np.ones(rows.size), False
    p = target.probs[rows]
    h_max = np.log(p.shape[1])
    hbar = 1.0 + xlogy(p, p).sum(axis=1) / h_max
    total = hbar.sum()
    if total <= 0:
        return np.full(rows.size, 1.0 / rows.size), True
    return hbar / total, False


def build_sample(model, target, n: int, rng: np.random.Generator,
                 weights_enabled: bool = True, seed: int | None = None) -> StateSample:
    rows = sample_nontrap(model, n, rng)
    w, degenerate = weights(target, rows, enabled=weights_enabled)
    return StateSample(tuple(rows), w, seed=seed, degenerate=degenerate)


def utility(candidate, target, sample: StateSample, key: str = "",
            mean_return: float = float("nan"), eps: float = KL_EPS,
            replicates: int = 1, seed: int | None = None) -> UtilityRecord:
    """Weighted-KL utility of a candidate policy against the target."""
    rows = np.asarray(sample.rows, dtype=int)
    if rows.max(initial=-1) >= candidate.probs.shape[0] or rows.max(initial=-1) >= target.probs.shape[0]:
        raise CoverageGapError("sampled states not covered by both policies")
    divs = kl_rows(candidate.probs[rows], target.probs[rows], eps=eps)
    wkl = float(np.dot(sample.weights, divs))
    return UtilityRecord(key=key, wkl=wkl, utility=-wkl, mean_return=mean_return,
                         filtered=False, replicates=replicates,
                         trainer=candidate.trainer, seed=seed)
