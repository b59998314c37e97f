"""Greedy local search over the explanation space.

Each candidate evaluation is: build the template automaton, form the product
MDP, train a policy (or several replicates), apply the average-return filter,
and score the weighted-KL utility against the target policy.  Results are
cached under the canonical rendered key, so re-encodings of the same formula
are never retrained.  The search walks single-bit-flip neighborhoods with the
form-bit expansion and next-best extension escapes, restarted from random
encodings.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from . import formula as fm
from . import metrics, rl
from .fspa import build_fspa
from .product import ProductMdp


class EmptyBufferError(RuntimeError):
    """Every candidate in a neighborhood failed the return filter."""


@dataclass
class SearchParams:
    n_search: int = 10
    n_max: int = 10
    n_rep: int = 1
    n_ep: int = 200
    return_threshold: float = 0.05
    n_ext: int = 3
    extension_enabled: bool = True
    expansion_enabled: bool = True
    weights_enabled: bool = True
    top_k: int = 10
    seed: int = 0
    enumeration_cap: int = 6

    def __post_init__(self):
        for name in ("n_search", "n_max", "n_rep", "n_ep", "top_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_ext < 0:
            raise ValueError("n_ext must be >= 0")


@dataclass
class TraceNode:
    node_id: int
    restart: int
    step: int
    key: str
    utility: float | None
    filtered: bool
    parent: str | None
    move: str  # init | flip | expansion | extension


@dataclass
class RestartResult:
    restart: int
    key: str | None
    utility: float | None
    searched_frac: float
    record: metrics.UtilityRecord | None


@dataclass
class MultiStartResult:
    results: list[RestartResult]       # sorted by utility, best first
    overall_searched_frac: float
    denominator: int
    traces: list[TraceNode]


@dataclass
class _BufferEntry:
    key: str
    utility: float
    enc: fm.ExplanationEncoding
    record: metrics.UtilityRecord


def _key_stream(seed: int, key: str, purpose: int) -> np.random.Generator:
    """Deterministic rng keyed by (run seed, explanation, purpose)."""
    return np.random.default_rng(
        np.random.SeedSequence([seed, zlib.crc32(key.encode()), purpose]))


class Evaluator:
    """Shared pipeline + cache for scoring candidate explanations."""

    def __init__(self, model, predicates, target: rl.TabularPolicy,
                 sample: metrics.StateSample, trainer_cfg: rl.TrainerConfig,
                 params: SearchParams, reward_mode: str = "sparse",
                 beta: float = 0.1, gamma: float = 0.95, horizon: int = 100,
                 rho_max: float = 1000.0, kl_eps: float = metrics.KL_EPS,
                 replicate_mode: str = "by-entropy"):
        self.model = model
        self.predicates = tuple(predicates)
        self.target = target
        self.sample = sample
        self.trainer_cfg = trainer_cfg
        self.params = params
        self.reward_mode = reward_mode
        self.beta = beta
        self.gamma = gamma
        self.horizon = horizon
        self.rho_max = rho_max
        self.kl_eps = kl_eps
        self.replicate_mode = replicate_mode
        self.cache: dict[str, metrics.UtilityRecord] = {}

    def key_of(self, canon: fm.CanonicalExplanation) -> str:
        return fm.render(canon, self.predicates)

    def build_mdp(self, canon: fm.CanonicalExplanation) -> ProductMdp:
        fspa = build_fspa(canon, self.predicates, rho_max=self.rho_max)
        return ProductMdp(self.model, fspa, reward_mode=self.reward_mode,
                          beta=self.beta, gamma=self.gamma, horizon=self.horizon)

    def train_policy(self, canon: fm.CanonicalExplanation) -> rl.TabularPolicy:
        key = self.key_of(canon)
        mdp = self.build_mdp(canon)
        if self.trainer_cfg.mode == rl.EXACT_SOFT_VI:
            # deterministic trainer: replicates would be identical
            return rl.train(mdp, self.trainer_cfg)
        replicates = [
            rl.train(mdp, self.trainer_cfg, rng=_key_stream(self.params.seed, key, rep),
                     seed=rep)
            for rep in range(self.params.n_rep)
        ]
        if self.replicate_mode == "by-utility":
            score = lambda p: metrics.utility(p, self.target, self.sample,
                                              eps=self.kl_eps).utility
            return rl.select_replicate(replicates, self.sample.rows,
                                       mode="by-utility", utility_fn=score)
        return rl.select_replicate(replicates, self.sample.rows)

    def evaluate(self, canon: fm.CanonicalExplanation) -> metrics.UtilityRecord:
        key = self.key_of(canon)
        if key in self.cache:
            return self.cache[key]
        policy = self.train_policy(canon)
        mdp = self.build_mdp(canon)
        ret_rng = _key_stream(self.params.seed, key, 999_983)
        mean_return = mdp.average_return(policy, self.params.n_ep, ret_rng)
        if mean_return <= self.params.return_threshold:
            record = metrics.UtilityRecord(
                key=key, wkl=None, utility=None, mean_return=mean_return,
                filtered=True, replicates=self.params.n_rep,
                trainer=self.trainer_cfg.mode, seed=self.params.seed)
        else:
            record = metrics.utility(
                policy, self.target, self.sample, key=key,
                mean_return=mean_return, eps=self.kl_eps,
                replicates=self.params.n_rep, seed=self.params.seed)
        self.cache[key] = record
        return record


@dataclass
class _SearchContext:
    evaluator: Evaluator
    params: SearchParams
    trace: list[TraceNode]
    touched: set
    restart: int = 0
    _next_id: int = 0

    def record(self, key, record, step, parent, move):
        self.trace.append(TraceNode(
            node_id=self._next_id, restart=self.restart, step=step, key=key,
            utility=record.utility, filtered=record.filtered,
            parent=parent, move=move))
        self._next_id += 1


def _sorted_buffer(entries: dict[str, _BufferEntry]) -> list[_BufferEntry]:
    return sorted(entries.values(), key=lambda e: (-e.utility, e.key))


def eval_neighbors(enc: fm.ExplanationEncoding, ctx: _SearchContext, step: int,
                   move_label: str = "flip") -> list[_BufferEntry]:
    """Evaluate an explanation and its neighborhood; sorted best-first.

    Follows the stall rule: the form-bit expansion set is only evaluated when
    the plain neighborhood fails to beat the center explanation.
    """
    ev, params = ctx.evaluator, ctx.params
    center = fm.decode(enc)
    center_key = ev.key_of(center)
    entries: dict[str, _BufferEntry] = {}
    seen = {center_key}

    def consider(cand_enc, move, parent):
        canon = fm.decode(cand_enc)
        key = ev.key_of(canon)
        ctx.touched.add(key)
        record = ev.evaluate(canon)
        if key not in seen:
            seen.add(key)
            ctx.record(key, record, step, parent, move)
            if not record.filtered:
                entries[key] = _BufferEntry(key, record.utility, cand_enc, record)

    center_record = ev.evaluate(center)
    ctx.touched.add(center_key)
    if not center_record.filtered:
        entries[center_key] = _BufferEntry(center_key, center_record.utility,
                                           enc, center_record)
    nbh = fm.neighborhood(enc)
    for cand in nbh:
        consider(cand, move_label, center_key)
    buffer = _sorted_buffer(entries)
    stalled = not buffer or buffer[0].key == center_key
    if stalled and params.expansion_enabled:
        for cand in fm.expansion(nbh, enc):
            consider(cand, "expansion", center_key)
        buffer = _sorted_buffer(entries)
    if not buffer:
        raise EmptyBufferError(f"all candidates around {center_key} were filtered")
    return buffer


def greedy_search(start: fm.ExplanationEncoding, ctx: _SearchContext
                  ) -> tuple[str | None, float | None]:
    """One local search from a start encoding; returns (best key, utility)."""
    ev, params = ctx.evaluator, ctx.params
    enc = start
    current_key = ev.key_of(fm.decode(enc))
    ctx.touched.add(current_key)
    start_record = ev.evaluate(fm.decode(enc))
    ctx.record(current_key, start_record, 0, None, "init")
    current_utility = None if start_record.filtered else start_record.utility

    for step in range(1, params.n_max + 1):
        try:
            buffer = eval_neighbors(enc, ctx, step)
        except EmptyBufferError:
            break
        head = buffer[0]
        if head.key != current_key:
            enc, current_key, current_utility = head.enc, head.key, head.utility
            continue
        # stalled on the current explanation: probe the next-best candidates
        jumped = False
        if params.extension_enabled:
            for entry in buffer[1:params.n_ext + 1]:
                try:
                    probe = eval_neighbors(entry.enc, ctx, step,
                                           move_label="extension")
                except EmptyBufferError:
                    continue
                if probe[0].utility > head.utility:
                    enc, current_key, current_utility = (
                        probe[0].enc, probe[0].key, probe[0].utility)
                    jumped = True
                    break
        if not jumped:
            break
    return (current_key, current_utility) if current_utility is not None else (None, None)


def multi_start(evaluator: Evaluator, params: SearchParams) -> MultiStartResult:
    """Seeded random restarts sharing one cache, with top-k reporting."""
    n = len(evaluator.predicates)
    denominator = len(fm.enumerate_all(evaluator.predicates, cap=params.enumeration_cap))
    trace: list[TraceNode] = []
    all_touched: set[str] = set()
    results = []
    next_id = 0
    for i in range(params.n_search):
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, 7919, i]))
        start = fm.random_encoding(n, rng)
        touched: set[str] = set()
        ctx = _SearchContext(evaluator, params, trace, touched, restart=i,
                             _next_id=next_id)
        best_key, best_utility = greedy_search(start, ctx)
        next_id = ctx._next_id
        all_touched |= touched
        record = evaluator.cache.get(best_key) if best_key else None
        results.append(RestartResult(i, best_key, best_utility,
                                     len(touched) / denominator, record))
    results.sort(key=lambda r: (-(r.utility if r.utility is not None else -np.inf),
                                r.key or "~"))
    return MultiStartResult(results[:params.top_k],
                            len(all_touched) / denominator, denominator, trace)


def brute_force_oracle(evaluator: Evaluator, cap: int = 4
                       ) -> tuple[list[metrics.UtilityRecord], list[metrics.UtilityRecord]]:
    """Evaluate every canonical explanation with the shared pipeline.

    Returns (ranked unfiltered records, filtered records); the ranking is by
    utility descending with the rendered key as tiebreak.
    """
    ranked, filtered = [], []
    for canon in fm.enumerate_all(evaluator.predicates, cap=cap):
        record = evaluator.evaluate(canon)
        (filtered if record.filtered else ranked).append(record)
    ranked.sort(key=lambda r: (-r.utility, r.key))
    filtered.sort(key=lambda r: r.key)
    return ranked, filtered
