"""Explanation class: predicates, bit-vector encodings, canonical forms,
quantitative robustness, and search neighborhoods.

An explanation has the fixed shape ``F(phi_F) & G(phi_G)`` where each part is
a CNF or DNF formula with at most two clauses over a shared predicate set.
Explanations are encoded as a truth-value vector of length ``3*N + 2``:
negation bits, temporal-assignment bits (F vs G), clause-assignment bits, and
one CNF/DNF form bit per part.  Distinct encodings can denote the same
formula; :func:`decode` maps encodings to a canonical representative so that
logically identical encodings compare equal.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

AND = "&"
OR = "|"


class InvalidEncodingError(ValueError):
    """Raised for encodings whose temporal bits are all equal."""


class CapExceededError(ValueError):
    """Raised when an enumeration request exceeds the configured predicate cap."""


class EmptyTrajectoryError(ValueError):
    pass


@dataclass(frozen=True)
class AtomicPredicate:
    """Threshold predicate ``feature < threshold`` over an environment feature."""

    index: int
    name: str
    feature_index: int
    threshold: float


def validate_predicates(predicates: tuple[AtomicPredicate, ...]) -> None:
    indices = [p.index for p in predicates]
    if sorted(indices) != list(range(len(predicates))):
        raise ValueError(f"predicate indices must be 0..{len(predicates) - 1} without gaps: {indices}")
    names = [p.name for p in predicates]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate predicate names: {names}")
    for p in predicates:
        if not np.isfinite(p.threshold):
            raise ValueError(f"non-finite threshold for {p.name}")


# ---------------------------------------------------------------------------
# Formula trees and robustness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Lit:
    feature_index: int
    threshold: float
    negated: bool
    name: str


@dataclass(frozen=True)
class Not:
    child: object


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


@dataclass(frozen=True)
class Top:
    """True constant; only appears as an absorbing self-loop guard."""


TOP = Top()


def robustness_state(node, features):
    """Quantitative satisfaction of a formula tree at one or many states.

    ``features`` is an array whose last axis indexes environment features;
    the result drops that axis.  A literal scores ``threshold - feature``,
    negation flips sign, conjunction takes the min, disjunction the max.
    The formula is (strictly) satisfied iff the result is > 0.
    """
    features = np.asarray(features, dtype=float)
    rho = _robustness(node, features)
    if np.ndim(rho) == 0:
        return float(rho)
    return rho


def _robustness(node, features):
    if isinstance(node, Lit):
        rho = node.threshold - features[..., node.feature_index]
        return -rho if node.negated else rho
    if isinstance(node, Not):
        return -_robustness(node.child, features)
    if isinstance(node, And):
        return np.minimum.reduce([_robustness(c, features) for c in node.children])
    if isinstance(node, Or):
        return np.maximum.reduce([_robustness(c, features) for c in node.children])
    raise TypeError(f"not a formula node: {node!r}")


def evaluate_bool(node, features) -> bool:
    """Boolean satisfaction with strict thresholds; reference semantics."""
    if isinstance(node, Lit):
        sat = features[node.feature_index] < node.threshold
        return (not sat) if node.negated else bool(sat)
    if isinstance(node, Not):
        return not evaluate_bool(node.child, features)
    if isinstance(node, And):
        return all(evaluate_bool(c, features) for c in node.children)
    if isinstance(node, Or):
        return any(evaluate_bool(c, features) for c in node.children)
    raise TypeError(f"not a formula node: {node!r}")


def robustness_trajectory(op: str, values) -> float:
    """Trajectory robustness: F is the max over states, G the min."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EmptyTrajectoryError("trajectory robustness needs at least one state")
    if op == "F":
        return float(values.max())
    if op == "G":
        return float(values.min())
    raise ValueError(f"unknown temporal operator {op!r}")


# ---------------------------------------------------------------------------
# Encodings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplanationEncoding:
    """Raw ``3N + 2`` bit vector defining one explanation."""

    neg: tuple[int, ...]
    temporal: tuple[int, ...]
    clause: tuple[int, ...]
    form_f: int
    form_g: int

    @property
    def n(self) -> int:
        return len(self.neg)

    def bits(self) -> tuple[int, ...]:
        return self.neg + self.temporal + self.clause + (self.form_f, self.form_g)

    @classmethod
    def from_bits(cls, bits) -> "ExplanationEncoding":
        bits = tuple(int(b) for b in bits)
        if len(bits) < 5 or (len(bits) - 2) % 3 != 0:
            raise ValueError(f"bit vector length {len(bits)} is not 3N+2")
        n = (len(bits) - 2) // 3
        return cls(bits[:n], bits[n:2 * n], bits[2 * n:3 * n], bits[3 * n], bits[3 * n + 1])

    def is_valid(self) -> bool:
        bits = self.bits()
        if any(b not in (0, 1) for b in bits):
            return False
        return 0 in self.temporal and 1 in self.temporal

    def check_valid(self) -> None:
        if not self.is_valid():
            raise InvalidEncodingError(
                "each temporal part needs at least one predicate "
                f"(temporal bits {self.temporal})"
            )


def neighborhood(enc: ExplanationEncoding) -> list[ExplanationEncoding]:
    """All valid single-bit-flips of ``enc``, in bit order."""
    enc.check_valid()
    bits = list(enc.bits())
    out = []
    for i in range(len(bits)):
        flipped = bits.copy()
        flipped[i] ^= 1
        cand = ExplanationEncoding.from_bits(flipped)
        if cand.is_valid():
            out.append(cand)
    return out


def expansion(nbh, parent: ExplanationEncoding) -> list[ExplanationEncoding]:
    """Form-bit double flip of each neighborhood member, deduplicated.

    Members already present in ``nbh`` or equal to the parent are dropped.
    """
    seen = set(nbh) | {parent}
    out = []
    for enc in nbh:
        cand = ExplanationEncoding(
            enc.neg, enc.temporal, enc.clause, enc.form_f ^ 1, enc.form_g ^ 1
        )
        if cand not in seen:
            seen.add(cand)
            out.append(cand)
    return out


def random_encoding(n: int, rng: np.random.Generator) -> ExplanationEncoding:
    """Uniform draw over valid encodings (rejection on the temporal bits)."""
    while True:
        bits = rng.integers(0, 2, size=3 * n + 2)
        enc = ExplanationEncoding.from_bits(bits)
        if enc.is_valid():
            return enc


# ---------------------------------------------------------------------------
# Canonical forms
# ---------------------------------------------------------------------------

Literal = tuple[int, bool]  # (predicate index, negated)


@dataclass(frozen=True)
class CanonicalPart:
    """One or two sorted clauses plus the connective structure they carry.

    ``inner`` joins literals within a clause, ``outer`` joins the two clauses;
    ``inner`` is None only for a single singleton clause, ``outer`` is None
    whenever there is a single clause.
    """

    clauses: tuple[tuple[Literal, ...], ...]
    inner: str | None
    outer: str | None

    def literals(self) -> tuple[Literal, ...]:
        return tuple(lit for clause in self.clauses for lit in clause)


@dataclass(frozen=True)
class CanonicalExplanation:
    f_part: CanonicalPart
    g_part: CanonicalPart


def _canonical_part(first: list[Literal], second: list[Literal], dnf: bool) -> CanonicalPart:
    inner = AND if dnf else OR
    outer = OR if dnf else AND
    clauses = [tuple(sorted(c)) for c in (first, second) if c]
    if len(clauses) == 2:
        if all(len(c) == 1 for c in clauses):
            # CNF's "(a) & (b)" and DNF's "(a) | (b)" are plain two-literal
            # clauses; fold them so clause-split encodings canonicalize with
            # single-clause ones.
            merged = tuple(sorted(clauses[0] + clauses[1]))
            return CanonicalPart((merged,), outer, None)
        clauses.sort()
        return CanonicalPart(tuple(clauses), inner, outer)
    clause = clauses[0]
    if len(clause) == 1:
        return CanonicalPart((clause,), None, None)
    return CanonicalPart((clause,), inner, None)


def decode(enc: ExplanationEncoding) -> CanonicalExplanation:
    """Canonical form of an encoding; equal iff logically identical."""
    enc.check_valid()
    parts = {}
    for which in (0, 1):  # 0 -> F-part, 1 -> G-part
        first: list[Literal] = []
        second: list[Literal] = []
        for i in range(enc.n):
            if enc.temporal[i] != which:
                continue
            (second if enc.clause[i] else first).append((i, bool(enc.neg[i])))
        dnf = bool(enc.form_g if which else enc.form_f)
        parts[which] = _canonical_part(first, second, dnf)
    return CanonicalExplanation(parts[0], parts[1])


def _render_clause(clause, op, predicates) -> str:
    lits = [("!" if neg else "") + predicates[i].name for i, neg in clause]
    return f" {op} ".join(lits) if op else lits[0]


def _render_part(part: CanonicalPart, predicates) -> str:
    if part.outer is None:
        return _render_clause(part.clauses[0], part.inner, predicates)
    bodies = [f"({_render_clause(c, part.inner, predicates)})" for c in part.clauses]
    return f" {part.outer} ".join(bodies)


def render(canon: CanonicalExplanation, predicates) -> str:
    """Deterministic text form, e.g. ``F(psi0 & !psi1) & G(!psi2 | psi3)``.

    Used as the cache key and trace label for an explanation.
    """
    f_body = _render_part(canon.f_part, predicates)
    g_body = _render_part(canon.g_part, predicates)
    return f"F({f_body}) & G({g_body})"


def part_formula(part: CanonicalPart, predicates):
    """Formula tree of one temporal part, for robustness evaluation."""

    def lit_node(lit: Literal) -> Lit:
        i, neg = lit
        p = predicates[i]
        return Lit(p.feature_index, p.threshold, neg, p.name)

    def clause_node(clause):
        nodes = tuple(lit_node(l) for l in clause)
        if len(nodes) == 1:
            return nodes[0]
        return And(nodes) if part.inner == AND else Or(nodes)

    clause_nodes = tuple(clause_node(c) for c in part.clauses)
    if len(clause_nodes) == 1:
        return clause_nodes[0]
    return And(clause_nodes) if part.outer == AND else Or(clause_nodes)


def iter_valid_encodings(n: int):
    bit_tuples = list(itertools.product((0, 1), repeat=n))
    temporals = [t for t in bit_tuples if 0 in t and 1 in t]
    for neg in bit_tuples:
        for temporal in temporals:
            for clause in bit_tuples:
                for form_f, form_g in itertools.product((0, 1), repeat=2):
                    yield ExplanationEncoding(neg, temporal, clause, form_f, form_g)


def enumerate_all(predicates, cap: int = 6) -> list[CanonicalExplanation]:
    """Every distinct canonical explanation over the predicate set.

    Exhausts all valid encodings and deduplicates through :func:`decode`;
    result is sorted by rendered key for determinism.
    """
    n = len(predicates)
    if n > cap:
        raise CapExceededError(f"{n} predicates exceeds the enumeration cap {cap}")
    by_key: dict[str, CanonicalExplanation] = {}
    for enc in iter_valid_encodings(n):
        canon = decode(enc)
        by_key.setdefault(render(canon, predicates), canon)
    return [by_key[k] for k in sorted(by_key)]


# ---------------------------------------------------------------------------
# Parsing rendered explanations
# ---------------------------------------------------------------------------


class ExplanationParseError(ValueError):
    pass


def _parse_clause(text: str, name_to_pred) -> tuple[list[Literal], str | None]:
    ops = {o for o in (AND, OR) if o in text}
    if len(ops) > 1:
        raise ExplanationParseError(f"mixed connectives inside clause {text!r}")
    op = ops.pop() if ops else None
    lits = []
    for chunk in text.split(op) if op else [text]:
        chunk = chunk.strip()
        negated = chunk.startswith("!")
        name = chunk[1:].strip() if negated else chunk
        if name not in name_to_pred:
            raise ExplanationParseError(f"unknown predicate {name!r}")
        lits.append((name_to_pred[name].index, negated))
    return lits, op


def _parse_part(body: str, name_to_pred) -> CanonicalPart:
    body = body.strip()
    if body.startswith("("):
        # two parenthesized clauses joined by an outer connective
        depth, split_at, outer = 0, None, None
        for pos, ch in enumerate(body):
            if ch == "(":
                depth += 1
            elif ch == ")":
                depth -= 1
            elif depth == 0 and ch in (AND, OR):
                split_at, outer = pos, ch
                break
        if split_at is None:
            raise ExplanationParseError(f"cannot split clauses in {body!r}")
        left, right = body[:split_at].strip(), body[split_at + 1:].strip()
        clauses = []
        inner = None
        for side in (left, right):
            if not (side.startswith("(") and side.endswith(")")):
                raise ExplanationParseError(f"expected parenthesized clause in {body!r}")
            lits, op = _parse_clause(side[1:-1], name_to_pred)
            clauses.append(lits)
            if op is not None:
                if inner is not None and inner != op:
                    raise ExplanationParseError(f"mixed inner connectives in {body!r}")
                inner = op
        dnf = outer == OR
        expected_inner = AND if dnf else OR
        if inner is not None and inner != expected_inner:
            raise ExplanationParseError(
                f"clause structure in {body!r} is neither CNF nor DNF"
            )
        return _canonical_part(clauses[0], clauses[1], dnf)
    lits, op = _parse_clause(body, name_to_pred)
    # a single conjunction clause is a DNF part, a disjunction a CNF part
    return _canonical_part(lits, [], dnf=(op == AND))


def parse_explanation(text: str, predicates) -> CanonicalExplanation:
    """Inverse of :func:`render` (up to canonicalization).

    Every predicate of the set must appear exactly once and both temporal
    parts must be nonempty, mirroring the encoding invariants.
    """
    stripped = text.strip()
    if not stripped.startswith("F("):
        raise ExplanationParseError(f"explanation must start with 'F(': {text!r}")
    depth = 0
    f_end = None
    for pos, ch in enumerate(stripped):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                f_end = pos
                break
    if f_end is None:
        raise ExplanationParseError(f"unbalanced parentheses in {text!r}")
    rest = stripped[f_end + 1:].strip()
    if not rest.startswith(AND):
        raise ExplanationParseError(f"expected '&' between F(...) and G(...): {text!r}")
    rest = rest[1:].strip()
    if not (rest.startswith("G(") and rest.endswith(")")):
        raise ExplanationParseError(f"expected trailing G(...): {text!r}")
    name_to_pred = {p.name: p for p in predicates}
    f_part = _parse_part(stripped[2:f_end], name_to_pred)
    g_part = _parse_part(rest[2:-1], name_to_pred)
    used = sorted(i for i, _ in f_part.literals() + g_part.literals())
    if used != list(range(len(predicates))):
        raise ExplanationParseError(
            f"explanation must use every predicate exactly once, got indices {used}"
        )
    return CanonicalExplanation(f_part, g_part)
