"""Formula layer: encodings, canonicalization, robustness, neighborhoods.

The canonicalization oracle is a truth-table signature: two encodings denote
the same explanation iff their F- and G-parts have identical boolean truth
tables over all predicate assignments.  Counts and neighborhood sizes below
were frozen from that oracle.
"""

import itertools

import numpy as np
import pytest

from tlexplain import formula as fm

from conftest import generic_predicates


def _assignment_features(assignment):
    """Feature vector making predicate i true iff assignment[i] (threshold 1)."""
    return np.array([0.5 if sat else 1.5 for sat in assignment])


def _signature(canon, n):
    """Independent boolean truth tables of both parts, from evaluate_bool."""
    preds = generic_predicates(n)
    f_tree = fm.part_formula(canon.f_part, preds)
    g_tree = fm.part_formula(canon.g_part, preds)
    tables = []
    for tree in (f_tree, g_tree):
        table = tuple(
            fm.evaluate_bool(tree, _assignment_features(a))
            for a in itertools.product((False, True), repeat=n)
        )
        tables.append(table)
    return tuple(tables)


# ---------------------------------------------------------------------------
# Encodings and decode
# ---------------------------------------------------------------------------


class TestEncoding:
    def test_bits_roundtrip(self):
        enc = fm.ExplanationEncoding((0, 1, 0), (0, 1, 1), (1, 0, 0), 1, 0)
        assert fm.ExplanationEncoding.from_bits(enc.bits()) == enc
        assert len(enc.bits()) == 3 * 3 + 2

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            fm.ExplanationEncoding.from_bits((0, 1, 0, 1))

    def test_all_temporal_equal_is_invalid(self):
        enc = fm.ExplanationEncoding((0, 0, 0), (0, 0, 0), (0, 0, 0), 0, 0)
        assert not enc.is_valid()
        with pytest.raises(fm.InvalidEncodingError):
            fm.decode(enc)

    def test_random_encoding_always_valid(self, rng):
        for _ in range(200):
            assert fm.random_encoding(3, rng).is_valid()


class TestDecode:
    def test_single_clause_cnf_is_disjunction(self, preds3):
        enc = fm.ExplanationEncoding((0, 0, 0), (0, 1, 1), (0, 0, 0), 0, 0)
        assert fm.render(fm.decode(enc), preds3) == "F(psi0) & G(psi1 | psi2)"

    def test_singleton_clauses_merge_with_outer_connective(self, preds3):
        enc = fm.ExplanationEncoding((0, 0, 0), (0, 1, 1), (0, 0, 1), 0, 0)
        assert fm.render(fm.decode(enc), preds3) == "F(psi0) & G(psi1 & psi2)"

    def test_single_clause_dnf_is_conjunction(self, preds3):
        enc = fm.ExplanationEncoding((0, 0, 0), (0, 1, 1), (0, 0, 0), 0, 1)
        assert fm.render(fm.decode(enc), preds3) == "F(psi0) & G(psi1 & psi2)"

    def test_clause_swap_canonicalizes_identically(self):
        base = fm.ExplanationEncoding((0, 1, 0, 0), (0, 0, 1, 1), (0, 0, 0, 1), 0, 0)
        swapped = fm.ExplanationEncoding((0, 1, 0, 0), (0, 0, 1, 1), (0, 0, 1, 0), 0, 0)
        assert fm.decode(base) == fm.decode(swapped)

    def test_singleton_part_ignores_form_bit(self):
        a = fm.ExplanationEncoding((0, 0), (0, 1), (0, 0), 0, 0)
        b = fm.ExplanationEncoding((0, 0), (0, 1), (0, 0), 1, 1)
        assert fm.decode(a) == fm.decode(b)

    def test_decode_matches_truth_table_oracle_n3(self):
        """decode(e1) == decode(e2) iff both parts are logically identical."""
        preds = generic_predicates(3)
        by_key, by_sig = {}, {}
        for enc in fm.iter_valid_encodings(3):
            canon = fm.decode(enc)
            by_key.setdefault(fm.render(canon, preds), set()).add(enc)
            by_sig.setdefault(_signature(canon, 3), set()).add(enc)
        key_partition = {frozenset(e.bits() for e in group) for group in by_key.values()}
        sig_partition = {frozenset(e.bits() for e in group) for group in by_sig.values()}
        assert key_partition == sig_partition


class TestRender:
    def test_simple_parts(self):
        preds = generic_predicates(2)
        enc = fm.ExplanationEncoding((0, 1), (0, 1), (0, 0), 0, 0)
        assert fm.render(fm.decode(enc), preds) == "F(psi0) & G(!psi1)"

    def test_two_clause_dnf_parenthesized(self):
        preds = generic_predicates(5)
        enc = fm.ExplanationEncoding(
            (0, 0, 1, 0, 0), (0, 0, 1, 1, 1), (0, 0, 0, 0, 1), 0, 1)
        rendered = fm.render(fm.decode(enc), preds)
        assert rendered.endswith("G((!psi2 & psi3) | (psi4))")

    def test_ctf_paper_target(self):
        preds = (
            fm.AtomicPredicate(0, "psi_ba_rf", 1, 1.0),
            fm.AtomicPredicate(1, "psi_ra_bf", 0, 1.0),
            fm.AtomicPredicate(2, "psi_ba_ra", 2, 1.5),
            fm.AtomicPredicate(3, "psi_ba_bt", 3, 1.0),
        )
        enc = fm.ExplanationEncoding((0, 1, 1, 0), (0, 0, 1, 1), (0, 0, 0, 0), 1, 0)
        assert fm.render(fm.decode(enc), preds) == (
            "F(psi_ba_rf & !psi_ra_bf) & G(!psi_ba_ra | psi_ba_bt)")

    def test_render_deterministic(self, preds3, rng):
        for _ in range(50):
            enc = fm.random_encoding(3, rng)
            canon = fm.decode(enc)
            assert fm.render(canon, preds3) == fm.render(canon, preds3)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


class TestEnumerateAll:
    def test_n1_empty(self):
        assert fm.enumerate_all(generic_predicates(1)) == []

    def test_n2_count(self):
        # frozen from the truth-table signature oracle over all 2^8 encodings
        assert len(fm.enumerate_all(generic_predicates(2))) == 8

    def test_n3_count(self):
        assert len(fm.enumerate_all(generic_predicates(3))) == 96

    def test_n4_count(self):
        # the canonical rewrite rules yield 1408 at N=4 (documented deviation
        # from the externally reported 640, whose dedup rules are unspecified)
        assert len(fm.enumerate_all(generic_predicates(4))) == 1408

    def test_cap_enforced(self):
        with pytest.raises(fm.CapExceededError):
            fm.enumerate_all(generic_predicates(5), cap=4)

    @pytest.mark.parametrize("n", [2, 3])
    def test_matches_signature_count(self, n):
        signatures = {
            _signature(fm.decode(enc), n) for enc in fm.iter_valid_encodings(n)
        }
        assert len(fm.enumerate_all(generic_predicates(n))) == len(signatures)

    def test_sorted_and_unique_keys(self, preds3):
        keys = [fm.render(c, preds3) for c in fm.enumerate_all(preds3)]
        assert keys == sorted(keys)
        assert len(set(keys)) == len(keys)


# ---------------------------------------------------------------------------
# Robustness
# ---------------------------------------------------------------------------


class TestRobustness:
    def test_literal(self):
        lit = fm.Lit(0, 1.0, False, "psi0")
        assert fm.robustness_state(lit, np.array([0.3])) == pytest.approx(0.7)

    def test_negated_literal(self):
        lit = fm.Lit(0, 1.0, True, "psi0")
        assert fm.robustness_state(lit, np.array([0.3])) == pytest.approx(-0.7)

    def test_conjunction_is_min(self):
        a = fm.Lit(0, 1.0, False, "a")   # rho = 0.2
        b = fm.Lit(1, 1.0, False, "b")   # rho = -0.3
        tree = fm.And((a, b))
        assert fm.robustness_state(tree, np.array([0.8, 1.3])) == pytest.approx(-0.3)

    def test_disjunction_is_max(self):
        a = fm.Lit(0, 1.0, False, "a")
        b = fm.Lit(1, 1.0, False, "b")
        tree = fm.Or((a, b))
        assert fm.robustness_state(tree, np.array([0.8, 1.3])) == pytest.approx(0.2)

    def test_vectorized_matches_scalar(self, rng):
        tree = fm.Or((fm.And((fm.Lit(0, 1.0, False, "a"), fm.Lit(1, 2.0, True, "b"))),
                      fm.Lit(2, 0.5, False, "c")))
        x = rng.normal(size=(40, 3))
        batch = fm.robustness_state(tree, x)
        for i in range(40):
            assert batch[i] == pytest.approx(fm.robustness_state(tree, x[i]))

    def test_de_morgan_exact(self, rng):
        a = fm.Lit(0, 1.0, False, "a")
        b = fm.Lit(1, 2.0, True, "b")
        lhs = fm.Not(fm.And((a, b)))
        rhs = fm.Or((fm.Not(a), fm.Not(b)))
        lhs2 = fm.Not(fm.Or((a, b)))
        rhs2 = fm.And((fm.Not(a), fm.Not(b)))
        for _ in range(200):
            x = rng.normal(size=2)
            assert fm.robustness_state(lhs, x) == fm.robustness_state(rhs, x)
            assert fm.robustness_state(lhs2, x) == fm.robustness_state(rhs2, x)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_soundness_against_boolean_oracle(self, n, rng):
        """rho > 0 iff the strict boolean evaluation holds, all formulas <=4 preds.

        Vectors are drawn away from the thresholds so robustness is never
        exactly zero (the boundary is settled by the strictness convention).
        """
        preds = generic_predicates(n)
        vectors = rng.uniform(0, 2, size=(100, n))
        vectors[np.abs(vectors - 1.0) < 1e-6] += 0.01
        for canon in fm.enumerate_all(preds):
            for part in (canon.f_part, canon.g_part):
                tree = fm.part_formula(part, preds)
                rho = fm.robustness_state(tree, vectors)
                for i in range(len(vectors)):
                    assert (rho[i] > 0) == fm.evaluate_bool(tree, vectors[i])


class TestTrajectoryRobustness:
    def test_f_is_max(self):
        assert fm.robustness_trajectory("F", (-1, 0.5, 0.2)) == pytest.approx(0.5)

    def test_g_is_min(self):
        assert fm.robustness_trajectory("G", (-1, 0.5, 0.2)) == pytest.approx(-1.0)

    def test_single_element(self):
        assert fm.robustness_trajectory("F", (0.0,)) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(fm.EmptyTrajectoryError):
            fm.robustness_trajectory("G", ())

    def test_unknown_operator(self):
        with pytest.raises(ValueError):
            fm.robustness_trajectory("X", (1.0,))


# ---------------------------------------------------------------------------
# Neighborhood and expansion
# ---------------------------------------------------------------------------


def _neighborhood_oracle(enc):
    """Independent flip enumeration: every valid single-bit flip."""
    bits = list(enc.bits())
    out = []
    for i in range(len(bits)):
        cand = bits.copy()
        cand[i] ^= 1
        flipped = fm.ExplanationEncoding.from_bits(cand)
        if flipped.is_valid():
            out.append(flipped)
    return out


class TestNeighborhood:
    def test_size_with_blocked_temporal_flip(self):
        # flipping temporal bit 2 of (0,0,1) empties the G-part: 10 of 11 valid
        enc = fm.ExplanationEncoding((0, 0, 0), (0, 0, 1), (0, 0, 0), 0, 0)
        assert len(fm.neighborhood(enc)) == 10

    def test_size_with_two_g_predicates(self):
        # temporal (0,1,1): flipping bit 0 yields all-ones, also invalid; the
        # flip-enumeration oracle gives 10 here too
        enc = fm.ExplanationEncoding((0, 0, 0), (0, 1, 1), (0, 0, 0), 0, 0)
        assert len(fm.neighborhood(enc)) == 10

    def test_form_flips_always_valid(self, rng):
        for _ in range(50):
            enc = fm.random_encoding(3, rng)
            nbh = fm.neighborhood(enc)
            forms = {(c.form_f, c.form_g) for c in nbh if c.temporal == enc.temporal
                     and c.neg == enc.neg and c.clause == enc.clause}
            assert (enc.form_f ^ 1, enc.form_g) in forms
            assert (enc.form_f, enc.form_g ^ 1) in forms

    def test_matches_flip_oracle(self, rng):
        for _ in range(100):
            enc = fm.random_encoding(3, rng)
            assert set(fm.neighborhood(enc)) == set(_neighborhood_oracle(enc))

    def test_never_contains_self(self, rng):
        for _ in range(50):
            enc = fm.random_encoding(4, rng)
            assert enc not in fm.neighborhood(enc)

    def test_symmetry(self, rng):
        for _ in range(100):
            e1 = fm.random_encoding(3, rng)
            for e2 in fm.neighborhood(e1):
                assert e1 in fm.neighborhood(e2)

    def test_connectivity_n3(self):
        """All valid N=3 encodings form one component under single-bit flips."""
        all_valid = set(fm.iter_valid_encodings(3))
        start = next(iter(all_valid))
        seen = {start}
        frontier = [start]
        while frontier:
            nxt = []
            for enc in frontier:
                for nb in fm.neighborhood(enc):
                    if nb not in seen:
                        seen.add(nb)
                        nxt.append(nb)
            frontier = nxt
        assert seen == all_valid


class TestExpansion:
    def test_double_form_flip(self):
        enc = fm.ExplanationEncoding((0, 0), (0, 1), (0, 0), 0, 1)
        nbh = [enc]
        [out] = fm.expansion(nbh, fm.ExplanationEncoding((1, 0), (0, 1), (0, 0), 0, 1))
        assert (out.form_f, out.form_g) == (1, 0)

    def test_involution_on_form_bits(self, rng):
        for _ in range(30):
            parent = fm.random_encoding(3, rng)
            nbh = fm.neighborhood(parent)
            once = fm.expansion(nbh, parent)
            twice = fm.expansion(once, parent)
            assert {(e.neg, e.temporal, e.clause, e.form_f, e.form_g) for e in twice} \
                <= {(e.neg, e.temporal, e.clause, e.form_f, e.form_g) for e in nbh}

    def test_never_larger_than_input(self, rng):
        for _ in range(30):
            parent = fm.random_encoding(3, rng)
            nbh = fm.neighborhood(parent)
            assert len(fm.expansion(nbh, parent)) <= len(nbh)

    def test_excludes_parent_and_nbh(self, rng):
        for _ in range(30):
            parent = fm.random_encoding(3, rng)
            nbh = fm.neighborhood(parent)
            out = fm.expansion(nbh, parent)
            assert parent not in out
            assert not set(out) & set(nbh)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class TestParse:
    def test_roundtrip_all_n3(self, preds3):
        for canon in fm.enumerate_all(preds3):
            key = fm.render(canon, preds3)
            assert fm.parse_explanation(key, preds3) == canon

    def test_unknown_predicate(self, preds3):
        with pytest.raises(fm.ExplanationParseError):
            fm.parse_explanation("F(psi9) & G(psi1 | psi2)", preds3)

    def test_missing_predicate(self, preds3):
        with pytest.raises(fm.ExplanationParseError):
            fm.parse_explanation("F(psi0) & G(psi1)", preds3)

    def test_requires_f_then_g(self, preds3):
        with pytest.raises(fm.ExplanationParseError):
            fm.parse_explanation("G(psi0) & F(psi1 | psi2)", preds3)

    def test_mixed_connectives_rejected(self, preds3):
        with pytest.raises(fm.ExplanationParseError):
            fm.parse_explanation("F(psi0 & psi1 | psi2) & G(psi1)", preds3)


class TestPredicateValidation:
    def test_gap_in_indices(self):
        preds = (fm.AtomicPredicate(0, "a", 0, 1.0), fm.AtomicPredicate(2, "b", 1, 1.0))
        with pytest.raises(ValueError):
            fm.validate_predicates(preds)

    def test_duplicate_names(self):
        preds = (fm.AtomicPredicate(0, "a", 0, 1.0), fm.AtomicPredicate(1, "a", 1, 1.0))
        with pytest.raises(ValueError):
            fm.validate_predicates(preds)

    def test_nonfinite_threshold(self):
        preds = (fm.AtomicPredicate(0, "a", 0, float("inf")),
                 fm.AtomicPredicate(1, "b", 1, 1.0))
        with pytest.raises(ValueError):
            fm.validate_predicates(preds)
