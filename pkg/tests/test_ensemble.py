"""Coefficient laws: sampling determinism, assumption checks, the
asymmetric-hopping class, and the weight substitution that symmetrizes
it."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import jacobi_spectra as js
from conftest import two_atom


class TestTriplesAndLaws:
    def test_triple_rejects_zero_hoppings(self):
        with pytest.raises(ValueError):
            js.CoefficientTriple(0, 1, 1)
        with pytest.raises(ValueError):
            js.CoefficientTriple(1, 1, 0)
        with pytest.raises(ValueError):
            js.CoefficientTriple(float("nan"), 0, 1)

    def test_probabilities_must_sum_to_one(self):
        t = js.CoefficientTriple(1, 0, 1)
        with pytest.raises(ValueError):
            js.DiscreteAtoms((t, t), (0.7, 0.7))

    @given(
        lo=st.floats(0.1, 10),
        scale=st.floats(1.001, 10),
        seed=st.integers(0, 2**31),
    )
    @settings(max_examples=25, deadline=None)
    def test_loguniform_stays_in_range(self, lo, scale, seed):
        law = js.ScalarLaw.loguniform(lo, lo * scale)
        draws = law.sample(js.substream(seed, 0), 64)
        assert np.all(draws >= lo * (1 - 1e-12))
        assert np.all(draws <= lo * scale * (1 + 1e-12))

    @given(seed=st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_choice_hits_only_listed_values(self, seed):
        law = js.ScalarLaw.choice([1.0, 2.0, 5.0], [0.2, 0.3, 0.5])
        draws = law.sample(js.substream(seed, 0), 128)
        assert set(np.unique(draws)) <= {1.0, 2.0, 5.0}

    def test_scalar_law_dict_round_trip(self):
        laws = [
            js.ScalarLaw.constant(2.5),
            js.ScalarLaw.uniform(-1, 3),
            js.ScalarLaw.loguniform(0.5, 2),
            js.ScalarLaw.normal(0.1, 0.7),
            js.ScalarLaw.lognormal(0.0, 0.3),
            js.ScalarLaw.choice([1.0, 2.0], [0.4, 0.6]),
        ]
        for law in laws:
            back = js.ScalarLaw.from_dict(law.to_dict())
            assert back.kind == law.kind
            d1 = law.sample(js.substream(5, 0), 16)
            d2 = back.sample(js.substream(5, 0), 16)
            np.testing.assert_array_equal(d1, d2)

    def test_distribution_dict_round_trip(self):
        dist = two_atom()
        back = js.distribution_from_dict(dist.to_dict())
        s1 = js.sample_sequence(dist, 32, seed=9)
        s2 = js.sample_sequence(back, 32, seed=9)
        np.testing.assert_array_equal(s1.b, s2.b)


class TestSampling:
    def test_identical_key_identical_sequence(self, two_atom_dist):
        s1 = js.sample_sequence(two_atom_dist, 200, seed=3, replica=5)
        s2 = js.sample_sequence(two_atom_dist, 200, seed=3, replica=5)
        np.testing.assert_array_equal(s1.a, s2.a)
        np.testing.assert_array_equal(s1.b, s2.b)
        np.testing.assert_array_equal(s1.c, s2.c)

    def test_replicas_differ(self, two_atom_dist):
        s1 = js.sample_sequence(two_atom_dist, 200, seed=3, replica=0)
        s2 = js.sample_sequence(two_atom_dist, 200, seed=3, replica=1)
        assert np.any(s1.b != s2.b)

    def test_negative_seed_rejected(self, two_atom_dist):
        with pytest.raises(ValueError):
            js.sample_sequence(two_atom_dist, 8, seed=-1)

    def test_atom_frequencies_binomial(self, two_atom_dist):
        # P(b = +0.5+0.3i) = 1/2; a 6-sigma band at n=4000 is ~ +/-190.
        seq = js.sample_sequence(two_atom_dist, 4000, seed=11)
        k = int(np.count_nonzero(seq.b.real > 0))
        assert abs(k - 2000) < 6 * math.sqrt(4000 * 0.25)

    def test_head_window(self, two_atom_dist):
        seq = js.sample_sequence(two_atom_dist, 64, seed=2)
        h = seq.head(10)
        assert h.n == 10
        np.testing.assert_array_equal(h.b, seq.b[:10])
        with pytest.raises(ValueError):
            seq.head(65)

    def test_custom_law_shape_validation(self):
        bad = js.Custom(lambda rng, n: (np.ones(n), np.ones(n + 1), np.ones(n)))
        with pytest.raises(ValueError):
            js.sample_sequence(bad, 8, seed=0)


class TestAssumptionChecks:
    def test_support_two_atoms_ok(self, two_atom_dist):
        rep = js.check_support_condition(two_atom_dist)
        assert rep.ok and rep.distinct_count == 2 and rep.method == "exact"

    def test_support_single_atom_fails(self):
        rep = js.check_support_condition(js.constant_triple_distribution(1, 0, 1))
        assert not rep.ok

    def test_support_zero_weight_atom_ignored(self):
        t1 = js.CoefficientTriple(1, 0.5, 1)
        t2 = js.CoefficientTriple(1, -0.5, 1)
        rep = js.check_support_condition(js.DiscreteAtoms((t1, t2), (1.0, 0.0)))
        assert not rep.ok

    def test_support_constant_hn_fails(self):
        hn = js.HatanoNelson(
            b_law=js.ScalarLaw.constant(0.0),
            ratio_law=js.ScalarLaw.constant(4.0),
            c_mag_law=js.ScalarLaw.constant(1.0),
        )
        assert not js.check_support_condition(hn).ok

    def test_moment_exact_constant_101(self):
        # |a| = |c| = 1 and b = 0 at delta = 1:
        # 1 + 1/1 + 0 + 1 + 1/1 = 4 exactly.
        rep = js.check_moment_condition(js.constant_triple_distribution(1, 0, 1), 1.0)
        assert rep.exact
        assert rep.magnitude_moment == 4.0
        assert not rep.diverging

    def test_moment_divergence_flagged(self):
        def heavy(rng, n):
            a = np.ones(n, dtype=np.complex128)
            c = np.ones(n, dtype=np.complex128)
            b = (rng.uniform(0, 1, n) ** -4.0).astype(np.complex128)
            return a, b, c

        rep = js.check_moment_condition(js.Custom(heavy), 1.0, samples=100_000)
        assert not rep.exact
        assert rep.diverging

    def test_moment_finite_mc_law(self):
        hn = js.HatanoNelson(
            b_law=js.ScalarLaw.uniform(-1, 1),
            ratio_law=js.ScalarLaw.loguniform(0.5, 2.0),
            c_mag_law=js.ScalarLaw.constant(1.0),
        )
        rep = js.check_moment_condition(hn, 0.5, samples=20_000)
        assert not rep.diverging
        assert rep.magnitude_moment < 10


class TestHatanoNelsonClass:
    def test_sampled_sequence_is_in_class(self):
        hn = js.HatanoNelson(
            b_law=js.ScalarLaw.uniform(-1, 1),
            ratio_law=js.ScalarLaw.loguniform(1.0, 4.0),
            c_mag_law=js.ScalarLaw.loguniform(0.5, 2.0),
            c_phase_law=js.ScalarLaw.uniform(0, 2 * math.pi),
        )
        seq = js.sample_hatano_nelson(hn, 128, seed=4)
        assert js.in_hatano_nelson_class(seq)
        ratios = js.hopping_ratios(seq)
        assert np.all(ratios.real > 0)
        assert np.max(np.abs(ratios.imag)) < 1e-12

    def test_generic_complex_law_not_in_class(self, two_atom_dist):
        seq = js.sample_sequence(two_atom_dist, 64, seed=1)
        assert not js.in_hatano_nelson_class(seq)  # b is complex

    def test_real_b_symmetric_hopping_is_in_class(self):
        seq = js.sample_sequence(two_atom(b=0.7), 64, seed=1)
        assert js.in_hatano_nelson_class(seq)


class TestLiouvilleTransform:
    def test_rejects_out_of_class(self, two_atom_dist):
        seq = js.sample_sequence(two_atom_dist, 32, seed=0)
        with pytest.raises(ValueError):
            js.liouville_transform(seq)

    def test_hand_example_weights(self):
        # ratio r_1 = conj(a_2)/c_1 = 4 gives theta_2 = sqrt(4) = 2 and a
        # symmetrized coupling s_1 = c_1 * sqrt(r_1) = 2.
        seq = js.CoefficientSequence(
            a=np.array([1.0, 4.0], dtype=np.complex128),
            b=np.array([0.3, -0.2], dtype=np.complex128),
            c=np.array([1.0, 1.0], dtype=np.complex128),
            seed=0, replica=0, n=2,
        )
        data = js.liouville_transform(seq)
        np.testing.assert_allclose(np.exp(data.log_weights), [1.0, 2.0])
        np.testing.assert_allclose(data.couplings, [2.0])

    def test_weights_symmetrize_the_matrix(self):
        hn = js.HatanoNelson(
            b_law=js.ScalarLaw.uniform(-1, 1),
            ratio_law=js.ScalarLaw.loguniform(0.25, 4.0),
            c_mag_law=js.ScalarLaw.loguniform(0.5, 2.0),
        )
        seq = js.sample_hatano_nelson(hn, 40, seed=8)
        data = js.liouville_transform(seq)
        J = js.build_jacobi(seq).to_dense()
        theta = np.exp(data.log_weights)
        sym = np.diag(1 / theta) @ J @ np.diag(theta)
        assert np.max(np.abs(sym - sym.T)) < 1e-10
        np.testing.assert_allclose(np.diag(sym, 1), data.couplings, atol=1e-10)

    def test_couplings_square_to_hopping_products(self):
        hn = js.HatanoNelson(
            b_law=js.ScalarLaw.constant(0.0),
            ratio_law=js.ScalarLaw.loguniform(1.0, 9.0),
            c_mag_law=js.ScalarLaw.constant(1.0),
        )
        seq = js.sample_hatano_nelson(hn, 24, seed=3)
        data = js.liouville_transform(seq)
        np.testing.assert_allclose(
            data.couplings**2, seq.a[1:].conj() * seq.c[:-1], atol=1e-12
        )
