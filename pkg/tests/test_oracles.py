import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from varcontext.errors import ValidationError
from varcontext.evaluation import ToyJoint, elbo_oracle


class TestElboOracle:
    """The variational bound on enumerable toy joints."""

    @settings(max_examples=60)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(0, 6), st.sampled_from([0.3, 1.0, 5.0]))
    def test_bound_holds(self, seed, n, k, concentration):
        toy = ToyJoint.random(np.random.default_rng(seed), n, k, concentration)
        terms = elbo_oracle(toy)
        assert np.all(terms.elbo <= terms.log_marginal + 1e-12)
        assert np.all(terms.kl >= -1e-12)

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(0, 5))
    def test_tight_at_exact_posterior(self, seed, n, k):
        toy = ToyJoint.random(np.random.default_rng(seed), n, k)
        terms = elbo_oracle(toy.with_q(toy.exact_posterior()))
        assert_allclose(terms.elbo, terms.log_marginal, atol=1e-12)

    def test_scalar_for_one_referent(self):
        toy = ToyJoint.random(np.random.default_rng(0), 3, 2)
        all_terms = elbo_oracle(toy)
        one = elbo_oracle(toy, x=1)
        assert one.elbo == pytest.approx(all_terms.elbo[1])
        assert isinstance(one.kl, float)

    def test_point_mass_context(self):
        joint = np.zeros((2, 3))
        joint[:, 1] = [0.25, 0.75]
        q = np.zeros((2, 3))
        q[:, 1] = 1.0
        terms = elbo_oracle(ToyJoint(joint, q))
        assert_allclose(terms.elbo, np.log([0.25, 0.75]))
        assert_allclose(terms.kl, 0.0, atol=1e-15)

    def test_uniform_q_against_hand_computation(self):
        joint = np.array([[0.1, 0.3], [0.4, 0.2]])
        q = np.full((2, 2), 0.5)
        terms = elbo_oracle(ToyJoint(joint, q), x=0)
        prior = joint.sum(axis=0)
        expected = 0.5 * np.log(0.1 / prior[0]) + 0.5 * np.log(0.3 / prior[1]) \
            - (0.5 * np.log(0.5 / prior[0]) + 0.5 * np.log(0.5 / prior[1]))
        assert terms.elbo == pytest.approx(expected)
        assert terms.log_marginal == pytest.approx(np.log(0.4))


class TestToyValidation:

    def test_unnormalized_joint(self):
        with pytest.raises(ValidationError):
            elbo_oracle(ToyJoint(np.ones((2, 2)), np.full((2, 2), 0.5)))

    def test_unnormalized_q_rows_are_itemized(self):
        joint = np.full((3, 2), 1.0 / 6.0)
        q = np.array([[0.5, 0.5], [0.9, 0.9], [1.0, 1.0]])
        with pytest.raises(ValidationError) as info:
            ToyJoint(joint, q).validate()
        assert len(info.value.issues) == 2

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            ToyJoint(np.full((2, 2), 0.25), np.full((2, 3), 1.0 / 3.0)).validate()

    def test_size_limit(self):
        with pytest.raises(ValidationError):
            ToyJoint.random(np.random.default_rng(0), 2, 13)

    def test_posterior_undefined_for_impossible_referent(self):
        joint = np.array([[0.5, 0.5], [0.0, 0.0]])
        with pytest.raises(ValidationError):
            ToyJoint(joint, np.full((2, 2), 0.5)).exact_posterior()
