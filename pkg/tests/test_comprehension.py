import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.special import expit

from varcontext.compute import ParameterStore
from varcontext.comprehension import HEAD_NAMES, create_head, total_score
from varcontext.core import VariationalContext
from varcontext.data import ExpressionRecord, Scene
from varcontext.errors import ConfigError
from varcontext.language import Vocabulary
from varcontext.evaluation import mil_maxpool_score, mil_noisyor_score

from conftest import make_scene, tiny_params


def _expression(words=("the", "red", "one")):
    return ExpressionRecord(id=5, scene_id=0, words=words, referent_index=0)


class TestVCHead:
    """Context estimate and score assembly of the variational context head."""

    def test_context_weights_are_distributions(self, tiny_model, scene):
        scores = tiny_model.score(scene, _expression())
        beta = scores.beta.data
        assert beta.shape == (3, 3)
        assert np.all(beta >= 0)
        assert_allclose(beta.sum(axis=1), 1.0)
        X = scene.feature_matrix()
        assert_allclose(scores.z.data, beta @ X)

    def test_exclude_self_zeroes_diagonal(self, toy_dataset, scene):
        model = VariationalContext.for_dataset(tiny_params(exclude_self=True), toy_dataset)
        beta = model.score(scene, _expression()).beta.data
        assert_allclose(np.diag(beta), 0.0)
        assert_allclose(beta.sum(axis=1), 1.0)

    def test_exclude_self_single_region_keeps_self(self, toy_dataset):
        model = VariationalContext.for_dataset(tiny_params(exclude_self=True), toy_dataset)
        single = make_scene(visuals=[[1.0, 0.0, 0.0]])
        scores = model.score(single, _expression())
        assert_allclose(scores.beta.data, [[1.0]])
        assert_allclose(scores.posterior.data, [1.0])

    def test_plain_total_combines_components(self, tiny_model, scene):
        s = tiny_model.score(scene, _expression())
        assert_allclose(s.total.data, s.s_theta.data - s.s_phi.data + s.s_omega.data)
        assert_allclose(s.posterior.data.sum(), 1.0)
        assert s.prediction() == int(np.argmax(s.posterior.data))

    def test_wo_reg_keeps_referent_score_only(self, toy_dataset, scene):
        model = VariationalContext.for_dataset(tiny_params(wo_reg=True), toy_dataset)
        s = model.score(scene, _expression())
        assert s.mode == "wo_reg"
        assert_allclose(s.total.data, s.s_theta.data)

    def test_pair_scores_are_ordered(self, tiny_model, scene):
        head = tiny_model.head
        X, _ = tiny_model.scene_tensors(scene)
        cues = tiny_model.cues(_expression())
        pair = head.pair_scores(X, cues).data
        for i in range(3):
            for j in range(3):
                assert pair[i, j] == pytest.approx(head.pair_score(X[i], X[j], cues).item())
        assert not np.allclose(pair, pair.T)

    def test_generation_score_without_decoder(self, tiny_model, scene):
        with pytest.raises(ConfigError):
            tiny_model.score(scene, _expression(), with_generation=True)

    def test_generation_score_adds_expression_likelihood(self, tiny_generation_model, scene):
        expression = _expression()
        s = tiny_generation_model.score(scene, expression, with_generation=True)
        assert s.mode == "with_generation"
        assert_allclose(s.total.data, s.s_theta.data - s.s_phi.data + s.s_omega_prime.data + s.s_psi.data)
        for i in range(3):
            assert s.s_psi.data[i] == pytest.approx(
                tiny_generation_model.expression_log_likelihood(scene, i, expression))

    @settings(max_examples=15, deadline=None)
    @given(st.permutations(range(3)), st.booleans())
    def test_scores_follow_region_order(self, order, exclude_self):
        vocabulary = Vocabulary(["one", "red", "the"])
        model = VariationalContext(tiny_params(exclude_self=exclude_self), vocabulary, seed=1)
        scene = make_scene()
        permuted = Scene(id=0, width=scene.width, height=scene.height,
                         regions=[scene.regions[k] for k in order])
        base = model.score(scene, _expression()).total.data
        moved = model.score(permuted, _expression()).total.data
        assert_allclose(moved, base[list(order)], atol=1e-10)


def test_total_score_modes():
    assert total_score(1.0, 2.0, 3.0) == 2.0
    assert total_score(1.0, 2.0, 3.0, "wo_reg") == 1.0
    assert total_score(1.0, 2.0, 3.0, "with_generation", s_omega_prime=5.0, s_psi=-1.0) == 3.0
    with pytest.raises(ConfigError):
        total_score(1.0, 2.0, 3.0, "with_generation")
    with pytest.raises(ConfigError):
        total_score(1.0, 2.0, 3.0, "bogus")


class TestMILHeads:
    """Head scores agree with the probability-space aggregation rules."""

    @pytest.mark.parametrize("head, rule", [("maxpool", mil_maxpool_score), ("noisyor", mil_noisyor_score)])
    def test_matches_probability_rule(self, toy_dataset, scene, head, rule):
        model = VariationalContext.for_dataset(tiny_params(head=head), toy_dataset)
        s = model.score(scene, _expression())
        pair = s.pair.data
        for i in range(3):
            others = [expit(pair[i, j]) for j in range(3) if j != i]
            assert s.total.data[i] == pytest.approx(rule(others), abs=1e-9)

    @pytest.mark.parametrize("head", ["maxpool", "noisyor"])
    def test_single_region_uses_self_pair(self, toy_dataset, head):
        model = VariationalContext.for_dataset(tiny_params(head=head), toy_dataset)
        s = model.score(make_scene(visuals=[[0.0, 1.0, 0.0]]), _expression())
        assert s.total.data[0] == pytest.approx(np.log(expit(s.pair.data[0, 0])), abs=1e-9)

    def test_mil_head_has_no_generation_score(self):
        head = create_head("maxpool", ParameterStore(), 11, 4)
        with pytest.raises(ConfigError):
            head.score(None, None, mode="with_generation")


class TestRandomHead:

    def test_deterministic_per_expression(self, toy_dataset, scene):
        model = VariationalContext.for_dataset(tiny_params(head="random"), toy_dataset, seed=4)
        first = model.score(scene, _expression()).total.data
        assert_allclose(model.score(scene, _expression()).total.data, first)
        other = ExpressionRecord(id=6, scene_id=0, words=("the", "red", "one"))
        assert not np.allclose(model.score(scene, other).total.data, first)

    def test_has_no_parameters(self, toy_dataset):
        model = VariationalContext.for_dataset(tiny_params(head="random"), toy_dataset)
        assert all(not name.startswith("comprehension.") for name in model.store.names())


def test_create_head_unknown():
    assert set(HEAD_NAMES) == {"vc", "maxpool", "noisyor", "random"}
    with pytest.raises(ValueError):
        create_head("transformer")


def test_generation_requires_vc_head(toy_dataset):
    with pytest.raises(ConfigError):
        VariationalContext.for_dataset(tiny_params(head="maxpool", generation=True), toy_dataset)
