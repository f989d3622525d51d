import numpy as np
import pytest
from numpy.testing import assert_allclose

from varcontext.compute import SGDMomentum, Tensor
from varcontext.config import TrainParams
from varcontext.core import ModelParams, VariationalContext
from varcontext.data import ExpressionRecord, ReferringDataset
from varcontext.errors import DimensionError, DomainError, ModeError
from varcontext.training import Trainer

from conftest import make_scene, tiny_params


def _expression(words=("the", "red", "one")):
    return ExpressionRecord(id=0, scene_id=0, words=words, referent_index=1)


class TestJointAttention:

    def test_weights_are_unit_rows(self, tiny_generation_model, scene):
        decoder = tiny_generation_model.decoder
        X, _ = tiny_generation_model.scene_tensors(scene)
        beta = tiny_generation_model.score(scene, _expression()).beta
        phi, z_hat = decoder.joint_attention(X, beta)
        assert_allclose(np.linalg.norm(phi.data, axis=1), 1.0, atol=1e-6)
        assert_allclose(z_hat.data, phi.data @ X.data)

    def test_single_region_row(self, tiny_generation_model, scene):
        decoder = tiny_generation_model.decoder
        X, _ = tiny_generation_model.scene_tensors(scene)
        beta = Tensor(np.full((3, 3), 1.0 / 3.0))
        phi_all, z_all = decoder.joint_attention(X, beta)
        phi_1, z_1 = decoder.joint_attention(X, beta, i=1)
        assert_allclose(phi_1.data, phi_all.data[1])
        assert_allclose(z_1.data, z_all.data[1])

    def test_excluded_self_gets_no_weight(self, toy_dataset, scene):
        model = VariationalContext.for_dataset(tiny_params(generation=True, exclude_self=True), toy_dataset)
        X, _ = model.scene_tensors(scene)
        beta = model.score(scene, _expression()).beta
        phi, _ = model.decoder.joint_attention(X, beta)
        assert_allclose(np.diag(phi.data), 0.0)

    def test_beta_shape_checked(self, tiny_generation_model, scene):
        X, _ = tiny_generation_model.scene_tensors(scene)
        with pytest.raises(DimensionError):
            tiny_generation_model.decoder.joint_attention(X, Tensor(np.ones((2, 2)) / 2))


class TestDecoder:
    """Teacher forcing, likelihood and greedy decoding."""

    def test_targets_end_with_stop(self, tiny_generation_model):
        decoder = tiny_generation_model.decoder
        vocabulary = decoder.vocabulary
        assert decoder.targets(["the", "red"]) == [vocabulary.id_of("the"), vocabulary.id_of("red"),
                                                   vocabulary.stop_id]
        assert len(decoder.targets(["the"] * 40)) == decoder.max_len

    def test_likelihood_matches_per_step_distributions(self, tiny_generation_model, scene):
        model = tiny_generation_model
        decoder = model.decoder
        X, I = model.scene_tensors(scene)
        z_hat = model.context_for_generation(scene, 1, _expression())
        words = ["the", "red", "one"]
        steps = decoder._step_distributions(X[1], z_hat, I, words)
        targets = decoder.targets(words)
        assert len(steps) == len(targets)
        for dist in steps:
            assert dist.sum() == pytest.approx(1.0)
        expected = sum(np.log(dist[decoder.position[t]]) for dist, t in zip(steps, targets))
        got = decoder.expression_log_likelihood(X[1], z_hat, I, words).item()
        assert got == pytest.approx(expected)
        assert got == pytest.approx(model.expression_log_likelihood(scene, 1, _expression(tuple(words))))

    def test_generate_is_bounded_and_clean(self, tiny_generation_model, scene):
        model = tiny_generation_model
        words = model.generate(scene, 0, _expression())
        assert len(words) <= model.decoder.max_len
        assert not {"<pad>", "<start>", "<stop>"} & set(words)
        assert model.generate(scene, 0, _expression()) == words

    def test_generate_without_reference_uses_uniform_context(self, tiny_generation_model, scene):
        z_hat = tiny_generation_model.context_for_generation(scene, 2)
        assert z_hat.shape == (tiny_generation_model.params.feature_dim,)
        assert isinstance(tiny_generation_model.generate(scene, 2), list)

    def test_dropout_only_in_training(self, toy_dataset, scene):
        model = VariationalContext.for_dataset(tiny_params(generation=True, dropout=0.5), toy_dataset)
        expression = _expression()
        scores = model.score(scene, expression)
        eval_a = model.ce_loss(scene, expression, 1, scores).item()
        eval_b = model.ce_loss(scene, expression, 1, scores).item()
        assert eval_a == eval_b
        trained = model.ce_loss(scene, expression, 1, scores, training=True,
                                rng=np.random.default_rng(0)).item()
        assert trained != eval_a
        with pytest.raises(DomainError):
            model.ce_loss(scene, expression, 1, scores, training=True, rng=None)

    def test_generation_loss_reaches_context_network(self, tiny_generation_model, scene):
        model = tiny_generation_model
        expression = _expression()
        model.store.zero_grad()
        loss = model.ce_loss(scene, expression, 1, model.score(scene, expression))
        loss.backward()
        phi_grads = [np.abs(p.grad).sum() for p in model.parameters() if p.name.startswith("comprehension.phi.")]
        assert sum(phi_grads) > 0
        assert np.abs(model.encoder.embedding.grad).sum() > 0

    def test_missing_decoder(self, tiny_model, scene):
        with pytest.raises(ModeError):
            tiny_model.generate(scene, 0)
        with pytest.raises(ModeError):
            tiny_model.ce_loss(scene, _expression(), 0, tiny_model.score(scene, _expression()))


class TestMemorization:
    """The decoder fits a single expression it sees over and over."""

    @staticmethod
    def _single_expression_dataset(words):
        expression = ExpressionRecord(id=0, scene_id=0, words=words, referent_index=1)
        return ReferringDataset(scenes={0: make_scene()}, expressions=[expression], splits={"train": [0]})

    def test_generation_loss_strictly_decreases(self):
        dataset = self._single_expression_dataset(("the", "green", "one"))
        model = VariationalContext.for_dataset(tiny_params(generation=True), dataset, seed=0)
        optimizer = SGDMomentum(model.parameters(), momentum=0.0, weight_decay=0.0)
        expression = dataset.expressions[0]
        scene = dataset.scene_of(expression)
        losses = []
        for _ in range(50):
            optimizer.zero_grad()
            loss = model.ce_loss(scene, expression, 1, model.score(scene, expression))
            loss.backward()
            optimizer.step(0.01)
            losses.append(loss.item())
        assert all(b < a for a, b in zip(losses, losses[1:]))

    @pytest.mark.slow
    def test_overfit_reproduces_expression(self):
        words = ("the", "green", "one")
        dataset = self._single_expression_dataset(words)
        params = ModelParams(visual_dim=3, embedding_dim=16, lstm_hidden=8, decoder_hidden=32, gen_min_count=1,
                             dropout=0.0, generation=True)
        model = VariationalContext.for_dataset(params, dataset, seed=0)
        train = TrainParams(iterations=1500, base_lr=0.05, momentum=0.9, decay_every=1500,
                            generation_mode="with_generation", show_progress=False, checkpoint_every=1500)
        Trainer(model, dataset, train, seed=0).train()
        assert tuple(model.generate(dataset.scenes[0], 1, dataset.expressions[0])) == words
