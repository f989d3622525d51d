import csv
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from varcontext.compute import Tensor, log_softmax
from varcontext.config import TrainParams
from varcontext.core import VariationalContext
from varcontext.data import ExpressionRecord, ReferringDataset
from varcontext.errors import ConfigError, ModeError, NumericalError, TrainingHalted
from varcontext.training import (CHECKPOINT_NAME, METRIC_COLUMNS, METRICS_NAME, BaselineTracker, ExpressionStream,
                                 Trainer, baseline_update, entropy_term, load_checkpoint, lr_at,
                                 exact_expected_gradient, reinforce_generation_step, reinforce_surrogate,
                                 sample_referent, scaled_decay_interval, supervised_loss,
                                 unsupervised_loss)
from varcontext.suites.builtin_suites import tiny_instance

from conftest import make_scene, tiny_params


def quiet(**overrides) -> TrainParams:
    values = dict(iterations=6, show_progress=False, log_every=2, checkpoint_every=1000)
    values.update(overrides)
    return TrainParams(**values)


class TestLosses:

    def test_supervised(self):
        scores = Tensor([1.0, 2.0, 0.5])
        expected = -(2.0 - np.log(np.exp([1.0, 2.0, 0.5]).sum()))
        assert supervised_loss(scores, 1).item() == pytest.approx(expected)

    def test_supervised_needs_valid_referent(self):
        with pytest.raises(ModeError):
            supervised_loss(Tensor([1.0, 2.0]), None)
        with pytest.raises(ModeError):
            supervised_loss(Tensor([1.0, 2.0]), 2)

    def test_unsupervised_uses_most_likely_region(self):
        scores = Tensor([1.0, 3.0, 0.0])
        assert unsupervised_loss(scores).item() == pytest.approx(supervised_loss(scores, 1).item())

    def test_entropy_bounds(self):
        assert entropy_term(Tensor(np.zeros(4))).item() == pytest.approx(np.log(4))
        assert entropy_term(Tensor([50.0, 0.0, 0.0])).item() == pytest.approx(0.0, abs=1e-18)


class TestSchedule:

    def test_step_decay(self):
        assert lr_at(0, 0.01, 0.1, 3000) == 0.01
        assert lr_at(2999, 0.01, 0.1, 3000) == 0.01
        assert lr_at(3000, 0.01, 0.1, 3000) == pytest.approx(0.001)
        assert lr_at(159_999) == pytest.approx(0.001)

    def test_negative_iteration(self):
        with pytest.raises(ValueError):
            lr_at(-1)

    def test_scaled_interval(self):
        assert scaled_decay_interval(4000) == 3000
        assert scaled_decay_interval(160_000) == 120_000


class TestReinforce:
    """Sampling, moving-average baseline and the surrogate gradient."""

    def test_baseline_update(self):
        assert baseline_update(0.0, 10.0) == pytest.approx(1.0)
        tracker = BaselineTracker()
        for _ in range(200):
            tracker.update(4.0)
        assert tracker.value == pytest.approx(4.0, rel=1e-6)

    def test_sampling_frequencies(self):
        rng = np.random.default_rng(0)
        draws = [sample_referent(np.array([0.2, 0.8]), rng) for _ in range(4000)]
        assert abs(np.mean(draws) - 0.8) < 0.03

    @pytest.mark.parametrize("posterior", [np.array([0.0, 0.0]), np.array([np.nan, 1.0]), np.array([0.3, 0.3])])
    def test_degenerate_posterior(self, posterior):
        with pytest.raises(NumericalError):
            sample_referent(posterior, np.random.default_rng(0))

    def test_surrogate_gradient_holds_advantage_constant(self):
        theta = Tensor([0.4, -0.1], requires_grad=True)
        w = Tensor(1.5, requires_grad=True)
        log_p = log_softmax(theta)
        ce = w * w
        surrogate = reinforce_surrogate(ce, log_p[0], baseline=1.0)
        surrogate.backward()
        p = np.exp(log_p.data)
        assert_allclose(theta.grad, (2.25 - 1.0) * (np.array([1.0, 0.0]) - p))
        assert w.grad == pytest.approx(3.0)


def _model_gradient(model, build) -> np.ndarray:
    model.store.zero_grad()
    build().backward()
    return np.concatenate([p.grad.ravel() for p in model.parameters()])


class TestReinforceOnModel:
    """Sampled generation gradients of a two-region model against the enumerated expectation."""

    @pytest.fixture(scope="class")
    def instance(self):
        model, scene, expression = tiny_instance(seed=2, generation=True)
        return model, replace(scene, regions=scene.regions[:2]), expression

    def test_enumerated_gradient_matches_autograd(self, instance):
        model, scene, expression = instance

        def score():
            return model.score(scene, expression)

        probs = score().posterior.numpy()
        losses = np.array([model.ce_loss(scene, expression, k, score()).item() for k in range(2)])
        score_grads = np.stack([_model_gradient(model, lambda k=k: score().log_posterior[k]) for k in range(2)])
        loss_grads = np.stack([_model_gradient(model, lambda k=k: model.ce_loss(scene, expression, k, score()))
                               for k in range(2)])
        exact = exact_expected_gradient(probs, losses, score_grads, loss_grads)

        def expected_loss():
            scores = score()
            return (scores.posterior[0] * model.ce_loss(scene, expression, 0, scores)
                    + scores.posterior[1] * model.ce_loss(scene, expression, 1, scores))

        assert_allclose(exact, _model_gradient(model, expected_loss), rtol=1e-6, atol=1e-9)

    def test_sampled_mean_within_three_standard_errors(self, instance):
        model, scene, expression = instance
        rng = np.random.default_rng(7)
        samples, outcomes = [], []
        for _ in range(400):
            drawn = {}

            def surrogate():
                loss, _, k = reinforce_generation_step(model, scene, expression, model.score(scene, expression),
                                                       baseline=0.0, rng=rng, training=False)
                drawn["k"] = k
                return loss

            samples.append(_model_gradient(model, surrogate))
            outcomes.append(drawn["k"])
        samples, outcomes = np.stack(samples), np.array(outcomes)
        assert set(outcomes) == {0, 1}

        scores = model.score(scene, expression)
        probs = scores.posterior.numpy()
        losses = np.array([model.ce_loss(scene, expression, k, scores).item() for k in range(2)])
        score_grads = np.stack([_model_gradient(model, lambda k=k: model.score(scene, expression).log_posterior[k])
                                for k in range(2)])
        loss_grads = np.stack([
            _model_gradient(model, lambda k=k: model.ce_loss(scene, expression, k, model.score(scene, expression)))
            for k in range(2)])
        exact = exact_expected_gradient(probs, losses, score_grads, loss_grads)

        # With b = 0 each draw yields L(x) grad log p(x) + grad L(x) for the drawn x.
        per_outcome = losses[:, None] * score_grads + loss_grads
        assert_allclose(samples, per_outcome[outcomes], rtol=1e-6, atol=1e-9)
        standard_error = samples.std(axis=0, ddof=1) / np.sqrt(len(samples))
        assert np.all(np.abs(samples.mean(axis=0) - exact) <= 3.0 * standard_error + 1e-9)


class TestExpressionStream:

    def test_epochs_are_permutations(self, toy_dataset):
        expressions = toy_dataset.split(None)
        stream = ExpressionStream(expressions, seed=3)
        for epoch in range(3):
            ids = sorted(stream.at(epoch * 4 + k).id for k in range(4))
            assert ids == [0, 1, 2, 3]

    def test_prefetch_preserves_order(self, toy_dataset):
        expressions = toy_dataset.split(None)
        plain = [e.id for _, e in ExpressionStream(expressions, seed=9).iterate(5, 30)]
        threaded = [e.id for _, e in ExpressionStream(expressions, seed=9, prefetch=True, queue_size=2).iterate(5, 30)]
        assert plain == threaded

    def test_empty_split(self):
        with pytest.raises(ModeError):
            ExpressionStream([], seed=0)


class TestTrainerSetup:

    def test_random_head_not_trainable(self, toy_dataset):
        model = VariationalContext.for_dataset(tiny_params(head="random"), toy_dataset)
        with pytest.raises(ConfigError):
            Trainer(model, toy_dataset, quiet())

    def test_generation_mode_needs_decoder(self, tiny_model, toy_dataset):
        with pytest.raises(ConfigError):
            Trainer(tiny_model, toy_dataset, quiet(generation_mode="with_generation"))

    def test_supervised_needs_referents(self, toy_dataset):
        toy_dataset.expression(1).referent_index = None
        model = VariationalContext.for_dataset(tiny_params(), toy_dataset)
        with pytest.raises(ModeError):
            Trainer(model, toy_dataset, quiet())
        Trainer(model, toy_dataset, quiet(supervision="unsupervised")).train()


def _single_expression_dataset() -> ReferringDataset:
    expression = ExpressionRecord(id=0, scene_id=0, words=("the", "green", "one"), referent_index=1)
    return ReferringDataset(scenes={0: make_scene()}, expressions=[expression], splits={"train": [0]})


class TestTrainer:
    """The training loop end to end on tiny models."""

    def test_plain_descent_strictly_lowers_loss(self):
        dataset = _single_expression_dataset()
        model = VariationalContext.for_dataset(tiny_params(), dataset)
        trainer = Trainer(model, dataset, quiet(base_lr=0.01, momentum=0.0, weight_decay=0.0, clip_gradients=False))
        expression = dataset.expressions[0]
        losses = [trainer.step(i, expression).loss for i in range(20)]
        assert all(b < a for a, b in zip(losses, losses[1:]))

    def test_overfits_one_expression(self):
        dataset = _single_expression_dataset()
        model = VariationalContext.for_dataset(tiny_params(), dataset)
        trainer = Trainer(model, dataset, quiet(iterations=80, base_lr=0.05, momentum=0.9))
        expression = dataset.expressions[0]
        scene = dataset.scene_of(expression)
        before = supervised_loss(model.score(scene, expression), 1).item()
        trainer.train()
        after = supervised_loss(model.score(scene, expression), 1).item()
        assert after < before
        assert model.predict(scene, expression) == 1
        assert trainer.training_accuracy() == 1.0

    @pytest.mark.parametrize("mode", ["plain", "with_generation", "with_generation_pg"])
    def test_same_seed_same_parameters(self, toy_dataset, mode):
        generation = mode != "plain"
        states = []
        for _ in range(2):
            model = VariationalContext.for_dataset(tiny_params(generation=generation, dropout=0.3), toy_dataset, seed=2)
            trainer = Trainer(model, toy_dataset, quiet(generation_mode=mode, supervision="unsupervised"), seed=11)
            trainer.train()
            states.append((model.state_dict(), trainer.baseline.value))
        (a, baseline_a), (b, baseline_b) = states
        for name in a:
            assert_allclose(a[name], b[name], rtol=0, atol=0)
        assert baseline_a == baseline_b

    def test_baseline_moves_only_under_policy_gradient(self, toy_dataset, tiny_generation_model):
        trainer = Trainer(tiny_generation_model, toy_dataset, quiet(generation_mode="with_generation"))
        trainer.train()
        assert trainer.baseline.value == 0.0

    def test_resume_matches_uninterrupted_run(self, toy_dataset, tmp_path):
        params = tiny_params(generation=True)
        straight = VariationalContext.for_dataset(params, toy_dataset, seed=5)
        Trainer(straight, toy_dataset, quiet(generation_mode="with_generation_pg"), seed=5).train()

        first = VariationalContext.for_dataset(params, toy_dataset, seed=5)
        Trainer(first, toy_dataset, quiet(generation_mode="with_generation_pg"), seed=5,
                out_dir=tmp_path).train(iterations=3)
        checkpoint = load_checkpoint(tmp_path / CHECKPOINT_NAME)
        assert checkpoint.iteration == 3
        resumed = VariationalContext.from_metadata(checkpoint.metadata)
        trainer = Trainer(resumed, toy_dataset, quiet(generation_mode="with_generation_pg"), seed=5,
                          out_dir=tmp_path)
        trainer.resume(tmp_path / CHECKPOINT_NAME)
        trainer.train()

        expected = straight.state_dict()
        for name, values in resumed.state_dict().items():
            assert_allclose(values, expected[name], atol=1e-4)
        with open(tmp_path / METRICS_NAME, newline="", encoding="utf-8") as handle:
            rows = list(csv.reader(handle))
        assert rows[0] == METRIC_COLUMNS
        assert [row[0] for row in rows[1:]] == ["2", "4", "6"]
        assert all(row[1] == "supervised+with_generation_pg" for row in rows[1:])

    def test_checkpoint_metadata(self, toy_dataset, tiny_model, tmp_path):
        Trainer(tiny_model, toy_dataset, quiet(checkpoint_every=2), out_dir=tmp_path).train()
        checkpoint = load_checkpoint(tmp_path / CHECKPOINT_NAME)
        assert checkpoint.iteration == 6
        assert checkpoint.metadata["dataset_fingerprint"] == toy_dataset.fingerprint()
        assert checkpoint.metadata["mode"] == "supervised+plain"
        assert set(checkpoint.momentum) == {p.name for p in tiny_model.parameters()}

    def test_numerical_failure_saves_and_halts(self, toy_dataset, tiny_model, tmp_path):
        trainer = Trainer(tiny_model, toy_dataset, quiet(), out_dir=tmp_path)
        original = trainer.step

        def failing_step(iteration, expression):
            if iteration == 2:
                raise NumericalError("injected")
            return original(iteration, expression)

        trainer.step = failing_step
        with pytest.raises(TrainingHalted) as info:
            trainer.train()
        assert info.value.checkpoint_path is not None
        assert load_checkpoint(info.value.checkpoint_path).iteration == 2
