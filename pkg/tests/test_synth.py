import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from varcontext.data import SynthConfig, category_matches, parse_expression, resolve_expression, synth_world
from varcontext.data import synth
from varcontext.errors import ConfigError

from conftest import small_synth_config


class TestSynthWorld:
    """The synthetic world: determinism, uniqueness and ambiguity."""

    def test_same_seed_same_world(self):
        a, _ = synth_world(small_synth_config())
        b, _ = synth_world(small_synth_config())
        assert a.fingerprint() == b.fingerprint()

    def test_different_seed_different_world(self):
        a, _ = synth_world(small_synth_config(seed=1))
        b, _ = synth_world(small_synth_config(seed=2))
        assert a.fingerprint() != b.fingerprint()

    def test_report_counts(self):
        dataset, report = synth_world(small_synth_config())
        assert report.scenes == 16
        assert report.expressions == len(dataset)
        assert report.expressions + report.skipped == 16 * 2
        assert sum(report.skipped_by_reason.values()) == report.skipped + report.skipped_scenes

    def test_splits_partition_expressions(self, synth_dataset):
        ids = [i for name in ("train", "test") for i in synth_dataset.splits[name]]
        assert sorted(ids) == [e.id for e in synth_dataset.expressions]

    def test_every_expression_resolves_to_its_referent(self, synth_dataset):
        config = small_synth_config()
        for expression in synth_dataset.expressions:
            scene = synth_dataset.scene_of(expression)
            query = parse_expression(expression.words, config)
            assert resolve_expression(query, scene) == [expression.referent_index]

    def test_category_alone_is_ambiguous(self, synth_dataset):
        for expression in synth_dataset.expressions:
            scene = synth_dataset.scene_of(expression)
            assert len(category_matches(scene, expression.referent_index)) >= 2

    def test_boxes_inside_image(self, synth_dataset):
        for scene in synth_dataset.scenes.values():
            for region in scene.regions:
                assert region.box.within(scene.width, scene.height)
                assert not region.box.is_degenerate()

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_uniqueness_for_any_seed(self, seed):
        config = small_synth_config(train_scenes=3, test_scenes=0, seed=seed)
        dataset, _ = synth_world(config)
        for expression in dataset.expressions:
            query = parse_expression(expression.words, config)
            assert resolve_expression(query, dataset.scene_of(expression)) == [expression.referent_index]


class TestParser:

    def test_relation_phrase(self):
        config = SynthConfig()
        query = parse_expression(["the", "cube", "left", "of", "the", "red", "sphere"], config)
        assert query.category == "cube" and query.relation == "left-of"
        assert query.landmark.color == "red" and query.landmark.category == "sphere"

    def test_superlative_with_attributes(self):
        query = parse_expression(["the", "largest", "cone"], SynthConfig())
        assert query.superlative == "largest"

    def test_rejects_free_text(self):
        with pytest.raises(ValueError):
            parse_expression(["a", "nice", "cube"], SynthConfig())


class TestSynthConfig:

    def test_visual_dim_too_small(self):
        with pytest.raises(ConfigError):
            SynthConfig(visual_dim=5).validate()

    def test_bad_object_count(self):
        with pytest.raises(ConfigError):
            SynthConfig(object_count=(5, 2)).validate()

    def test_unknown_template(self):
        with pytest.raises(ConfigError):
            SynthConfig(templates=("poetry",)).validate()

    def test_overcrowded_scene_rejected(self):
        config = SynthConfig(object_count=(60, 60), train_scenes=1, test_scenes=1)
        assert [keys for keys, _ in config.problems()] == [("object_count", "image_width", "image_height")]
        with pytest.raises(ConfigError, match="60 objects"):
            synth_world(config)

    def test_image_smaller_than_largest_box(self):
        with pytest.raises(ConfigError, match="cannot hold a box"):
            SynthConfig(image_width=60.0, image_height=60.0).validate()

    def test_small_sizes_fit_small_images(self):
        SynthConfig(sizes=("small",), image_width=60.0, image_height=60.0, object_count=(1, 2)).validate()

    def test_failed_placement_skips_scene(self, monkeypatch):
        monkeypatch.setattr(synth, "_place_boxes", lambda *args, **kwargs: None)
        dataset, report = synth_world(small_synth_config())
        assert len(dataset.scenes) == 0 and len(dataset) == 0
        assert report.skipped_scenes == 16
        assert report.skipped_by_reason == {"no box placement": 16}
