"""Shared fixtures: tiny model dimensions, hand-built scenes and a small synthetic world."""
import numpy as np
import pytest

from varcontext.core import ModelParams, VariationalContext
from varcontext.data import (Box, ExpressionRecord, ReferringDataset, Region, Scene, SynthConfig,
                             build_region_features, synth_world)
from varcontext.data.features import make_feature
from varcontext.language import Vocabulary

TINY = dict(embedding_dim=4, lstm_hidden=3, decoder_hidden=4, gen_min_count=1, dropout=0.0)


def tiny_params(**overrides) -> ModelParams:
    values = dict(visual_dim=3, **TINY)
    values.update(overrides)
    return ModelParams(**values)


def make_scene(scene_id: int = 0, visuals=None, categories=None, width: float = 100.0,
               height: float = 60.0) -> Scene:
    """Side-by-side 20x20 boxes, one per visual vector."""
    visuals = visuals if visuals is not None else [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    categories = categories or [None] * len(visuals)
    regions = []
    for index, (visual, category) in enumerate(zip(visuals, categories)):
        box = Box(5.0 + 25.0 * index, 10.0, 25.0 + 25.0 * index, 30.0)
        regions.append(Region(id=10 + index, box=box, feature=make_feature(np.asarray(visual, float), category),
                              category=category))
    build_region_features(regions, width, height)
    return Scene(id=scene_id, width=width, height=height, regions=regions)


@pytest.fixture
def scene() -> Scene:
    return make_scene()


@pytest.fixture
def toy_dataset() -> ReferringDataset:
    """Two hand-built scenes with four expressions split into train and test."""
    scenes = {
        0: make_scene(0),
        1: make_scene(1, visuals=[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]),
    }
    expressions = [
        ExpressionRecord(id=0, scene_id=0, words=("the", "red", "one"), referent_index=0),
        ExpressionRecord(id=1, scene_id=0, words=("the", "green", "one"), referent_index=1),
        ExpressionRecord(id=2, scene_id=1, words=("the", "red", "one"), referent_index=1),
        ExpressionRecord(id=3, scene_id=1, words=("the", "blue", "thing"), referent_index=0),
    ]
    return ReferringDataset(scenes=scenes, expressions=expressions, splits={"train": [0, 1, 2], "test": [3]})


@pytest.fixture
def tiny_model(toy_dataset) -> VariationalContext:
    return VariationalContext.for_dataset(tiny_params(), toy_dataset, seed=0)


@pytest.fixture
def tiny_generation_model(toy_dataset) -> VariationalContext:
    return VariationalContext.for_dataset(tiny_params(generation=True), toy_dataset, seed=0)


def small_synth_config(**overrides) -> SynthConfig:
    values = dict(train_scenes=12, test_scenes=4, object_count=(3, 5), visual_dim=11, seed=3)
    values.update(overrides)
    return SynthConfig(**values)


@pytest.fixture(scope="session")
def synth_dataset():
    dataset, report = synth_world(small_synth_config())
    return dataset


@pytest.fixture
def vocabulary() -> Vocabulary:
    return Vocabulary(["blue", "green", "one", "red", "the", "thing"])
