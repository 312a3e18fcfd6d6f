"""Shared fixtures: a small trained model over the planted-rule world."""

import pytest

from ctxdet.features import build_training_set
from ctxdet.geometry import RelationConfig
from ctxdet.network import TrainConfig, train_scg
from ctxdet.synth import SynthSpec, generate


@pytest.fixture(scope="session")
def relations():
    return RelationConfig()


@pytest.fixture(scope="session")
def rule_world(relations):
    """Train bundle, test bundle, and a model good enough to trust its scores."""
    train_bundle = generate(SynthSpec(images=200, seed=5))
    test_bundle = generate(SynthSpec(images=40, seed=55))
    x, y = build_training_set(
        train_bundle.dets_by_image, train_bundle.gt_by_image, relations, train_bundle.vocab
    )
    model, report = train_scg(
        x,
        y,
        TrainConfig(hidden=48, max_epochs=300, max_validation_failures=20, seed=1),
        vocabulary=train_bundle.vocab.names,
        relation_config=relations,
    )
    return {
        "train": train_bundle,
        "test": test_bundle,
        "model": model,
        "report": report,
    }


@pytest.fixture(scope="session")
def rule_model(rule_world):
    return rule_world["model"]
