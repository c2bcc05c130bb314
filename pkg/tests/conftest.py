"""Shared synthetic-task recipe used by the training and acceptance tests."""

import pytest

from lsrkit.embeddings import ToyEmbeddingProvider
from lsrkit.encoders import Providers
from lsrkit.synthetic import separable_corpus
from lsrkit.training import TrainingConfig

TASK_SEED = 7
TASK_DIM = 16
TASK_PAIRS = 256
TASK_CLASSES = 32
HELD_OUT = 32  # one pair per class

RECIPE = TrainingConfig(
    epochs=5, batch_size=16, learning_rate=4.0, temperature=1.0, seed=TASK_SEED
)


@pytest.fixture(scope="session")
def task():
    return separable_corpus(
        n_pairs=TASK_PAIRS, n_classes=TASK_CLASSES, dimension=TASK_DIM, seed=TASK_SEED
    )


@pytest.fixture(scope="session")
def task_providers(task):
    return Providers(
        vocab=task.vocab,
        tokens=ToyEmbeddingProvider(TASK_DIM, TASK_SEED),
        image_pooled=task.image_provider,
    )
