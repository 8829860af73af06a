import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qganlab.data import synthetic_gmm
from qganlab.metrics import MetricEvaluator, train_feature_classifier


@pytest.fixture(scope="session")
def small_data():
    train = synthetic_gmm(120, 10, 64, seed=7)
    test = synthetic_gmm(40, 10, 64, seed=8)
    return train, test


@pytest.fixture(scope="session")
def small_classifier(small_data):
    train, test = small_data
    clf = train_feature_classifier(train, test, seed=1234, epochs=6)
    assert clf.test_accuracy >= 0.95
    return clf


@pytest.fixture(scope="session")
def small_evaluator(small_data, small_classifier):
    _, test = small_data
    return MetricEvaluator(
        small_classifier,
        test,
        n_accuracy=200,
        n_fid=200,
        n_is=200,
        is_splits=4,
        diversity_per_class=20,
    )
