import numpy as np
import pytest

from coalex import Dataset


def dataset_from(features, labels, names=None, class_set=(), name="test"):
    features = np.asarray(features, dtype=np.float64)
    if names is None:
        names = tuple(f"a{j}" for j in range(features.shape[1]))
    return Dataset(tuple(names), features, tuple(labels), tuple(class_set), name=name)


@pytest.fixture
def xor4():
    """Four-point XOR: neither attribute alone carries any signal."""
    return dataset_from(
        [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]],
        ["p", "q", "q", "p"],
        name="xor4",
    )


@pytest.fixture
def separable2():
    """Two points, perfectly separable on the single attribute."""
    return dataset_from([[0.0], [1.0]], ["p", "q"], name="separable2")


@pytest.fixture
def blob_dataset():
    """Small continuous dataset with an easy class boundary on a0."""
    rng = np.random.default_rng(77)
    m = 40
    a0 = np.concatenate([rng.uniform(0, 1, m // 2), rng.uniform(2, 3, m // 2)])
    x = np.column_stack([a0, rng.normal(size=m), rng.normal(size=m)])
    labels = ["lo"] * (m // 2) + ["hi"] * (m // 2)
    return dataset_from(x, labels, name="blob")
