import csv

import numpy as np
import pytest

from featopt import Dataset


def make_planted_regression(seed, n=600, k=20, noise=0.1):
    """y = 2*x0 - x1 + x2 + N(0, noise); the informative set is {0, 1, 2}."""
    g = np.random.Generator(np.random.PCG64(seed))
    X = g.normal(size=(n, k))
    y = 2.0 * X[:, 0] - X[:, 1] + X[:, 2]
    y = y + np.random.Generator(np.random.PCG64(seed + 10_000)).normal(0.0, noise, n)
    return Dataset(
        features=X,
        targets=y,
        task="regression",
        feature_names=[f"x{i}" for i in range(k)],
        name=f"planted-{seed}",
    )


def write_csv(path, X, y, header=None):
    X = np.asarray(X)
    n, k = X.shape
    header = header or [f"x{i}" for i in range(k)] + ["target"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            writer.writerow([repr(float(v)) for v in X[i]] + [repr(float(y[i]))])
    return path


@pytest.fixture
def toy_csv(tmp_path):
    """Small regression CSV: y = x0 - 2*x3 + noise over 8 features."""
    g = np.random.Generator(np.random.PCG64(7))
    n, k = 150, 8
    X = g.normal(size=(n, k))
    y = X[:, 0] - 2.0 * X[:, 3] + g.normal(0.0, 0.1, n)
    return str(write_csv(tmp_path / "toy.csv", X, y))
