import numpy as np
import pytest

from nccmc.process_models import GbmParams, bundled_tree, simulate_training_paths
from nccmc.stopping_rules import TreeRule, train_tvr


@pytest.fixture(scope="session")
def tree1():
    return bundled_tree("tree_1period")


@pytest.fixture(scope="session")
def tree2():
    return bundled_tree("tree_2period")


@pytest.fixture(scope="session")
def tree2_rules(tree2):
    # stop on the high date-1 node vs the low one; the rules disagree on
    # every path, so every estimator component is exercised
    return TreeRule(tree2, ["0"]), TreeRule(tree2, ["1"])


@pytest.fixture(scope="session")
def d2_params():
    return GbmParams(d=2, r=0.05, delta=0.1, sigma=0.2, K=100.0, y0=90.0, T=3.0, n_dates=10)


@pytest.fixture(scope="session")
def small_rule_pair(d2_params):
    """Two cheaply trained rules at nearby volatilities, sharing noise."""
    from dataclasses import replace

    paths = simulate_training_paths(d2_params, 4000, 1234)
    perturbed = replace(d2_params, sigma=0.23)
    paths_hat = simulate_training_paths(perturbed, 4000, 1234)
    return train_tvr(paths, d2_params), train_tvr(paths_hat, perturbed)


@pytest.fixture(scope="session")
def small_paths(d2_params):
    return simulate_training_paths(d2_params, 4000, 1234)


def assert_close(actual, expected, rel=0.0, abs_=0.0, label=""):
    actual = float(actual)
    expected = float(expected)
    tol = max(rel * abs(expected), abs_)
    assert abs(actual - expected) <= tol, (
        f"{label or 'value'}: {actual!r} not within {tol!r} of {expected!r}"
    )


def random_calib_params(rng: np.random.Generator, n: int):
    """Log-uniform positive parameter draws spanning several decades."""
    from nccmc.calibration import CalibParams

    draws = 10.0 ** rng.uniform(-3, 3, size=(n, 4))
    return [CalibParams(v1=a, v2=b, rho1=c, rho2=d) for a, b, c, d in draws]
