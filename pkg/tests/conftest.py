import hypothesis
import numpy as np
import pytest

from zodc.datakit import (BenchmarkParams, fit_feature_scaler, generate_benchmark,
                          scale_survival_times, split, SplitSpec)

hypothesis.settings.register_profile("default", deadline=None, max_examples=60)
hypothesis.settings.register_profile("ci", deadline=None, max_examples=200)
hypothesis.settings.load_profile("default")


def standardized_splits(data, seed=0):
    tr, va, te = split(data, SplitSpec(seed=seed))
    sc = fit_feature_scaler(tr)
    parts = [p.with_features(sc.apply(p.features)) for p in (tr, va, te)]
    if hasattr(tr, "times"):
        _, ts = scale_survival_times(parts[0].times, parts[0].events)
        parts = [p.with_times(ts.transform(p.times)) for p in parts]
    return parts


@pytest.fixture(scope="session")
def gaussians():
    data = generate_benchmark("two_gaussians", 1000, 6, 0, BenchmarkParams(delta=2.5))
    return standardized_splits(data)


@pytest.fixture(scope="session")
def weibull():
    data = generate_benchmark("weibull_survival", 1000, 5, 0, BenchmarkParams(censor_frac=0.3))
    return standardized_splits(data)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
