import numpy as np
import pytest

from patternmark import WatermarkConfig, build_partition


@pytest.fixture
def alt_config():
    return WatermarkConfig(secret_seed=b"test-seed", m=5, delta=2.0, fpr_threshold=1e-3)


@pytest.fixture
def partition20():
    return build_partition(b"test-seed", 20, 2)


def naive_count(keys, patterns, m):
    pats = {tuple(p) for p in patterns}
    keys = [int(k) for k in keys]
    return sum(1 for j in range(len(keys) - m + 1) if tuple(keys[j:j + m]) in pats)
