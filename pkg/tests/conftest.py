"""Shared fixtures: generic predicate sets and the reference CtF runtime."""

from pathlib import Path

import numpy as np
import pytest

from tlexplain import formula as fm
from tlexplain.config import build_runtime, load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def generic_predicates(n: int) -> tuple[fm.AtomicPredicate, ...]:
    """psi0..psi{n-1}, one per feature, all with threshold 1."""
    return tuple(fm.AtomicPredicate(i, f"psi{i}", i, 1.0) for i in range(n))


@pytest.fixture(scope="session")
def preds3():
    return generic_predicates(3)


@pytest.fixture(scope="session")
def preds4():
    return generic_predicates(4)


@pytest.fixture(scope="session")
def reference_config():
    return load_config(CONFIG_DIR / "ctf_reference.yaml")


@pytest.fixture(scope="session")
def reference_runtime(reference_config):
    return build_runtime(reference_config)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
