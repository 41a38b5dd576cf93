"""Shared fixtures: toy-exchange objects, backend parametrization, rngs."""

import random
import warnings

import pytest

from rkex import _backends, kep, zpmath
from rkex.kep import ParamSet, PartySecret, PublicShare
from rkex.zpmath import ZpMatrix

import vectors


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: long-running test (acceptance timing runs)"
    )


@pytest.fixture(params=sorted(_backends.available_backends()))
def backend(request):
    """Run the test once per available kernel backend."""
    with _backends.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    """Deterministic generator; tests needing secure randomness build their own."""
    return random.Random(0xC0FFEE)


@pytest.fixture(scope="session")
def toy_params() -> ParamSet:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", kep.ParamAdvisoryWarning)
        return ParamSet(
            p=vectors.TOY_P,
            rows_a=vectors.TOY_ROWS_A,
            cols_a=vectors.TOY_COLS_A,
            t=vectors.TOY_T,
        )


def _mk(rows):
    return ZpMatrix(rows, vectors.TOY_P)


@pytest.fixture(scope="session")
def alice_secret(toy_params) -> PartySecret:
    return PartySecret(
        toy_params, tuple((_mk(a), _mk(b)) for a, b in vectors.ALICE_PAIRS)
    )


@pytest.fixture(scope="session")
def bob_secret(toy_params) -> PartySecret:
    return PartySecret(
        toy_params, tuple((_mk(a), _mk(b)) for a, b in vectors.BOB_PAIRS)
    )


@pytest.fixture(scope="session")
def alice_share(alice_secret) -> PublicShare:
    return kep.share_from_secret(alice_secret)


@pytest.fixture(scope="session")
def bob_share(bob_secret) -> PublicShare:
    return kep.share_from_secret(bob_secret)


@pytest.fixture(scope="session", autouse=True)
def _warm_backends(toy_params):
    """Compile/warm every backend once so timed tests measure steady state."""
    rng = random.Random(1)
    for name in _backends.available_backends():
        with _backends.use_backend(name):
            secret, share = kep.new_session(toy_params, rng)
            kep.derive_session_key(secret, share)
            zpmath.rank_mod(share.mats[0])
