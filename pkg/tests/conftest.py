import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from v2xbeam.config import RunConfig
from v2xbeam.dataset import generate

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SMALL = {
    "seed": 11,
    "scenarios": 8,
    "channel": {"num_bs_antennas": 16, "num_ms_antennas": 16},
    "codebook": {"tx": 16, "rx": 16},
    "features": {"sif": True, "image_width": 64, "image_height": 24},
    "train": {"vdban": {"epochs": 2, "dims": [8, 16], "key_dims": [4, 4], "heads": 2,
                        "ff_dim": 16, "head": [32, 32]},
              "bct": {"epochs": 2, "hidden": 8}},
    "eval": {"location_sigmas": [0.0, 0.5], "fixed_bct": [1, 2, 3]},
}


@pytest.fixture(scope="session")
def small_config():
    return RunConfig(SMALL)


@pytest.fixture(scope="session")
def small_dataset(small_config):
    return generate(small_config)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Acceptance results, filled by test_acceptance.py and printed after the run.
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
