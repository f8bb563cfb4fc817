import pathlib

import pytest

from oneguard import config as cfg

REPO = pathlib.Path(__file__).resolve().parent.parent
SCHEDULES = REPO / "schedules"

DENSITY_LIMIT = SCHEDULES / "density_limit.yaml"
DUAL_NTM = SCHEDULES / "dual_ntm.yaml"
DUAL_NTM_EVENTS = SCHEDULES / "dual_ntm_events.csv"


@pytest.fixture(scope="session")
def density_limit_schedule():
    return cfg.parse_file(DENSITY_LIMIT)


@pytest.fixture(scope="session")
def dual_ntm_schedule():
    return cfg.parse_file(DUAL_NTM)


@pytest.fixture(scope="session")
def density_limit_compiled(density_limit_schedule):
    return cfg.compile_schedule(density_limit_schedule)


@pytest.fixture(scope="session")
def dual_ntm_compiled(dual_ntm_schedule):
    return cfg.compile_schedule(dual_ntm_schedule)
