import logging
from datetime import time
from pathlib import Path

import numpy as np
import pytest

from volcast.ingest import SessionCalendar, parse_bars
from volcast.simulate import synthetic_intraday_bars

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


@pytest.fixture
def calendar():
    """Eight hourly bars per session, 09:00-17:00 New York, no holidays"""
    return SessionCalendar(session_open=time(9, 0), session_close=time(17, 0), timezone="America/New_York")


@pytest.fixture
def mixed_bars():
    return parse_bars(FIXTURES / "bars_mixed.csv")


@pytest.fixture
def intraday_bars(rng):
    return synthetic_intraday_bars(30, rng)


@pytest.fixture(autouse=True)
def reset_volcast_logger():
    # the CLI installs a handler bound to the runner's stderr
    yield
    logger = logging.getLogger("volcast")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
