"""
Volcast Configuration
Defaults for calendars, indicators, estimation, search and cross validation.
Values can be overridden from the environment (or a .env file) with the VOLCAST_ prefix.
"""

import logging
import os
from datetime import time
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

DATA_DIR = Path(__file__).parent / "data"

CALENDAR_CONFIG = {
    "TIMEZONE": os.getenv("VOLCAST_TIMEZONE", "America/New_York"),
    "SESSION_OPEN": time(9, 30),
    "SESSION_CLOSE": time(16, 0),
    "WEEKEND_DAYS": frozenset({5, 6}),
    "HOLIDAYS_FILE": Path(os.getenv("VOLCAST_HOLIDAYS", DATA_DIR / "us_market_holidays.txt")),
}

# Conventional look-back windows
INDICATOR_WINDOWS = {
    "ADX": 14,
    "EMA": 10,
    "MOM": 10,
    "ROC": 10,
    "RSI": 14,
    "WPR": 14,
}

OPTIMIZER_CONFIG = {
    "METHOD": "Nelder-Mead",
    "MAX_ITER": 2000,
    "REL_TOL": 1e-8,
    "RESTARTS": 3,
    "JITTER": 0.1,
    "SIGMA2_FLOOR": 1e-12,
    "GAIN_TOL": 1e-11,
}

SEARCH_BOUNDS = {
    "max_p": 3,
    "max_q": 3,
    "max_P": 2,
    "max_Q": 2,
    "max_d": 1,
    "max_D": 1,
}

# KPSS 5% critical value (level stationarity) and seasonal-strength threshold
KPSS_CRITICAL = 0.463
SEASONAL_STRENGTH_THRESHOLD = 0.64

CV_CONFIG = {
    "WINDOW_POLICY": "expanding",
    "INITIAL_FRACTION": 0.5,
    "INTRADAY_HORIZON": 8,
    "DAILY_HORIZON": 1,
}

REPLICATE_M_GRIDS = {
    "intraday": (2, 3, 5, 10, 25, 100),
    "daily": (2, 3, 5, 10, 25, 40, 50, 100),
}

REPLICATE_MODELS = {
    "intraday": ("(1,0,3)(0,1,2)[8]", "(1,0,2)(0,1,2)[8]", "auto"),
    "daily": ("(3,1,2)", "auto"),
}

REPLICATE_VWAP_MODELS = {
    "intraday": ("(1,0,3)(0,1,2)[8]", "fdpr:3"),
    "daily": ("(3,1,2)", "fdpr:40"),
}

RUNTIME_CONFIG = {
    "N_JOBS": int(os.getenv("VOLCAST_N_JOBS", "1")),
    "LOG_LEVEL": os.getenv("VOLCAST_LOG_LEVEL", "INFO"),
    "SEED": int(os.getenv("VOLCAST_SEED", "12345")),
}

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level=None):
    """Install a single stream handler on the volcast logger"""
    root = logging.getLogger("volcast")
    root.setLevel((level or RUNTIME_CONFIG["LOG_LEVEL"]).upper())
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(handler)
    return root
