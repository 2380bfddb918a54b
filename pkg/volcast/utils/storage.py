"""
Storage Utilities
JSON, CSV and holiday-list helpers for reports and reference data
"""

import json
import logging
from datetime import date
from pathlib import Path

logger = logging.getLogger(__name__)


def load_json(path):
    """Load a JSON document, returning an empty dict for a missing or empty file"""
    path = Path(path)
    if not path.exists():
        return {}
    content = path.read_text(encoding="utf-8").strip()
    if not content:
        return {}
    return json.loads(content)


def save_json(payload, path):
    """Save a JSON document with stable key order so reruns are byte-identical"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    logger.info(f"[REPORT] wrote {path}")
    return path


def write_csv(frame, path, float_format="%.10g"):
    """Write a DataFrame as CSV without the index"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    logger.info(f"[REPORT] wrote {path}")
    return path


def write_text(text, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    logger.info(f"[REPORT] wrote {path}")
    return path


def load_holidays(path):
    """Load a holiday list: one YYYY-MM-DD per line, '#' starts a comment"""
    holidays = set()
    with open(path, "r", encoding="utf-8") as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if line:
                holidays.add(date.fromisoformat(line))
    return frozenset(holidays)


def _json_default(value):
    # numpy scalars and arrays, dates, paths
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "isoformat"):
        return value.isoformat()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (frozenset, set)):
        return sorted(value)
    raise TypeError(f"not JSON serializable: {type(value).__name__}")
