import json
import logging
import os
from typing import Any, Dict

from ..exceptions import ConfigError
from .logging_utils import get_logger, verbosity_to_level

logger = get_logger(level=logging.DEBUG)


def set_v_json_utl(verbosity: int) -> None:
    logger.setLevel(verbosity_to_level(verbosity))


def load_json_with_encoding(file_path: str) -> Dict[str, Any]:
    """
    Load a JSON document from a local path, trying common encodings in turn.

    Args:
        file_path: Path to the JSON file

    Returns:
        Parsed JSON object

    Raises:
        ConfigError: If the file is missing or cannot be parsed as a JSON object
    """
    if not os.path.exists(file_path):
        raise ConfigError(f"JSON file not found: {file_path}")

    encodings = ["utf-8", "utf-16", "latin-1", "cp1252"]
    for encoding in encodings:
        try:
            with open(file_path, "r", encoding=encoding) as f:
                parsed = json.load(f)
        except (UnicodeDecodeError, json.JSONDecodeError):
            continue
        if isinstance(parsed, dict):
            logger.debug(f"Loaded {file_path} with {encoding} encoding")
            return parsed
        raise ConfigError(f"Expected a JSON object in {file_path}")

    raise ConfigError(f"Could not parse {file_path} as JSON with any encoding")


def dump_json(data: Any, file_path: str) -> None:
    """Write ``data`` with sorted keys so repeated runs produce identical bytes."""
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
