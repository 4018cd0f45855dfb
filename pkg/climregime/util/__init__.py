from .json_utils import dump_json, load_json_with_encoding, set_v_json_utl
from .logging_utils import Colors, get_logger, verbosity_to_level
from .packed import read_packed, write_packed

__all__ = [
    "Colors",
    "get_logger",
    "verbosity_to_level",
    "load_json_with_encoding",
    "dump_json",
    "set_v_json_utl",
    "read_packed",
    "write_packed",
]
