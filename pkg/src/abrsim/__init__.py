"""ATM ABR rate-based flow control: simulator, cell codec and conformance checker."""

from .params import AbrParams, ParameterError
from .rate_codec import decode_rate16, encode_rate16
from .rm_cell import RmCell, parse, serialize

__version__ = "0.1.0"

__all__ = [
    "AbrParams",
    "ParameterError",
    "RmCell",
    "decode_rate16",
    "encode_rate16",
    "parse",
    "serialize",
]
