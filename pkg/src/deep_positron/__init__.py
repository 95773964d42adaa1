"""Exact multiply-and-accumulate inference in posit, float and fixed-point formats."""

from .codec import Code, FormatSpec, Kind, round_to_format
from .errors import PositronError

__all__ = ["Code", "FormatSpec", "Kind", "PositronError", "round_to_format"]
__version__ = "0.1.0"
