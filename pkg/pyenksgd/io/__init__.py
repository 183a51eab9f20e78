"""
This package contains the classes and functions for persisting experiments. Traces are written and read with
:class:`pyenksgd.io.TraceWriter` and :class:`pyenksgd.io.TraceReader`, summaries and datasets with
:func:`pyenksgd.io.write_summary` and :func:`pyenksgd.io.write_dataset`.
"""

from .writer import TraceWriter, TraceWriterOptions, TRACE_COLUMNS, emit_trace, write_summary, write_dataset
from .reader import TraceReader
from .config import load_config_file, parse_config_text, normalize_key
