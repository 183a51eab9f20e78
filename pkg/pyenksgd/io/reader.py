"""
Module for reading traces written by :class:`pyenksgd.io.TraceWriter` back into memory.
"""

import csv
import json
from typing import Any, Dict, List, Optional, TextIO, Union
from pyenksgd.enksgd import IterationRecord

class TraceReader:
    """
    Class for reading CSV or JSON traces. The format is taken from the file extension unless given.

    :param source: The trace file path or a text stream.
    :param format: Either ``csv`` or ``json``. Required for streams.
    """
    # pylint: disable-next=redefined-builtin
    def __init__(self, source: Union[str, TextIO], format: Optional[str] = None):
        if format is None:
            if not isinstance(source, str):
                raise ValueError("The format of a trace stream must be given explicitly.")

            format = "json" if source.lower().endswith(".json") else "csv"

        if format not in ("csv", "json"):
            raise ValueError(f"Unknown trace format '{format}'. Available formats: csv, json.")

        self._source = source
        self._format = format
        self._config: Optional[Dict[str, Any]] = None

    @property
    def config(self) -> Optional[Dict[str, Any]]:
        """
        Returns the experiment config stored in a JSON trace, available after :meth:`read`.
        """
        return self._config

    @staticmethod
    def _record(row: Dict[str, Any]) -> IterationRecord:
        return IterationRecord(n=int(row["iter"]), phi_mean=float(row["phi_mean"]), dt=float(row["dt"]),
                               backtracks=int(row["backtracks"]), cumulative_evals=int(row["cum_evals"]))

    def _read_stream(self, stream: TextIO) -> Dict[int, List[IterationRecord]]:
        traces: Dict[int, List[IterationRecord]] = {}

        if self._format == "csv":
            for row in csv.DictReader(stream):
                traces.setdefault(int(row["run"]), []).append(self._record(row))
        else:
            document = json.load(stream)
            self._config = document.get("config")

            for run in document["runs"]:
                traces[int(run["run"])] = [self._record(row) for row in run["records"]]

        return traces

    def read(self) -> Dict[int, List[IterationRecord]]:
        """
        Reads the trace.

        :return: The iteration records of every run, keyed by run index.
        """
        if not isinstance(self._source, str):
            return self._read_stream(self._source)

        try:
            with open(self._source, "r", encoding="utf-8", newline="") as file:
                return self._read_stream(file)
        except OSError as exc:
            raise OSError(exc.errno, f"Failed to read '{self._source}': {exc.strerror}", self._source) from exc
