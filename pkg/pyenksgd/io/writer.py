"""
Module for writing experiment artifacts to disk: per-iteration traces as CSV or JSON, experiment summaries as
JSON and the simulated datasets of problems as tidy CSV.
"""

import csv
import json
import io
import logging
from typing import Any, Dict, List, Optional, Sequence, TextIO, Union, TYPE_CHECKING
from dataclasses import dataclass
import numpy as np
from pyenksgd.enksgd import RunResult
from pyenksgd.harness import safe_log10

if TYPE_CHECKING:
    from pyenksgd.harness import SummaryStats
    from pyenksgd.problems import ProblemSpec

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["run", "iter", "phi_mean", "log10_phi", "dt", "backtracks", "cum_evals"]

def trace_rows(results: Sequence[RunResult]) -> List[Dict[str, Any]]:
    """
    Flattens run results into trace rows, one per iteration and run.

    :param results: The results in run order.
    :return: The rows, keyed by :data:`TRACE_COLUMNS`.
    """
    return [{"run": run, "iter": record.n, "phi_mean": record.phi_mean, "log10_phi": safe_log10(record.phi_mean),
             "dt": record.dt, "backtracks": record.backtracks, "cum_evals": record.cumulative_evals}
            for run, result in enumerate(results) for record in result.trace]

def _open_target(target: Union[str, TextIO], writer):
    """
    Calls ``writer`` with a text stream for ``target``, opening and closing files as needed. I/O errors are
    re-raised with the path.
    """
    if not isinstance(target, str):
        writer(target)
        return

    try:
        with open(target, "w", encoding="utf-8", newline="") as file:
            writer(file)
    except OSError as exc:
        raise OSError(exc.errno, f"Failed to write '{target}': {exc.strerror}", target) from exc

    logger.info("Wrote %s.", target)

@dataclass
class TraceWriterOptions:
    """
    Class for storing options for the trace writer.
    """
    format: str = "csv"
    indent: Optional[int] = 2
    include_config: bool = True

class TraceWriter:
    """
    Class allows to write the traces of an experiment to a CSV or JSON file.
    """
    def __init__(self, target: Union[str, TextIO], results: Sequence[RunResult],
                 options: TraceWriterOptions = None, config: Optional[Dict[str, Any]] = None):
        """
        Constructs a new trace writer. The target can be either a file path or a text stream.

        :param target: The destination of the trace.
        :param results: The run results in run order.
        :param options: The options for the trace writer.
        :param config: The resolved experiment config, stored in JSON traces for provenance.
        """
        self._target = target
        self._results = list(results)
        self._options = options if options is not None else TraceWriterOptions()
        self._config = config

        if self._options.format not in ("csv", "json"):
            raise ValueError(f"Unknown trace format '{self._options.format}'. Available formats: csv, json.")

    def _write_csv(self, stream: TextIO):
        writer = csv.DictWriter(stream, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(trace_rows(self._results))

    def _build_document(self) -> Dict[str, Any]:
        rows = trace_rows(self._results)
        runs = []

        for run, result in enumerate(self._results):
            runs.append({"run": run, "method": result.method, "seed": result.seed,
                         "terminal_mean": result.terminal_mean.tolist(), "terminal_phi": result.terminal_phi,
                         "terminal_phi_noiseless": result.terminal_phi_noiseless,
                         "total_evals": result.total_evals,
                         "records": [row for row in rows if row["run"] == run]})

        document: Dict[str, Any] = {"columns": TRACE_COLUMNS, "runs": runs}

        if self._options.include_config and self._config is not None:
            document["config"] = self._config

        return document

    def _write_json(self, stream: TextIO):
        json.dump(self._build_document(), stream, indent=self._options.indent)

    def write(self):
        """
        Writes the trace to the target.
        """
        if self._options.format == "csv":
            _open_target(self._target, self._write_csv)
        else:
            _open_target(self._target, self._write_json)

    def to_string(self) -> str:
        """
        Returns the trace as it would be written.
        """
        buffer = io.StringIO()
        _open_target(buffer, self._write_csv if self._options.format == "csv" else self._write_json)

        return buffer.getvalue()

# pylint: disable-next=redefined-builtin
def emit_trace(results: Sequence[RunResult], format: str, path: Union[str, TextIO],
               config: Optional[Dict[str, Any]] = None):
    """
    Writes the traces of an experiment.

    :param results: The run results in run order.
    :param format: Either ``csv`` or ``json``.
    :param path: The destination.
    :param config: The resolved config, stored in JSON traces.
    """
    TraceWriter(path, results, TraceWriterOptions(format=format), config).write()

def write_summary(stats: "SummaryStats", path: Union[str, TextIO], config: Optional[Dict[str, Any]] = None):
    """
    Writes experiment statistics and the resolved config as JSON.

    :param stats: The statistics.
    :param path: The destination.
    :param config: The resolved config.
    """
    document = {"summary": stats.to_dict(), "config": config,
                "variance_convention": "sample (n - 1)" if stats.variance_ddof == 1 else "population (n)"}

    _open_target(path, lambda stream: json.dump(document, stream, indent=2))

def write_dataset(problem: "ProblemSpec", path: Union[str, TextIO]):
    """
    Writes the simulated data and the starting point of a problem as tidy CSV with columns
    ``field,row,col,value``. Vectors use column 0.

    :param problem: The problem.
    :param path: The destination.
    """
    fields = dict(problem.data)

    if problem.x0 is not None:
        fields["x0"] = problem.x0

    def write(stream: TextIO):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["field", "row", "col", "value"])

        for name, values in fields.items():
            matrix = np.atleast_1d(np.asarray(values, dtype=float))
            matrix = matrix[:, np.newaxis] if matrix.ndim == 1 else matrix

            for (row, col), value in np.ndenumerate(matrix):
                writer.writerow([name, row, col, repr(float(value))])

    _open_target(path, write)
