"""
Run logging for the gaussvgd CLI

Writes JSON-lines events with timestamps and run identification: run start
with the configuration echo, trajectory records, verdicts of checks and
errors. Non-verbose mode keeps every k-th record only.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, TextIO

import numpy as np

from .config import VERSION, settings
from .records import TrajectoryRecord, TrajectoryRow

# Record stride kept when not verbose
RECORD_SAMPLE_EVERY = 10


class RunLogger:
    """
    JSON-lines event logger for experiment runs.

    Supports both file and stdout output with configurable verbosity.
    """

    def __init__(self, logfile: Optional[str] = None, verbose: bool = False,
                 sample_every: int = RECORD_SAMPLE_EVERY):
        """
        Initialize the run logger.

        Args:
            logfile: Path to log file (None for stdout)
            verbose: Log every trajectory record instead of every sample_every-th
            sample_every: Record stride in non-verbose mode
        """
        self.logfile = logfile
        self.verbose = verbose
        self.sample_every = max(1, sample_every)
        self.output_stream: TextIO = self._setup_output_stream()
        self._record_counts: Dict[str, int] = {}

    def _setup_output_stream(self) -> TextIO:
        if self.logfile:
            log_path = Path(self.logfile)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            return open(log_path, 'a', encoding='utf-8')
        return sys.stdout

    def log_run_start(self, run: str, config: Dict[str, Any], seed: Optional[int] = None) -> None:
        """
        Log the start of a run.

        Args:
            run: Run label (command or algorithm name)
            config: Configuration echo
            seed: Seed of the run, if any
        """
        entry = self._create_base_log_entry("run_start", run)
        entry.update({"config": config, "seed": seed})
        self._write_log_entry(entry)

    def log_record(self, run: str, row: TrajectoryRow) -> None:
        """Log one trajectory row; sampled unless verbose."""
        count = self._record_counts.get(run, 0)
        self._record_counts[run] = count + 1
        if not self.verbose and count % self.sample_every:
            return
        entry = self._create_base_log_entry("record", run)
        entry["row"] = row.to_dict(include_theta=self.verbose)
        self._write_log_entry(entry)

    def log_trajectory(self, record: TrajectoryRecord) -> None:
        for row in record:
            self.log_record(record.label, row)

    def log_verdict(self, run: str, check: str, passed: bool, details: Optional[Dict[str, Any]] = None) -> None:
        """
        Log the verdict of a check.

        Args:
            run: Run label
            check: Check name
            passed: Whether the check passed
            details: Measured values
        """
        entry = self._create_base_log_entry("verdict", run)
        entry.update({"check": check, "status": "PASS" if passed else "FAIL", "details": details or {}})
        self._write_log_entry(entry)

    def log_error(self, run: Optional[str], error_message: str) -> None:
        entry = self._create_base_log_entry("error", run or "unknown")
        entry.update({"error": error_message, "success": False})
        self._write_log_entry(entry)

    def log_info(self, message: str, run: Optional[str] = None) -> None:
        entry = self._create_base_log_entry("info", run)
        entry.update({"message": message, "success": True})
        self._write_log_entry(entry)

    def _create_base_log_entry(self, event_type: str, run: Optional[str] = None) -> Dict[str, Any]:
        entry: Dict[str, Any] = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "event_type": event_type,
            "version": VERSION,
        }
        if run:
            entry["run"] = run
        return entry

    def _write_log_entry(self, log_entry: Dict[str, Any]) -> None:
        try:
            print(json.dumps(log_entry, ensure_ascii=False, default=_json_value), file=self.output_stream, flush=True)
        except (TypeError, ValueError, OSError) as e:
            error_entry = {
                "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
                "event_type": "logging_error",
                "error": f"Failed to write log entry: {e}",
                "original_entry": str(log_entry)[:500],
            }
            try:
                print(json.dumps(error_entry, ensure_ascii=False), file=self.output_stream, flush=True)
            except (TypeError, ValueError, OSError):
                print(f"CRITICAL: Logging failed: {e}", file=sys.stderr)

    def close(self) -> None:
        if self.logfile and self.output_stream is not sys.stdout:
            self.output_stream.close()


def _json_value(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return str(obj)


def setup_logging(logfile: Optional[str] = None, verbose: bool = False,
                  level: Optional[str] = None) -> RunLogger:
    """
    Configure stdlib logging and return a RunLogger.

    Args:
        logfile: Optional path for the JSON-lines event log
        verbose: Log every record and lower the stdlib level to DEBUG
        level: Explicit stdlib level (defaults to settings.log_level)

    Returns:
        Configured RunLogger instance
    """
    root_level = "DEBUG" if verbose else (level or settings.log_level).upper()
    logging.basicConfig(
        level=getattr(logging, root_level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.getLogger().setLevel(getattr(logging, root_level, logging.INFO))
    return RunLogger(logfile=logfile, verbose=verbose)
