"""
Result files: one CSV per grid and one JSON summary per command run.

Every CSV opens with a single `# {json}` provenance line holding the resolved
configuration and the toolkit version, followed by the header row. Nothing
time-dependent is written, so identical runs produce identical bytes.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Optional, Union

import pandas as pd
from pydantic import BaseModel

from app.errors import InvalidParameter

logger = logging.getLogger(__name__)

PROVENANCE_PREFIX = "# "


def _jsonable(value: Any) -> Any:
    """Plain JSON data; non-finite floats (an infinite z-score, say) become null."""
    if isinstance(value, BaseModel):
        return _jsonable(value.model_dump(mode="json"))
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ResultWriter:
    """Writes the outputs of one command into `out_dir`."""

    def __init__(self, out_dir: Union[str, Path], command: str, provenance: dict):
        self.out_dir = Path(out_dir)
        self.command = command
        self.provenance = provenance

    def path_for(self, suffix: str, name: Optional[str] = None) -> Path:
        stem = self.command if name is None else f"{self.command}_{name}"
        return self.out_dir / f"{stem}.{suffix}"

    def provenance_line(self) -> str:
        return PROVENANCE_PREFIX + json.dumps(_jsonable(self.provenance), sort_keys=True, separators=(",", ":"))

    def write_table(self, frame: pd.DataFrame, name: Optional[str] = None) -> Path:
        """Write a grid as CSV (comma separated, '.' decimal, UTF-8) behind the provenance line."""
        path = self.path_for("csv", name)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as handle:
                handle.write(self.provenance_line() + "\n")
                frame.to_csv(handle, index=False, lineterminator="\n", float_format="%.17g")
            logger.info(f"Wrote {len(frame)} rows to {path}")
            return path
        except OSError as e:
            logger.error(f"Error writing {path}: {e}")
            raise

    def write_report(self, report: Any) -> Path:
        """Write the summary report with the provenance as JSON."""
        path = self.path_for("json")
        payload = {"provenance": _jsonable(self.provenance), "report": _jsonable(report)}
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(payload, sort_keys=True, indent=2, allow_nan=False) + "\n", encoding="utf-8")
            logger.info(f"Wrote report to {path}")
            return path
        except OSError as e:
            logger.error(f"Error writing {path}: {e}")
            raise


def read_provenance(path: Union[str, Path]) -> dict:
    """Provenance embedded in a CSV written by ResultWriter."""
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
    if not first.startswith(PROVENANCE_PREFIX):
        raise InvalidParameter(f"{path} has no provenance line")
    return json.loads(first[len(PROVENANCE_PREFIX):])


def read_table(path: Union[str, Path]) -> pd.DataFrame:
    """Grid written by ResultWriter, without its provenance line."""
    return pd.read_csv(path, skiprows=1)
