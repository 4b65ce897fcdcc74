"""
Output manager for check and simulation runs.
Artifacts are buffered during evaluation and written in one flush, followed
by a run_meta.json describing what was written.
"""

import io
import os
import json
import math
import logging
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

logger = logging.getLogger(__name__)

OUTPUT_ROOT = Path(os.environ.get("OUTPUT_ROOT", "./output"))


def jsonable(obj):
    """Recursively convert numpy values, fractions and non-finite floats to JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Fraction):
        return str(obj)
    return obj


def float_text(value: float) -> str:
    """17 significant digits, always with a decimal point or exponent."""
    text = format(value, ".17g")
    return text if any(c in text for c in ".en") else text + ".0"


class FixedPrecisionEncoder(json.JSONEncoder):
    """JSONEncoder that writes every float with float_text."""

    def iterencode(self, o, _one_shot=False):
        encode_str = json.encoder.encode_basestring_ascii if self.ensure_ascii else json.encoder.encode_basestring
        return json.encoder._make_iterencode(
            {} if self.check_circular else None, self.default, encode_str, self.indent, float_text,
            self.key_separator, self.item_separator, self.sort_keys, self.skipkeys, _one_shot,
        )(o, 0)


def dumps(data) -> str:
    return json.dumps(jsonable(data), indent=2, sort_keys=True, cls=FixedPrecisionEncoder) + "\n"


def run_timestamp() -> str:
    """Wall-clock time, or SOURCE_DATE_EPOCH when set so repeated runs are byte-identical."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()
    return datetime.now().isoformat()


class OutputManager:
    """Collects a run's artifacts and writes them to the output directory."""

    def __init__(self, root: Optional[Path] = None, formats: Iterable[str] = ("json", "csv")):
        self.root = Path(root) if root is not None else OUTPUT_ROOT
        self.formats = set(formats)
        self._pending: list[tuple[str, str, str]] = []

    def wants(self, fmt: str) -> bool:
        return fmt in self.formats

    # ─── Buffering ───

    def add_json(self, name: str, data, always: bool = False):
        if always or self.wants("json"):
            self._pending.append((name, "json", dumps(data)))

    def add_csv(self, name: str, header: list[str], rows):
        if not self.wants("csv"):
            return
        table = np.asarray(list(rows), dtype=float).reshape(-1, len(header))
        buffer = io.StringIO()
        np.savetxt(buffer, table, fmt="%.17g", delimiter=",", header=",".join(header), comments="")
        self._pending.append((name, "csv", buffer.getvalue()))

    def add_text(self, name: str, text: str):
        self._pending.append((name, "text", text))

    def add_svg(self, name: str, svg: str):
        if self.wants("svg"):
            self._pending.append((name, "svg", svg))

    # ─── Writing ───

    def flush(self, command: str, metadata: Optional[dict] = None) -> list[str]:
        """Write every buffered artifact plus run_meta.json. Returns the written paths."""
        self.root.mkdir(parents=True, exist_ok=True)
        written = []
        for name, kind, content in self._pending:
            path = self.root / name
            path.write_text(content)
            written.append(str(path))
            logger.info(f"Wrote {kind} artifact: {path.name}")
        self._pending.clear()

        meta = {
            "timestamp": run_timestamp(),
            "command": command,
            "files": [Path(p).name for p in written],
            **(metadata or {}),
        }
        (self.root / "run_meta.json").write_text(dumps(meta))
        return written

    def write_diagnostics(self, diagnostics: dict) -> Optional[str]:
        """Write diagnostics.json immediately; a failure to write is logged, not raised."""
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            path = self.root / "diagnostics.json"
            path.write_text(dumps(diagnostics))
            return str(path)
        except OSError as e:
            logger.error(f"Could not write diagnostics to {self.root}: {e}")
            return None
