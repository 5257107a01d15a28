"""Result persistence: all-or-nothing file writes and structured logging."""

from __future__ import annotations

import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from .errors import OutputError

_STANDARD_ATTRS = set(vars(logging.makeLogRecord({}))) | {"message", "asctime"}


class JsonLineFormatter(logging.Formatter):
    def format(self, record):
        payload = {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()}
        payload.update({k: v for k, v in vars(record).items() if k not in _STANDARD_ATTRS})
        return json.dumps(payload, default=str, sort_keys=True)


def configure_logging(level: int = logging.INFO) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLineFormatter())
    root = logging.getLogger("latentbo")
    root.handlers[:] = [handler]
    root.setLevel(level)
    root.propagate = False


def write_files(contents: dict) -> None:
    """Write every ``path -> text`` (or bytes) pair or none of them.

    Each file is staged next to its destination and renamed into place only
    after all of them were written.
    """
    staged = []
    try:
        for path, text in contents.items():
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
            staged.append((tmp, path))
            if isinstance(text, bytes):
                with os.fdopen(fd, "wb") as fh:
                    fh.write(text)
            else:
                with os.fdopen(fd, "w", newline="\n") as fh:
                    fh.write(text)
        for tmp, path in staged:
            os.replace(tmp, path)
    except OSError as exc:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise OutputError(f"cannot write {exc.filename or 'output'}: {exc.strerror or exc}", path=exc.filename) from exc


def timing_path(summary_path) -> Path:
    p = Path(summary_path)
    return p.with_name(p.stem + ".timing.json")


def write_outputs(result) -> None:
    from .engine import history_csv, summary_json

    cfg = result.config
    files = {}
    if cfg.history_path:
        files[cfg.history_path] = history_csv(result.history)
    if cfg.summary_path:
        files[cfg.summary_path] = summary_json(result.summary())
        # wall-clock lives beside the summary so the summary itself stays byte-stable
        files[timing_path(cfg.summary_path)] = json.dumps({"wall_clock_seconds": result.wall_clock}) + "\n"
    write_files(files)
