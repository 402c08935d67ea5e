"""Header-versioned text files.

Every persisted file starts with a ``<kind> v<N>`` line; the remainder is the
body (YAML for configuration-like files, JSON for machine state, the trace DSL
for traces).
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any

import yaml

VERSION = 1


class FormatError(ValueError):
    pass


def header(kind: str) -> str:
    return f"{kind} v{VERSION}"


def split_header(text: str, kind: str) -> str:
    """Check the header line of ``text`` and return the body after it."""
    if not text.strip():
        raise FormatError("empty document")
    first, _, body = text.lstrip("﻿").partition("\n")
    first = first.strip()
    if first != header(kind):
        if first.startswith(kind + " "):
            raise FormatError(f"unsupported version {first!r}; expected {header(kind)!r}")
        raise FormatError(f"missing header {header(kind)!r} (got {first!r})")
    return body


def read_yaml(path: str | Path, kind: str) -> Any:
    body = split_header(Path(path).read_text(encoding="utf-8"), kind)
    try:
        return yaml.safe_load(body) or {}
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_yaml(path: str | Path, kind: str, data: Any) -> None:
    text = header(kind) + "\n" + yaml.safe_dump(data, sort_keys=False)
    atomic_write(path, text)


def read_json(path: str | Path, kind: str) -> Any:
    body = split_header(Path(path).read_text(encoding="utf-8"), kind)
    return json.loads(body)


def dumps_json(kind: str, data: Any) -> str:
    return header(kind) + "\n" + json.dumps(data, indent=2, sort_keys=True) + "\n"


def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def format_scalar(value: Any) -> str:
    """Render bools/ints bare and strings bare when they are plain identifiers."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str) and value.isidentifier() and value not in ("true", "false"):
        return value
    return json.dumps(value)


def parse_scalar(token: str) -> Any:
    if token == "true":
        return True
    if token == "false":
        return False
    if token.startswith('"'):
        return json.loads(token)
    try:
        return int(token)
    except ValueError:
        return token
