"""Atomic file writing helpers.

Every artifact the toolkit produces is written to a temporary file in the
destination directory and renamed into place, so an interrupted run never
leaves a half-written file behind.
"""

import json
import os
import tempfile


def atomic_write_bytes(path, data: bytes):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path, obj):
    # repr-based float serialization: json round-trips doubles exactly
    atomic_write_text(path, json.dumps(obj, indent=2) + "\n")
