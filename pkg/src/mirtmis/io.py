"""File formats: item banks (JSON), response matrices and plot data (CSV),
key-value run configurations, and content hashes for manifests."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .model import ItemBank


def fmt(v) -> str:
    """Locale-independent 9-significant-digit text; missing values become ``NA``."""
    if v is None:
        return "NA"
    v = float(v)
    if not np.isfinite(v):
        return "NA"
    return format(v, ".9g")


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def save_bank(bank: ItemBank, path) -> None:
    write_json(bank.to_dict(), path)


def load_bank(path) -> ItemBank:
    return ItemBank.from_dict(read_json(path))


def write_responses(Y, path) -> None:
    """Headerless 0/1 CSV, one learner per row."""
    Y = np.asarray(Y, dtype=np.uint8)
    lines = [",".join("1" if v else "0" for v in row) for row in Y]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_responses(path) -> np.ndarray:
    text = Path(path).read_text().strip()
    if not text:
        raise InvalidArgumentError(f"{path} contains no responses")
    rows = [line.split(",") for line in text.splitlines()]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise InvalidArgumentError(f"{path}: rows have different lengths")
    try:
        Y = np.array(rows, dtype=np.int64)
    except ValueError as exc:
        raise InvalidArgumentError(f"{path}: responses must be 0 or 1") from exc
    if np.any((Y != 0) & (Y != 1)):
        raise InvalidArgumentError(f"{path}: responses must be 0 or 1")
    return Y.astype(np.uint8)


def emit_plot_data(rows, columns, path) -> None:
    """Write a CSV with a one-line header; rows are written in the given order."""
    columns = list(columns)
    lines = [",".join(columns)]
    for row in rows:
        row = list(row)
        if len(row) != len(columns):
            raise InvalidArgumentError(f"row has {len(row)} values for {len(columns)} columns")
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_plot_data(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [[None if v == "NA" else float(v) for v in line.split(",")] for line in lines[1:]]
    return header, rows


def git_blob_hash(data: bytes) -> str:
    """SHA-1 of the content as git would store it in a blob."""
    h = hashlib.sha1()
    h.update(b"blob %d\0" % len(data))
    h.update(data)
    return h.hexdigest()


def parse_config(text: str) -> dict:
    """``key = value`` lines; ``#`` starts a comment; blank lines ignored."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {n}: empty key")
        out[key.replace("-", "_")] = value
    return out


def read_config(path) -> dict:
    try:
        return parse_config(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
