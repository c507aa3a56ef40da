"""JSON Lines reading and atomic writing shared by every artifact format."""

import json
import logging
from pathlib import Path
from typing import Iterable, Iterator

from .errors import DataError

logger = logging.getLogger(__name__)


class JsonlError(DataError):
    """A JSON Lines file cannot be read."""

    pass


def read_jsonl(path: Path) -> Iterator[tuple[int, dict]]:
    """
    Yield (line_number, record) for every non-blank line.

    Raises:
        JsonlError: Missing file, invalid JSON or a non-object line
    """
    path = Path(path)
    try:
        f = open(path, 'r', encoding='utf-8')
    except FileNotFoundError:
        raise JsonlError(f"File not found: {path}")

    with f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise JsonlError(f"{path}:{line_number}: malformed JSON ({e.msg})")
            if not isinstance(record, dict):
                raise JsonlError(f"{path}:{line_number}: expected a JSON object")
            yield line_number, record


def dumps(record: dict) -> str:
    """Canonical single-line JSON encoding."""
    return json.dumps(record, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path: Path, records: Iterable[dict]) -> int:
    """
    Write records atomically: write to <name>.tmp, then rename.

    Returns:
        Number of records written
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.parent / f"{path.name}.tmp"
    count = 0
    try:
        with open(tmp_path, 'w', encoding='utf-8', newline='\n') as f:
            for record in records:
                f.write(dumps(record))
                f.write("\n")
                count += 1
        tmp_path.replace(path)
    except IOError as e:
        logger.error(f"Failed to write {path}: {e}")
        if tmp_path.exists():
            tmp_path.unlink()
        raise

    logger.debug(f"Wrote {count} records to {path}")
    return count


def write_json(path: Path, data: dict) -> None:
    """Write one JSON document atomically with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = path.parent / f"{path.name}.tmp"
    try:
        with open(tmp_path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(data, f, indent=2, sort_keys=True, ensure_ascii=False)
            f.write("\n")
        tmp_path.replace(path)
    except IOError as e:
        logger.error(f"Failed to write {path}: {e}")
        if tmp_path.exists():
            tmp_path.unlink()
        raise
