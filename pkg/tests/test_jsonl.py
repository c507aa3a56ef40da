"""Tests for JSON Lines I/O and seeded substreams."""

import json

import numpy as np
import pytest

from src.jsonl import JsonlError, read_jsonl, write_json, write_jsonl
from src.seeds import substream


def test_write_and_read(temp_dir):
    """Test records keep order and non-ASCII text, and blank lines are skipped."""
    path = temp_dir / "nested" / "records.jsonl"

    count = write_jsonl(path, iter([{"text": "fängt"}, {"text": "中文"}]))
    with open(path, "a", encoding="utf-8") as f:
        f.write("\n   \n")

    assert count == 2
    assert "fängt" in path.read_text(encoding="utf-8")
    assert list(read_jsonl(path)) == [(1, {"text": "fängt"}), (2, {"text": "中文"})]
    assert not (path.parent / "records.jsonl.tmp").exists()


def test_read_errors_carry_line_numbers(temp_dir):
    """Test malformed and non-object lines name their position."""
    path = temp_dir / "bad.jsonl"
    path.write_text('{"ok": 1}\n{"broken"\n')
    with pytest.raises(JsonlError, match="bad.jsonl:2: malformed JSON"):
        list(read_jsonl(path))

    path.write_text("[1, 2]\n")
    with pytest.raises(JsonlError, match=":1: expected a JSON object"):
        list(read_jsonl(path))

    with pytest.raises(JsonlError, match="File not found"):
        list(read_jsonl(temp_dir / "absent.jsonl"))


def test_failed_write_keeps_previous_file(temp_dir):
    """Test an error mid-write leaves the existing file untouched."""
    path = temp_dir / "records.jsonl"
    write_jsonl(path, [{"n": 1}])

    def records():
        yield {"n": 2}
        raise IOError("disk full")

    with pytest.raises(IOError):
        write_jsonl(path, records())

    assert list(read_jsonl(path)) == [(1, {"n": 1})]
    assert not (temp_dir / "records.jsonl.tmp").exists()


def test_write_json_sorts_keys(temp_dir):
    """Test single documents are written with sorted keys."""
    path = temp_dir / "report.json"

    write_json(path, {"b": 1, "a": 2})

    assert path.read_text().index('"a"') < path.read_text().index('"b"')
    assert json.loads(path.read_text()) == {"a": 2, "b": 1}


def test_substreams_are_reproducible_and_distinct():
    """Test equal names repeat and different names diverge."""
    first = substream(7, "negatives").random(5)

    assert np.array_equal(first, substream(7, "negatives").random(5))
    assert not np.array_equal(first, substream(7, "init").random(5))
    assert not np.array_equal(first, substream(8, "negatives").random(5))
