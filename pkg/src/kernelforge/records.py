"""Line-delimited record files, atomic writes, config hashing."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Iterable, Iterator, List

from .corpus import CorpusEntry
from .features import SPACES, FeatureVector


def atomic_write_text(path, text: str) -> None:
    """Write-temp-then-rename so readers never see partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_jsonl(path, rows: Iterable[dict]) -> None:
    atomic_write_text(path, "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows))


def read_jsonl(path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()
    ).hexdigest()[:12]


def write_run_config(out_path, config: dict, hash_value: str | None = None) -> None:
    """Sidecar with the resolved configuration and its hash."""
    payload = {"config": config, "config_hash": hash_value or config_hash(config)}
    atomic_write_text(f"{out_path}.run.json", json.dumps(payload, sort_keys=True, indent=2) + "\n")


def entry_to_record(entry: CorpusEntry) -> dict:
    return {
        "id": entry.id,
        "source": entry.source,
        "features": {tag: fv.to_list() for tag, fv in entry.features.items()},
        "token_ids": list(entry.token_ids) if entry.token_ids is not None else None,
    }


def entry_from_record(record: dict) -> CorpusEntry:
    features = {
        tag: FeatureVector(tag, values)
        for tag, values in record["features"].items()
        if tag in SPACES
    }
    token_ids = record.get("token_ids")
    return CorpusEntry(
        id=record["id"],
        source=record["source"],
        features=features,
        token_ids=tuple(token_ids) if token_ids is not None else None,
    )


def write_corpus(path, entries: List[CorpusEntry]) -> None:
    write_jsonl(path, (entry_to_record(e) for e in entries))


def read_corpus(path) -> List[CorpusEntry]:
    return [entry_from_record(r) for r in read_jsonl(path)]
