"""Append-only run ledger with a hash chain.

Each line of ``ledger.jsonl`` is one stage record. A record stores the
SHA-256 of its input and output artifacts and the hash of the previous
record, so editing or dropping any earlier line breaks verification.
"""
from __future__ import annotations

import hashlib
import json
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Mapping

GENESIS = "0" * 64


class LedgerError(RuntimeError):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_files(paths) -> str:
    """Digest over a set of files, order-independent by name."""
    h = hashlib.sha256()
    for p in sorted(Path(p) for p in paths):
        h.update(p.name.encode())
        h.update(sha256_file(p).encode())
    return h.hexdigest()


def _digest(record: Mapping) -> str:
    body = {k: v for k, v in record.items() if k != "hash"}
    return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()


class RunLedger:
    def __init__(self, path):
        self.path = Path(path)

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        return [json.loads(line) for line in self.path.read_text().splitlines() if line.strip()]

    def append(self, stage: str, status: str, inputs: Mapping[str, str] | None = None, outputs: Mapping[str, str] | None = None, seconds: float = 0.0, params: Mapping | None = None) -> dict:
        recs = self.records()
        record = {
            "seq": len(recs),
            "stage": stage,
            "status": status,
            "inputs": dict(inputs or {}),
            "outputs": dict(outputs or {}),
            "seconds": round(float(seconds), 3),
            "params": dict(params or {}),
            "prev": recs[-1]["hash"] if recs else GENESIS,
        }
        record["hash"] = _digest(record)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
        return record

    @contextmanager
    def stage(self, stage: str, inputs: Mapping[str, str] | None = None, params: Mapping | None = None) -> Iterator[dict]:
        """Record a stage; the body fills ``outputs`` in the yielded dict."""
        outputs: dict[str, str] = {}
        start = time.perf_counter()
        try:
            yield outputs
        except BaseException as exc:
            self.append(stage, f"failed: {type(exc).__name__}", inputs, outputs, time.perf_counter() - start, params)
            raise
        self.append(stage, "ok", inputs, outputs, time.perf_counter() - start, params)

    def verify(self) -> int:
        """Check the chain; returns the record count or raises :class:`LedgerError`."""
        prev = GENESIS
        for i, rec in enumerate(self.records()):
            if rec.get("seq") != i:
                raise LedgerError(f"record {i}: sequence number {rec.get('seq')}")
            if rec.get("prev") != prev:
                raise LedgerError(f"record {i} ({rec.get('stage')}): chain broken")
            if rec.get("hash") != _digest(rec):
                raise LedgerError(f"record {i} ({rec.get('stage')}): content altered")
            prev = rec["hash"]
        return len(self.records())

    def stages(self, stage: str | None = None, status: str = "ok") -> list[dict]:
        return [r for r in self.records() if r["status"] == status and (stage is None or r["stage"] == stage)]
