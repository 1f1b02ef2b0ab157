"""File-backed reference store: enrolled attesters and their last results."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Optional

from ..attestation.messages import AttestationResult, ReferenceValues
from ..errors import StoreCorrupt, UnknownAttester
from ..lms.state import atomic_write

STORE_SCHEMA = "pqtc-refstore/1"


class ReferenceStore:
    """Mapping attester_id -> ReferenceValues, persisted on every change.

    The file is parsed strictly: unknown keys anywhere make it corrupt and
    the verifier refuses to start rather than guess.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self.refs: dict[str, ReferenceValues] = {}
        self.results: dict[str, AttestationResult] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        try:
            data = json.loads(self.path.read_text())
            if not isinstance(data, dict) or set(data) != {"schema", "attesters", "results"}:
                raise ValueError("unexpected top-level keys")
            if data["schema"] != STORE_SCHEMA:
                raise ValueError(f"unexpected schema {data['schema']!r}")
            for aid, rec in data["attesters"].items():
                refs = ReferenceValues.from_wire(rec, strict=True)
                if refs.attester_id != aid:
                    raise ValueError(f"entry {aid!r} names attester {refs.attester_id!r}")
                self.refs[aid] = refs
            for aid, rec in data["results"].items():
                self.results[aid] = AttestationResult.from_wire(rec)
        except Exception as exc:  # includes unknown scheme or algorithm names
            raise StoreCorrupt(f"reference store {self.path} is corrupt: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "schema": STORE_SCHEMA,
            "attesters": {a: r.to_wire() for a, r in sorted(self.refs.items())},
            "results": {a: r.to_wire() for a, r in sorted(self.results.items())},
        }

    def _flush(self) -> None:
        if self.path is not None:
            atomic_write(self.path, json.dumps(self.to_dict(), indent=1).encode())

    def enroll(self, refs: ReferenceValues) -> None:
        with self._lock:
            self.refs[refs.attester_id] = refs
            self._flush()

    def get(self, attester_id: str) -> ReferenceValues:
        with self._lock:
            try:
                return self.refs[attester_id]
            except KeyError:
                raise UnknownAttester(f"no reference values for {attester_id!r}") from None

    def __getitem__(self, attester_id: str) -> ReferenceValues:
        return self.get(attester_id)

    def record_result(self, result: AttestationResult) -> None:
        with self._lock:
            self.results[result.attester_id] = result
            self._flush()

    def last_result(self, attester_id: str) -> Optional[AttestationResult]:
        with self._lock:
            return self.results.get(attester_id)
