"""LMS signer state and its write-ahead persistence.

The leaf counter ``q`` is committed to the store *before* the signature
for leaf ``q - 1`` is computed, so a crash at any point can only skip a
leaf, never hand out the same one-time key twice.
"""

from __future__ import annotations

import base64
import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Optional, Protocol

from ..errors import KeyFormatError, PersistenceFailure
from .params import LmotsParams, LmsParams, lmots_params, lms_params

STATE_SCHEMA = "pqtc-lms-state/1"
TREE_MAGIC = b"PQTCTREE"


class StateStore(Protocol):
    def commit(self, record: dict) -> None:
        """Durably store ``record``; raise on any failure."""

    def load_tree(self, state: "LmsPrivateState") -> Optional[list[bytes]]: ...

    def save_tree(self, state: "LmsPrivateState", nodes: list[bytes]) -> None: ...


class MemoryStateStore:
    """Keeps the last committed record in memory; used for ephemeral keys."""

    def __init__(self):
        self.record: Optional[dict] = None
        self.commits = 0

    def commit(self, record: dict) -> None:
        self.record = dict(record)
        self.commits += 1

    def load_tree(self, state):
        return None

    def save_tree(self, state, nodes):
        pass


def atomic_write(path: Path, data: bytes) -> None:
    """Write ``data`` to ``path`` via fsync'd temp file and rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
    dfd = os.open(path.parent, os.O_RDONLY)
    try:
        os.fsync(dfd)
    finally:
        os.close(dfd)


class FileStateStore:
    """JSON state file with atomic replace-on-write.

    The Merkle tree is public and derivable from the seed, so it is cached
    in a sidecar ``<path>.tree`` file purely to make restarts cheap; a
    missing or inconsistent cache is silently rebuilt.
    """

    def __init__(self, path, envelope: Optional[dict] = None):
        self.path = Path(path)
        # when set, the record is nested under "state" inside this envelope
        self.envelope = envelope

    @property
    def tree_path(self) -> Path:
        return self.path.with_name(self.path.name + ".tree")

    def commit(self, record: dict) -> None:
        if self.envelope is not None:
            record = {**self.envelope, "state": record}
        atomic_write(self.path, json.dumps(record, sort_keys=True, indent=1).encode())

    def load(self) -> "LmsPrivateState":
        try:
            record = json.loads(self.path.read_text())
        except (OSError, ValueError) as exc:
            raise KeyFormatError(f"cannot read LMS state {self.path}: {exc}") from exc
        if self.envelope is not None:
            record = record.get("state") if isinstance(record, dict) else None
            if not isinstance(record, dict):
                raise KeyFormatError(f"{self.path} carries no LMS state")
        state = LmsPrivateState.from_record(record)
        state.store = self
        return state

    def load_tree(self, state):
        try:
            blob = self.tree_path.read_bytes()
        except OSError:
            return None
        n = 1 << (state.lms.h + 1)
        head = TREE_MAGIC + state.I
        if len(blob) != len(head) + 32 * (n - 1) or not blob.startswith(head):
            return None
        body = blob[len(head):]
        nodes = [b""] + [body[32 * i : 32 * i + 32] for i in range(n - 1)]
        return nodes

    def save_tree(self, state, nodes):
        try:
            atomic_write(self.tree_path, TREE_MAGIC + state.I + b"".join(nodes[1:]))
        except OSError:
            pass  # cache only


class LmsPrivateState:
    """Private key material and leaf counter for one LMS tree.

    ``q`` is the next unused leaf; ``persisted_q`` is the last value the
    store acknowledged. Signing requires exclusive use of the handle.
    """

    def __init__(
        self,
        I: bytes,
        seed: bytes,
        lms: LmsParams,
        ots: LmotsParams,
        q: int = 0,
        store: Optional[StateStore] = None,
    ):
        if len(I) != 16 or len(seed) != 32:
            raise KeyFormatError("LMS identifier must be 16 bytes and seed 32 bytes")
        if not 0 <= q <= lms.max_leaves:
            raise KeyFormatError(f"leaf counter {q} outside 0..{lms.max_leaves}")
        self.I = I
        self.seed = seed
        self.lms = lms
        self.ots = ots
        self.q = q
        self.persisted_q = q
        self.store: StateStore = store if store is not None else MemoryStateStore()
        self.lock = threading.Lock()
        self._tree: Optional[list[bytes]] = None

    @property
    def max_leaves(self) -> int:
        return self.lms.max_leaves

    @property
    def remaining(self) -> int:
        return self.lms.max_leaves - self.q

    def to_record(self, q: Optional[int] = None) -> dict:
        return {
            "schema": STATE_SCHEMA,
            "I_b64": base64.b64encode(self.I).decode(),
            "seed_b64": base64.b64encode(self.seed).decode(),
            "params": {"lms": self.lms.type_code, "lmots": self.ots.type_code},
            "q": self.q if q is None else q,
        }

    @classmethod
    def from_record(cls, record: dict) -> "LmsPrivateState":
        try:
            if record.get("schema") != STATE_SCHEMA:
                raise KeyFormatError(f"unexpected state schema {record.get('schema')!r}")
            return cls(
                base64.b64decode(record["I_b64"], validate=True),
                base64.b64decode(record["seed_b64"], validate=True),
                lms_params(int(record["params"]["lms"])),
                lmots_params(int(record["params"]["lmots"])),
                int(record["q"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise KeyFormatError(f"malformed LMS state record: {exc}") from exc

    def commit(self, new_q: int) -> None:
        try:
            self.store.commit(self.to_record(new_q))
        except Exception as exc:
            raise PersistenceFailure(f"could not persist LMS state: {exc}") from exc
        self.q = new_q
        self.persisted_q = new_q

    def __repr__(self) -> str:
        return (
            f"LmsPrivateState({self.lms.name}, {self.ots.name}, "
            f"I={self.I.hex()}, q={self.q}/{self.max_leaves})"
        )
