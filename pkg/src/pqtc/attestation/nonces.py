"""Single-use challenge nonces with expiry."""

from __future__ import annotations

import enum
import threading
import time
from typing import Callable

DEFAULT_EXPIRY = 120.0


class NonceStatus(enum.Enum):
    OK = "ok"
    UNKNOWN = "unknown"
    EXPIRED = "expired"
    USED = "used"


class NonceStore:
    """Outstanding nonces; :meth:`consume` is an atomic test-and-consume.

    A nonce is consumed on its first appraisal attempt whatever the outcome,
    so a failed attempt cannot be retried against the same challenge.
    """

    def __init__(self, expiry: float = DEFAULT_EXPIRY, clock: Callable[[], float] = time.time):
        self.expiry = expiry
        self.clock = clock
        self._lock = threading.Lock()
        self._outstanding: dict[bytes, float] = {}
        self._used: dict[bytes, float] = {}

    def register(self, nonce: bytes) -> float:
        """Record a fresh nonce and return its expiry timestamp."""
        with self._lock:
            if nonce in self._outstanding or nonce in self._used:
                raise ValueError("nonce already issued")
            expires = self.clock() + self.expiry
            self._outstanding[nonce] = expires
            return expires

    def consume(self, nonce: bytes) -> NonceStatus:
        with self._lock:
            now = self.clock()
            self._purge(now)
            if nonce in self._used:
                return NonceStatus.USED
            expires = self._outstanding.pop(nonce, None)
            if expires is None:
                return NonceStatus.UNKNOWN
            self._used[nonce] = expires
            return NonceStatus.OK if now <= expires else NonceStatus.EXPIRED

    def _purge(self, now: float) -> None:
        # used entries only need to outlive their expiry; after that an
        # unknown nonce is rejected anyway
        stale = [n for n, exp in self._used.items() if exp < now - self.expiry]
        for n in stale:
            del self._used[n]

    def __len__(self) -> int:
        with self._lock:
            return len(self._outstanding)
