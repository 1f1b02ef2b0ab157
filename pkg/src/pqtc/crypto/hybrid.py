"""Classical signature wrapped by a post-quantum signature.

The PQ leg signs ``message || classical_sig`` (raw concatenation), so it
also authenticates the ECDSA signature it wraps. Verification is the
conjunction of both legs.
"""

from __future__ import annotations

from dataclasses import dataclass

from .schemes import KeyPair, SchemeId, scheme_metadata, sign, verify

CLASSICAL_SCHEME = SchemeId.ECDSA_P256


@dataclass(frozen=True)
class HybridSignature:
    classical_sig: bytes
    pq_sig: bytes
    pq_scheme: SchemeId

    def __post_init__(self):
        if not scheme_metadata(self.pq_scheme).quantum_safe:
            raise ValueError(f"{self.pq_scheme.value} cannot be the outer hybrid leg")


@dataclass(frozen=True)
class HybridCheck:
    """Per-leg outcome of :func:`hybrid_verify`; truthy iff both legs hold."""

    classical_ok: bool
    pq_ok: bool

    @property
    def ok(self) -> bool:
        return self.classical_ok and self.pq_ok

    def __bool__(self) -> bool:
        return self.ok

    @property
    def failed_legs(self) -> list[str]:
        return [name for name, ok in (("classical", self.classical_ok), ("pq", self.pq_ok)) if not ok]


def wrap(classical_sig: bytes, pq_key: KeyPair, message: bytes) -> HybridSignature:
    """Add the PQ leg over an existing classical signature."""
    if not pq_key.meta.quantum_safe:
        raise ValueError(f"{pq_key.scheme.value} is not quantum-safe")
    return HybridSignature(classical_sig, sign(pq_key, message + classical_sig), pq_key.scheme)


def hybrid_sign(classical_key: KeyPair, pq_key: KeyPair, message: bytes) -> HybridSignature:
    if classical_key.scheme is not CLASSICAL_SCHEME:
        raise ValueError(f"classical leg must be {CLASSICAL_SCHEME.value}")
    message = bytes(message)
    return wrap(sign(classical_key, message), pq_key, message)


def hybrid_verify(classical_pk: bytes, pq_pk: bytes, message: bytes, hybrid_sig: HybridSignature) -> HybridCheck:
    message = bytes(message)
    return HybridCheck(
        classical_ok=verify(classical_pk, CLASSICAL_SCHEME, message, hybrid_sig.classical_sig),
        pq_ok=verify(pq_pk, hybrid_sig.pq_scheme, message + hybrid_sig.classical_sig, hybrid_sig.pq_sig),
    )
