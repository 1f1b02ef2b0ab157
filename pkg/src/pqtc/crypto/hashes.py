"""Hash algorithm registry and the quantum collision-strength policy.

Grover-style search and the quantum birthday bound both leave a hash with
roughly half of its output bits of collision resistance, so the policy
compares ``output_bits / 2`` against a threshold. The framework default
of 192 bits admits SHA-384, SHA-512 and SHA3-512 and rejects the 256-bit
family.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

from ..errors import UnknownAlgorithm

DEFAULT_MIN_BITS = 192


class HashAlgId(enum.Enum):
    SHA256 = "SHA-256"
    SHA384 = "SHA-384"
    SHA512 = "SHA-512"
    SHA3_256 = "SHA3-256"
    SHA3_512 = "SHA3-512"

    @property
    def output_len(self) -> int:
        return _REGISTRY[self][1]

    @property
    def tag(self) -> int:
        """One-byte wire tag used in quote bodies."""
        return _REGISTRY[self][2]

    @property
    def log_name(self) -> str:
        """Lowercase name used in measurement log lines."""
        return _REGISTRY[self][3]

    @classmethod
    def parse(cls, value: "str | HashAlgId") -> "HashAlgId":
        """Accept an enum member, its value ("SHA-384") or its log name ("sha384")."""
        if isinstance(value, HashAlgId):
            return value
        for alg in cls:
            if value == alg.value or value == alg.log_name:
                return alg
        raise UnknownAlgorithm(f"unknown hash algorithm {value!r}")

    @classmethod
    def from_tag(cls, tag: int) -> "HashAlgId":
        for alg in cls:
            if alg.tag == tag:
                return alg
        raise UnknownAlgorithm(f"unknown hash algorithm tag 0x{tag:02x}")


# alg -> (hashlib name, output bytes, wire tag, log name)
_REGISTRY: dict[HashAlgId, tuple[str, int, int, str]] = {
    HashAlgId.SHA256: ("sha256", 32, 0x01, "sha256"),
    HashAlgId.SHA384: ("sha384", 48, 0x02, "sha384"),
    HashAlgId.SHA512: ("sha512", 64, 0x03, "sha512"),
    HashAlgId.SHA3_256: ("sha3_256", 32, 0x04, "sha3-256"),
    HashAlgId.SHA3_512: ("sha3_512", 64, 0x05, "sha3-512"),
}


def _check(alg) -> HashAlgId:
    if not isinstance(alg, HashAlgId):
        try:
            return HashAlgId.parse(alg)
        except (TypeError, UnknownAlgorithm):
            raise UnknownAlgorithm(f"unregistered hash algorithm {alg!r}") from None
    return alg


@dataclass(frozen=True)
class Digest:
    alg: HashAlgId
    value: bytes

    def __post_init__(self):
        if len(self.value) != self.alg.output_len:
            raise ValueError(
                f"{self.alg.value} digest must be {self.alg.output_len} bytes, "
                f"got {len(self.value)}"
            )

    @classmethod
    def zero(cls, alg: HashAlgId) -> "Digest":
        return cls(alg, bytes(alg.output_len))

    def hex(self) -> str:
        return self.value.hex()

    def __str__(self) -> str:
        return f"{self.alg.log_name}:{self.value.hex()}"


def new_hasher(alg: HashAlgId):
    return hashlib.new(_REGISTRY[_check(alg)][0])


def digest(alg: HashAlgId, message: bytes) -> Digest:
    alg = _check(alg)
    return Digest(alg, hashlib.new(_REGISTRY[alg][0], message).digest())


def quantum_collision_strength(alg: HashAlgId) -> int:
    """Collision resistance in bits left against a quantum adversary."""
    alg = _check(alg)
    return alg.output_len * 8 // 2


def policy_allows_hash(alg: HashAlgId, min_bits: int = DEFAULT_MIN_BITS) -> bool:
    if min_bits < 0:
        raise ValueError("min_bits must be non-negative")
    return quantum_collision_strength(alg) >= min_bits
