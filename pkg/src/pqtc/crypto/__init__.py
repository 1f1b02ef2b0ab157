"""Hash policy, signature-scheme agility and hybrid signatures."""

from .hashes import (
    DEFAULT_MIN_BITS,
    Digest,
    HashAlgId,
    digest,
    policy_allows_hash,
    quantum_collision_strength,
)
from .hybrid import HybridCheck, HybridSignature, hybrid_sign, hybrid_verify
from .schemes import (
    DEFAULT_PQ_SCHEME,
    Family,
    KeyPair,
    SchemeId,
    SchemeMetadata,
    available_schemes,
    keygen,
    scheme_metadata,
    sign,
    verify,
)

__all__ = [
    "DEFAULT_MIN_BITS",
    "DEFAULT_PQ_SCHEME",
    "Digest",
    "Family",
    "HashAlgId",
    "HybridCheck",
    "HybridSignature",
    "KeyPair",
    "SchemeId",
    "SchemeMetadata",
    "available_schemes",
    "digest",
    "hybrid_sign",
    "hybrid_verify",
    "keygen",
    "policy_allows_hash",
    "quantum_collision_strength",
    "scheme_metadata",
    "sign",
    "verify",
]
