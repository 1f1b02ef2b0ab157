"""Signature-scheme registry with algorithm agility.

Every scheme the framework can name has a static metadata record. Only
some have a provider behind them: ECDSA-P256 and ML-DSA come from
``cryptography``, LMS is implemented natively in :mod:`pqtc.lms`. The
remaining identifiers (FN-DSA, SLH-DSA, XMSS) can be negotiated about but
raise :class:`ProviderUnavailable` when used.
"""

from __future__ import annotations

import enum
import logging
import secrets
from dataclasses import dataclass
from typing import Any, Callable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec, mldsa
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)

from .. import lms
from ..errors import ProviderUnavailable, UnknownScheme

log = logging.getLogger(__name__)

Randomness = Callable[[int], bytes]


class SchemeId(enum.Enum):
    ECDSA_P256 = "ECDSA-P256"
    ML_DSA_44 = "ML-DSA-44"
    ML_DSA_65 = "ML-DSA-65"
    ML_DSA_87 = "ML-DSA-87"
    FN_DSA_512 = "FN-DSA-512"
    FN_DSA_1024 = "FN-DSA-1024"
    SLH_DSA_128S = "SLH-DSA-128s"
    LMS_H5_W8 = "LMS-H5-W8"
    LMS_H10_W8 = "LMS-H10-W8"
    XMSS_H10 = "XMSS-H10"

    @classmethod
    def parse(cls, value) -> "SchemeId":
        if isinstance(value, SchemeId):
            return value
        try:
            return cls(value)
        except ValueError:
            raise UnknownScheme(f"unknown signature scheme {value!r}") from None

    @property
    def tag(self) -> int:
        """One-byte tag prefixed to public key files."""
        return SCHEME_TAGS[self]

    @classmethod
    def from_tag(cls, tag: int) -> "SchemeId":
        for scheme, t in SCHEME_TAGS.items():
            if t == tag:
                return scheme
        raise UnknownScheme(f"unknown scheme tag 0x{tag:02x}")

    @property
    def meta(self) -> "SchemeMetadata":
        return scheme_metadata(self)


SCHEME_TAGS = {
    SchemeId.ECDSA_P256: 0x01,
    SchemeId.ML_DSA_44: 0x10,
    SchemeId.ML_DSA_65: 0x11,
    SchemeId.ML_DSA_87: 0x12,
    SchemeId.FN_DSA_512: 0x20,
    SchemeId.FN_DSA_1024: 0x21,
    SchemeId.SLH_DSA_128S: 0x30,
    SchemeId.LMS_H5_W8: 0x40,
    SchemeId.LMS_H10_W8: 0x41,
    SchemeId.XMSS_H10: 0x50,
}


class Family(enum.Enum):
    CLASSICAL = "classical"
    LATTICE = "lattice"
    HASH_BASED = "hash-based"


@dataclass(frozen=True)
class SchemeMetadata:
    scheme: SchemeId
    family: Family
    stateful: bool
    nist_level: int
    pk_len: int
    sk_len: int
    sig_len: int
    quantum_safe: bool
    variable_sig: bool = False

    @property
    def max_signatures(self) -> int | None:
        """Leaf capacity for stateful schemes, ``None`` otherwise."""
        return _CAPACITY.get(self.scheme)


def _m(scheme, family, stateful, level, pk, sk, sig, variable=False):
    return SchemeMetadata(
        scheme, family, stateful, level, pk, sk, sig,
        quantum_safe=family is not Family.CLASSICAL, variable_sig=variable,
    )


# ECDSA: SEC1 uncompressed point, raw scalar, raw r||s.
# LMS: RFC 8554 public key and signature; sk is the packed native state
# (u32 lms type, u32 ots type, I, seed, u32 q), which is smaller than the
# expanded private keys other implementations store.
_METADATA = {
    m.scheme: m
    for m in (
        _m(SchemeId.ECDSA_P256, Family.CLASSICAL, False, 0, 65, 32, 64),
        _m(SchemeId.ML_DSA_44, Family.LATTICE, False, 2, 1312, 2560, 2420),
        _m(SchemeId.ML_DSA_65, Family.LATTICE, False, 3, 1952, 4032, 3309),
        _m(SchemeId.ML_DSA_87, Family.LATTICE, False, 5, 2592, 4896, 4627),
        _m(SchemeId.FN_DSA_512, Family.LATTICE, False, 1, 897, 1281, 666, variable=True),
        _m(SchemeId.FN_DSA_1024, Family.LATTICE, False, 5, 1793, 2305, 1280, variable=True),
        _m(SchemeId.SLH_DSA_128S, Family.HASH_BASED, False, 1, 32, 64, 7856),
        _m(SchemeId.LMS_H5_W8, Family.HASH_BASED, True, 5, 56, 60,
           lms.signature_length(lms.LMS_SHA256_M32_H5, lms.LMOTS_SHA256_N32_W8)),
        _m(SchemeId.LMS_H10_W8, Family.HASH_BASED, True, 5, 56, 60,
           lms.signature_length(lms.LMS_SHA256_M32_H10, lms.LMOTS_SHA256_N32_W8)),
        _m(SchemeId.XMSS_H10, Family.HASH_BASED, True, 5, 64, 132, 2500),
    )
}

_CAPACITY = {
    SchemeId.LMS_H5_W8: 1 << 5,
    SchemeId.LMS_H10_W8: 1 << 10,
    SchemeId.XMSS_H10: 1 << 10,
}

DEFAULT_PQ_SCHEME = SchemeId.ML_DSA_65


def scheme_metadata(scheme) -> SchemeMetadata:
    return _METADATA[SchemeId.parse(scheme)]


@dataclass
class KeyPair:
    """A public key and its private counterpart.

    ``private_key`` is a ``cryptography`` key object for ECDSA / ML-DSA and
    an :class:`~pqtc.lms.LmsPrivateState` for LMS. It may be ``None`` for a
    verify-only pair.
    """

    scheme: SchemeId
    public_key: bytes
    private_key: Any = None

    @property
    def meta(self) -> SchemeMetadata:
        return scheme_metadata(self.scheme)

    def public(self) -> "KeyPair":
        return KeyPair(self.scheme, self.public_key)


class Provider:
    def keygen(self, scheme: SchemeId, randomness: Randomness) -> KeyPair:
        raise NotImplementedError

    def sign(self, key: KeyPair, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError

    def private_bytes(self, key: KeyPair) -> bytes:
        raise NotImplementedError

    def load_private(self, scheme: SchemeId, secret: bytes, public_key: bytes):
        raise NotImplementedError


class EcdsaP256(Provider):
    curve = ec.SECP256R1()
    order = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551

    def keygen(self, scheme, randomness):
        while True:
            d = int.from_bytes(randomness(32), "big")
            if 0 < d < self.order:
                break
        sk = ec.derive_private_key(d, self.curve)
        return KeyPair(scheme, self._pub(sk.public_key()), sk)

    @staticmethod
    def _pub(pk) -> bytes:
        from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

        return pk.public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)

    def sign(self, key, message):
        r, s = decode_dss_signature(key.private_key.sign(message, ec.ECDSA(hashes.SHA256())))
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")

    def verify(self, public_key, message, signature):
        if len(signature) != 64 or len(public_key) != 65:
            return False
        r = int.from_bytes(signature[:32], "big")
        s = int.from_bytes(signature[32:], "big")
        if not (0 < r < self.order and 0 < s < self.order):
            return False
        try:
            pk = ec.EllipticCurvePublicKey.from_encoded_point(self.curve, public_key)
            pk.verify(encode_dss_signature(r, s), message, ec.ECDSA(hashes.SHA256()))
        except (InvalidSignature, ValueError):
            return False
        return True

    def private_bytes(self, key):
        return key.private_key.private_numbers().private_value.to_bytes(32, "big")

    def load_private(self, scheme, secret, public_key):
        sk = ec.derive_private_key(int.from_bytes(secret, "big"), self.curve)
        if self._pub(sk.public_key()) != public_key:
            raise ValueError("ECDSA private scalar does not match the public key")
        return sk


class MlDsa(Provider):
    classes = {
        SchemeId.ML_DSA_44: (mldsa.MLDSA44PrivateKey, mldsa.MLDSA44PublicKey),
        SchemeId.ML_DSA_65: (mldsa.MLDSA65PrivateKey, mldsa.MLDSA65PublicKey),
        SchemeId.ML_DSA_87: (mldsa.MLDSA87PrivateKey, mldsa.MLDSA87PublicKey),
    }

    def __init__(self, scheme: SchemeId):
        self.scheme = scheme
        self.priv_cls, self.pub_cls = self.classes[scheme]

    def keygen(self, scheme, randomness):
        sk = self.priv_cls.from_seed_bytes(randomness(32))
        return KeyPair(scheme, sk.public_key().public_bytes_raw(), sk)

    def sign(self, key, message):
        return key.private_key.sign(message)

    def verify(self, public_key, message, signature):
        try:
            self.pub_cls.from_public_bytes(public_key).verify(signature, message)
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True

    def private_bytes(self, key):
        return key.private_key.private_bytes_raw()

    def load_private(self, scheme, secret, public_key):
        sk = self.priv_cls.from_seed_bytes(secret)
        if sk.public_key().public_bytes_raw() != public_key:
            raise ValueError("ML-DSA seed does not match the public key")
        return sk


class Lms(Provider):
    heights = {SchemeId.LMS_H5_W8: lms.LMS_SHA256_M32_H5, SchemeId.LMS_H10_W8: lms.LMS_SHA256_M32_H10}

    def __init__(self, scheme: SchemeId):
        self.params = self.heights[scheme]

    def keygen(self, scheme, randomness, store=None):
        pub, state = lms.lms_keygen(
            self.params, lms.LMOTS_SHA256_N32_W8, randomness, store=store
        )
        return KeyPair(scheme, pub.to_bytes(), state)

    def sign(self, key, message):
        return lms.lms_sign(key.private_key, message).to_bytes()

    def verify(self, public_key, message, signature):
        try:
            pub = lms.LmsPublicKey.from_bytes(public_key)
        except Exception:  # noqa: BLE001 - any malformed key is a failed verify
            return False
        if pub.lms_type != self.params.type_code or pub.ots_type != lms.LMOTS_SHA256_N32_W8.type_code:
            return False
        return lms.lms_verify(pub, message, signature)


_PROVIDERS: dict[SchemeId, Provider] = {
    SchemeId.ECDSA_P256: EcdsaP256(),
    SchemeId.ML_DSA_44: MlDsa(SchemeId.ML_DSA_44),
    SchemeId.ML_DSA_65: MlDsa(SchemeId.ML_DSA_65),
    SchemeId.ML_DSA_87: MlDsa(SchemeId.ML_DSA_87),
    SchemeId.LMS_H5_W8: Lms(SchemeId.LMS_H5_W8),
    SchemeId.LMS_H10_W8: Lms(SchemeId.LMS_H10_W8),
}


def provider(scheme) -> Provider:
    scheme = SchemeId.parse(scheme)
    try:
        return _PROVIDERS[scheme]
    except KeyError:
        raise ProviderUnavailable(f"no provider installed for {scheme.value}") from None


def available_schemes() -> list[SchemeId]:
    return [s for s in SchemeId if s in _PROVIDERS]


def keygen(scheme, randomness: Randomness = secrets.token_bytes, **kwargs) -> KeyPair:
    """Generate a key pair. LMS accepts ``store=`` for its state persistence."""
    scheme = SchemeId.parse(scheme)
    return provider(scheme).keygen(scheme, randomness, **kwargs)


def sign(key: KeyPair, message: bytes) -> bytes:
    if key.private_key is None:
        raise ValueError(f"{key.scheme.value} key pair has no private key")
    return provider(key.scheme).sign(key, bytes(message))


def verify(public_key: bytes, scheme, message: bytes, signature: bytes) -> bool:
    """True iff ``signature`` is valid; malformed input is simply invalid."""
    scheme = SchemeId.parse(scheme)
    try:
        prov = provider(scheme)
    except ProviderUnavailable:
        log.warning("cannot verify %s signature: no provider", scheme.value)
        return False
    try:
        return prov.verify(bytes(public_key), bytes(message), bytes(signature))
    except Exception:  # noqa: BLE001 - verification is total
        log.debug("verify raised on malformed input", exc_info=True)
        return False
