"""Protocol objects and their JSON wire representation (protocol v1).

Binary fields travel as unpadded base64url strings. Every object maps to
a flat dict via ``to_wire`` and back via ``from_wire``; the frame layer
adds the ``type`` and ``v`` keys.
"""

from __future__ import annotations

import base64
import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Union

from ..boot import BootReport
from ..crypto.hashes import Digest, HashAlgId
from ..crypto.hybrid import HybridSignature
from ..crypto.schemes import SchemeId
from ..tpm import Flavor, HybridQuote, SignedQuote


def b64e(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64d(text: str) -> bytes:
    if not isinstance(text, str):
        raise ValueError("expected a base64url string")
    raw = base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))
    if b64e(raw) != text:
        raise ValueError("non-canonical base64url")
    return raw


def digest_to_wire(d: Digest) -> str:
    return f"{d.alg.log_name}:{d.hex()}"


def digest_from_wire(text: str) -> Digest:
    alg, sep, value = text.partition(":")
    if not sep:
        raise ValueError(f"bad digest {text!r}")
    return Digest(HashAlgId.parse(alg), bytes.fromhex(value))


@dataclass(frozen=True)
class AttestRequest:
    attester_id: str

    def to_wire(self) -> dict:
        return {"attester_id": self.attester_id}

    @classmethod
    def from_wire(cls, d: dict) -> "AttestRequest":
        return cls(str(d["attester_id"]))


@dataclass(frozen=True)
class Challenge:
    nonce: bytes
    bank_alg: HashAlgId
    pcr_selection: tuple
    accepted_schemes: tuple
    expiry: float

    def to_wire(self) -> dict:
        return {
            "nonce": b64e(self.nonce),
            "bank_alg": self.bank_alg.value,
            "pcr_selection": list(self.pcr_selection),
            "accepted_schemes": [s.value for s in self.accepted_schemes],
            "expiry": self.expiry,
        }

    @classmethod
    def from_wire(cls, d: dict) -> "Challenge":
        return cls(
            b64d(d["nonce"]),
            HashAlgId.parse(d["bank_alg"]),
            tuple(int(i) for i in d["pcr_selection"]),
            tuple(SchemeId.parse(s) for s in d["accepted_schemes"]),
            float(d["expiry"]),
        )


Quote = Union[SignedQuote, HybridQuote]


def quote_to_wire(q: Quote) -> dict:
    if isinstance(q, SignedQuote):
        return {"kind": "pq", "body": b64e(q.body), "scheme": q.scheme.value, "signature": b64e(q.signature)}
    return {
        "kind": "hybrid",
        "body": b64e(q.body),
        "classical_sig": b64e(q.hybrid.classical_sig),
        "pq_sig": b64e(q.hybrid.pq_sig),
        "pq_scheme": q.hybrid.pq_scheme.value,
    }


def quote_from_wire(d: dict) -> Quote:
    if d["kind"] == "pq":
        return SignedQuote(b64d(d["body"]), SchemeId.parse(d["scheme"]), b64d(d["signature"]))
    if d["kind"] == "hybrid":
        return HybridQuote(
            b64d(d["body"]),
            HybridSignature(b64d(d["classical_sig"]), b64d(d["pq_sig"]), SchemeId.parse(d["pq_scheme"])),
        )
    raise ValueError(f"unknown quote kind {d['kind']!r}")


@dataclass(frozen=True)
class Evidence:
    """Attester reply. ``ima_log`` is the serialized log, byte for byte."""

    attester_id: str
    quote: Quote
    ima_log: bytes
    boot_log: tuple  # (stage name, Digest)
    attestation_pks: dict  # SchemeId -> public key bytes

    def to_wire(self) -> dict:
        return {
            "attester_id": self.attester_id,
            "quote": quote_to_wire(self.quote),
            "ima_log": b64e(self.ima_log),
            "boot_log": [{"stage": n, "digest": digest_to_wire(d)} for n, d in self.boot_log],
            "attestation_pks": {s.value: b64e(pk) for s, pk in self.attestation_pks.items()},
        }

    @classmethod
    def from_wire(cls, d: dict) -> "Evidence":
        return cls(
            str(d["attester_id"]),
            quote_from_wire(d["quote"]),
            b64d(d["ima_log"]),
            tuple((str(e["stage"]), digest_from_wire(e["digest"])) for e in d["boot_log"]),
            {SchemeId.parse(s): b64d(pk) for s, pk in d["attestation_pks"].items()},
        )


@dataclass(frozen=True)
class ReferenceValues:
    attester_id: str
    flavor: Flavor
    keys: dict  # SchemeId -> public key bytes
    golden_boot: tuple  # Digest, in boot order
    allowed_runtime: frozenset  # Digest
    bank_alg: HashAlgId = HashAlgId.SHA384
    address: Optional[str] = None
    ima_pcr: int = 10

    def __post_init__(self):
        schemes = set(self.keys)
        if self.flavor is Flavor.FTPM_PQ:
            if not schemes or not all(s.meta.quantum_safe for s in schemes):
                raise ValueError("fTPM enrollment needs quantum-safe attestation keys only")
        else:
            if SchemeId.ECDSA_P256 not in schemes:
                raise ValueError("hybrid enrollment needs the TPM's ECDSA-P256 key")
            if not any(s.meta.quantum_safe for s in schemes):
                raise ValueError("hybrid enrollment needs a quantum-safe wrapper key")

    FIELDS = ("attester_id", "flavor", "keys", "golden_boot", "allowed_runtime", "bank_alg", "address", "ima_pcr")

    def to_wire(self) -> dict:
        return {
            "attester_id": self.attester_id,
            "flavor": self.flavor.value,
            "keys": {s.value: b64e(pk) for s, pk in sorted(self.keys.items(), key=lambda kv: kv[0].value)},
            "golden_boot": [digest_to_wire(d) for d in self.golden_boot],
            "allowed_runtime": sorted(digest_to_wire(d) for d in self.allowed_runtime),
            "bank_alg": self.bank_alg.value,
            "address": self.address,
            "ima_pcr": self.ima_pcr,
        }

    @classmethod
    def from_wire(cls, d: dict, strict: bool = False) -> "ReferenceValues":
        if strict:
            unknown = set(d) - set(cls.FIELDS)
            if unknown:
                raise ValueError(f"unknown reference fields {sorted(unknown)}")
        return cls(
            str(d["attester_id"]),
            Flavor(d["flavor"]),
            {SchemeId.parse(s): b64d(pk) for s, pk in d["keys"].items()},
            tuple(digest_from_wire(x) for x in d["golden_boot"]),
            frozenset(digest_from_wire(x) for x in d["allowed_runtime"]),
            HashAlgId.parse(d["bank_alg"]),
            d.get("address"),
            int(d.get("ima_pcr", 10)),
        )


class Verdict(enum.Enum):
    TRUSTED = "TRUSTED"
    UNTRUSTED = "UNTRUSTED"


CHECK_NAMES = ("nonce", "signature", "hash-policy", "log-replay", "boot-reference", "runtime-allowlist")


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class AttestationResult:
    attester_id: str
    verdict: Verdict
    checks: tuple
    timestamp: float = field(default_factory=time.time)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_wire(self) -> dict:
        return {
            "attester_id": self.attester_id,
            "verdict": self.verdict.value,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_wire(cls, d: dict) -> "AttestationResult":
        return cls(
            str(d["attester_id"]),
            Verdict(d["verdict"]),
            tuple(Check(str(c["name"]), bool(c["passed"]), str(c["detail"])) for c in d["checks"]),
            float(d["timestamp"]),
        )


@dataclass(frozen=True)
class Enroll:
    refs: ReferenceValues

    def to_wire(self) -> dict:
        return {"refs": self.refs.to_wire()}

    @classmethod
    def from_wire(cls, d: dict) -> "Enroll":
        return cls(ReferenceValues.from_wire(d["refs"], strict=True))


@dataclass(frozen=True)
class GetResult:
    attester_id: str

    def to_wire(self) -> dict:
        return {"attester_id": self.attester_id}

    @classmethod
    def from_wire(cls, d: dict) -> "GetResult":
        return cls(str(d["attester_id"]))


@dataclass(frozen=True)
class Ack:
    detail: str = ""

    def to_wire(self) -> dict:
        return {"detail": self.detail}

    @classmethod
    def from_wire(cls, d: dict) -> "Ack":
        return cls(str(d.get("detail", "")))


@dataclass(frozen=True)
class ErrorMessage:
    code: str
    message: str

    def to_wire(self) -> dict:
        return {"code": self.code, "message": self.message}

    @classmethod
    def from_wire(cls, d: dict) -> "ErrorMessage":
        return cls(str(d["code"]), str(d["message"]))


def boot_log_of(report: BootReport) -> tuple:
    return tuple(report.event_log)
