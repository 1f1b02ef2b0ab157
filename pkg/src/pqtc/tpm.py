"""Software TPM: PCR banks, extend, and quotes in two flavors.

``ftpm_pq`` models a firmware TPM inside a TEE whose attestation key is
post-quantum. ``physical_hybrid`` models a discrete TPM that can only sign
with ECDSA; the PQ wrapper key belongs to the caller (the kernel driver in
the real deployment) and is applied on top of the TPM's signature.

Quote body layout, all integers big-endian::

    magic "PQTC" | flavor (1) | bank tag (1) | PCR bitmap (3) |
    composite digest (bank length) | nonce (32) | counter (8)
"""

from __future__ import annotations

import enum
import json
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from .crypto.hashes import (
    DEFAULT_MIN_BITS,
    Digest,
    HashAlgId,
    digest,
    policy_allows_hash,
)
from .crypto.hybrid import CLASSICAL_SCHEME, HybridSignature, wrap
from .crypto.keyfiles import key_from_envelope, stateless_envelope
from .crypto.schemes import DEFAULT_PQ_SCHEME, KeyPair, SchemeId, keygen, scheme_metadata, sign
from .errors import (
    BankMismatch,
    IndexOutOfRange,
    KeyFormatError,
    ParseError,
    ProviderUnavailable,
    UnknownAlgorithm,
    WrongFlavor,
)
from .lms.state import atomic_write

NUM_PCRS = 24
MAGIC = b"PQTC"
NONCE_LEN = 32
TPM_SCHEMA = "pqtc-tpm/1"
PCR_SCHEMA = "pqtc-pcr-state/1"
DEFAULT_BANKS = (HashAlgId.SHA256, HashAlgId.SHA384, HashAlgId.SHA512, HashAlgId.SHA3_512)

Selection = Union[bytes, Iterable[int]]


class Flavor(enum.Enum):
    FTPM_PQ = "ftpm_pq"
    PHYSICAL_HYBRID = "physical_hybrid"

    @property
    def tag(self) -> int:
        return 1 if self is Flavor.FTPM_PQ else 2

    @classmethod
    def from_tag(cls, tag: int) -> "Flavor":
        for f in cls:
            if f.tag == tag:
                return f
        raise ValueError(f"unknown flavor tag {tag}")


def selection_bitmap(selection: Selection) -> bytes:
    """3-byte bitmap; PCR i is bit (i % 8) of byte (i // 8)."""
    if isinstance(selection, (bytes, bytearray)):
        if len(selection) != 3:
            raise ValueError("PCR bitmap must be 3 bytes")
        return bytes(selection)
    bits = bytearray(3)
    for i in selection:
        if not 0 <= i < NUM_PCRS:
            raise IndexOutOfRange(f"PCR index {i} outside 0..{NUM_PCRS - 1}")
        bits[i // 8] |= 1 << (i % 8)
    return bytes(bits)


def selected_indices(selection: Selection) -> tuple[int, ...]:
    bits = selection_bitmap(selection)
    return tuple(i for i in range(NUM_PCRS) if bits[i // 8] >> (i % 8) & 1)


def composite_digest(bank_alg: HashAlgId, values: Iterable[Digest]) -> Digest:
    return digest(bank_alg, b"".join(v.value for v in values))


@dataclass(frozen=True)
class QuoteBody:
    flavor: Flavor
    bank_alg: HashAlgId
    pcr_selection: tuple[int, ...]
    composite_digest: Digest
    nonce: bytes
    counter: int

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                MAGIC,
                bytes([self.flavor.tag, self.bank_alg.tag]),
                selection_bitmap(self.pcr_selection),
                self.composite_digest.value,
                self.nonce,
                struct.pack(">Q", self.counter),
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "QuoteBody":
        data = bytes(data)
        if len(data) < 9 or data[:4] != MAGIC:
            raise ParseError("not a quote body")
        try:
            flavor = Flavor.from_tag(data[4])
            alg = HashAlgId.from_tag(data[5])
        except Exception as exc:
            raise ParseError(f"bad quote header: {exc}") from exc
        n = alg.output_len
        if len(data) != 9 + n + NONCE_LEN + 8:
            raise ParseError("quote body length does not match its bank algorithm")
        return cls(
            flavor,
            alg,
            selected_indices(data[6:9]),
            Digest(alg, data[9 : 9 + n]),
            data[9 + n : 9 + n + NONCE_LEN],
            struct.unpack(">Q", data[-8:])[0],
        )


@dataclass(frozen=True)
class SignedQuote:
    """PQ-native quote. ``body`` holds the exact signed bytes."""

    body: bytes
    scheme: SchemeId
    signature: bytes

    def parsed(self) -> QuoteBody:
        return QuoteBody.from_bytes(self.body)


@dataclass(frozen=True)
class HybridQuote:
    body: bytes
    hybrid: HybridSignature

    def parsed(self) -> QuoteBody:
        return QuoteBody.from_bytes(self.body)


class PcrBank:
    def __init__(self, alg: HashAlgId):
        self.alg = alg
        self.registers = [Digest.zero(alg) for _ in range(NUM_PCRS)]


class TpmInstance:
    """One simulated TPM. Mutating commands are serialized by a lock."""

    def __init__(
        self,
        flavor: Flavor,
        attestation_keys: Mapping[str, KeyPair],
        banks: Iterable[HashAlgId] = DEFAULT_BANKS,
        counter: int = 0,
    ):
        self.flavor = Flavor(flavor)
        self.banks = {HashAlgId.parse(a): PcrBank(HashAlgId.parse(a)) for a in banks}
        if not any(policy_allows_hash(a, DEFAULT_MIN_BITS) for a in self.banks):
            raise ValueError("at least one PCR bank must meet the quantum hash policy")
        self.attestation_keys = dict(attestation_keys)
        for name, key in self.attestation_keys.items():
            if key.private_key is None:
                raise KeyFormatError(f"attestation key {name!r} has no private half")
            if key.meta.stateful:
                raise KeyFormatError("stateful schemes cannot be TPM attestation keys")
        if self.flavor is Flavor.FTPM_PQ:
            if not any(k.meta.quantum_safe for k in self.attestation_keys.values()):
                raise WrongFlavor("an fTPM needs a quantum-safe attestation key")
        elif not any(k.scheme is CLASSICAL_SCHEME for k in self.attestation_keys.values()):
            raise WrongFlavor("a physical TPM needs an ECDSA-P256 attestation key")
        self.monotonic_counter = counter
        self.lock = threading.RLock()

    @classmethod
    def create(
        cls,
        flavor: Flavor,
        ak_schemes: Iterable[SchemeId] = (),
        banks: Iterable[HashAlgId] = DEFAULT_BANKS,
        **keygen_kwargs,
    ) -> "TpmInstance":
        """Fresh TPM with newly generated attestation keys named by scheme."""
        flavor = Flavor(flavor)
        schemes = list(ak_schemes) or [
            DEFAULT_PQ_SCHEME if flavor is Flavor.FTPM_PQ else CLASSICAL_SCHEME
        ]
        keys = {SchemeId.parse(s).value: keygen(s, **keygen_kwargs) for s in schemes}
        return cls(flavor, keys, banks)

    # -- PCRs -----------------------------------------------------------
    def _bank(self, alg) -> PcrBank:
        try:
            return self.banks[HashAlgId.parse(alg)]
        except (KeyError, UnknownAlgorithm):
            raise BankMismatch(f"no PCR bank for {alg}") from None

    def pcr_extend(self, bank_alg: HashAlgId, index: int, measurement: Digest) -> Digest:
        bank = self._bank(bank_alg)
        if not 0 <= index < NUM_PCRS:
            raise IndexOutOfRange(f"PCR index {index} outside 0..{NUM_PCRS - 1}")
        if measurement.alg is not bank.alg:
            raise BankMismatch(
                f"{measurement.alg.value} measurement cannot extend the {bank.alg.value} bank"
            )
        with self.lock:
            new = digest(bank.alg, bank.registers[index].value + measurement.value)
            bank.registers[index] = new
            return new

    def pcr_read(self, bank_alg: HashAlgId, selection: Selection) -> list[tuple[int, Digest]]:
        bank = self._bank(bank_alg)
        indices = selected_indices(selection)
        with self.lock:
            return [(i, bank.registers[i]) for i in indices]

    # -- quotes ---------------------------------------------------------
    def _body(self, bank_alg, selection, nonce: bytes) -> QuoteBody:
        if len(nonce) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes")
        bank = self._bank(bank_alg)
        values = self.pcr_read(bank.alg, selection)
        self.monotonic_counter += 1
        return QuoteBody(
            self.flavor,
            bank.alg,
            tuple(i for i, _ in values),
            composite_digest(bank.alg, (v for _, v in values)),
            bytes(nonce),
            self.monotonic_counter,
        )

    def key_for(self, scheme: SchemeId) -> KeyPair:
        for key in self.attestation_keys.values():
            if key.scheme is scheme:
                return key
        raise ProviderUnavailable(f"no {scheme.value} attestation key in this TPM")

    def schemes(self) -> list[SchemeId]:
        return [k.scheme for k in self.attestation_keys.values()]

    def quote_pq(
        self,
        bank_alg: HashAlgId,
        selection: Selection,
        nonce: bytes,
        scheme: Optional[SchemeId] = None,
    ) -> SignedQuote:
        if self.flavor is not Flavor.FTPM_PQ:
            raise WrongFlavor("quote_pq requires an ftpm_pq TPM")
        if scheme is None:
            scheme = DEFAULT_PQ_SCHEME if DEFAULT_PQ_SCHEME in self.schemes() else next(
                k.scheme for k in self.attestation_keys.values() if k.meta.quantum_safe
            )
        scheme = SchemeId.parse(scheme)
        if not scheme_metadata(scheme).quantum_safe:
            raise WrongFlavor(f"{scheme.value} is not a post-quantum scheme")
        key = self.key_for(scheme)
        with self.lock:
            body = self._body(bank_alg, selection, nonce).to_bytes()
            return SignedQuote(body, scheme, sign(key, body))

    def quote_classical(self, bank_alg, selection, nonce) -> tuple[bytes, bytes]:
        """TPM-internal ECDSA quote: (body bytes, signature)."""
        if self.flavor is not Flavor.PHYSICAL_HYBRID:
            raise WrongFlavor("classical quotes come from a physical_hybrid TPM")
        key = self.key_for(CLASSICAL_SCHEME)
        with self.lock:
            body = self._body(bank_alg, selection, nonce).to_bytes()
            return body, sign(key, body)

    def quote_hybrid(self, wrapper_key: KeyPair, bank_alg, selection, nonce) -> HybridQuote:
        """ECDSA quote from the TPM, wrapped by the driver-held PQ key."""
        if self.flavor is not Flavor.PHYSICAL_HYBRID:
            raise WrongFlavor("quote_hybrid requires a physical_hybrid TPM")
        if not wrapper_key.meta.quantum_safe:
            raise WrongFlavor(f"{wrapper_key.scheme.value} cannot wrap a quote")
        body, inner = self.quote_classical(bank_alg, selection, nonce)
        return HybridQuote(body, wrap(inner, wrapper_key, body))

    # -- persistence ----------------------------------------------------
    def to_record(self) -> dict:
        with self.lock:
            return {
                "schema": TPM_SCHEMA,
                "flavor": self.flavor.value,
                "counter": self.monotonic_counter,
                "banks": {
                    alg.value: [r.hex() for r in bank.registers]
                    for alg, bank in self.banks.items()
                },
                "keys": {n: stateless_envelope(k) for n, k in self.attestation_keys.items()},
            }

    @classmethod
    def from_record(cls, record: dict) -> "TpmInstance":
        try:
            if record.get("schema") != TPM_SCHEMA:
                raise KeyFormatError(f"unexpected TPM state schema {record.get('schema')!r}")
            keys = {n: key_from_envelope(env) for n, env in record["keys"].items()}
            banks = [HashAlgId.parse(a) for a in record["banks"]]
            tpm = cls(Flavor(record["flavor"]), keys, banks, int(record["counter"]))
            for a, regs in record["banks"].items():
                bank = tpm.banks[HashAlgId.parse(a)]
                if len(regs) != NUM_PCRS:
                    raise ValueError(f"bank {a} must hold {NUM_PCRS} registers")
                bank.registers = [Digest(bank.alg, bytes.fromhex(r)) for r in regs]
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise KeyFormatError(f"malformed TPM state: {exc}") from exc
        return tpm

    def pcr_record(self) -> dict:
        """Registers and counter only; keys live in their own files."""
        with self.lock:
            return {
                "schema": PCR_SCHEMA,
                "flavor": self.flavor.value,
                "counter": self.monotonic_counter,
                "banks": {alg.value: [r.hex() for r in b.registers] for alg, b in self.banks.items()},
            }

    def restore_pcrs(self, record: dict) -> None:
        try:
            if record.get("schema") != PCR_SCHEMA:
                raise ValueError(f"unexpected PCR state schema {record.get('schema')!r}")
            if Flavor(record["flavor"]) is not self.flavor:
                raise WrongFlavor("PCR state belongs to a TPM of another flavor")
            banks = {}
            for a, regs in record["banks"].items():
                bank = self._bank(a)
                if len(regs) != NUM_PCRS:
                    raise ValueError(f"bank {a} must hold {NUM_PCRS} registers")
                banks[bank.alg] = [Digest(bank.alg, bytes.fromhex(r)) for r in regs]
            counter = int(record["counter"])
        except (KeyError, TypeError, ValueError, BankMismatch) as exc:
            raise KeyFormatError(f"malformed PCR state: {exc}") from exc
        with self.lock:
            for alg, regs in banks.items():
                self.banks[alg].registers = regs
            self.monotonic_counter = counter

    def save(self, path) -> None:
        atomic_write(Path(path), json.dumps(self.to_record(), indent=1).encode())

    @classmethod
    def load(cls, path) -> "TpmInstance":
        try:
            record = json.loads(Path(path).read_text())
        except (OSError, ValueError) as exc:
            raise KeyFormatError(f"cannot read TPM state {path}: {exc}") from exc
        return cls.from_record(record)
