"""Secure boot, measured boot and signer-side firmware signing.

Secure boot walks the manifest in order and halts at the first stage whose
signature does not verify. Measured boot never looks at signatures: it
hashes every stage into PCR 0 and records an event, tampered or not.

Stage 0 is the CRTM: immutable, unsigned, implicitly trusted. A stage may
hand out additional public keys (``provides``) that later stages name in
``signer_pk_ref``; those keys are appended to the stage payload so that
they are covered by the stage's own signature and measurement.
"""

from __future__ import annotations

import base64
import enum
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

from .crypto.hashes import (
    DEFAULT_MIN_BITS,
    Digest,
    HashAlgId,
    digest,
    policy_allows_hash,
)
from .crypto.keyfiles import encode_public
from .crypto.schemes import KeyPair, SchemeId, scheme_metadata, sign, verify
from .errors import InvalidUpdateSignature, KeyFormatError, PolicyViolation
from .lms.state import atomic_write

STAGE_DIGEST = HashAlgId.SHA384
BOOT_PCR = 0
ROOT_REF = "root"
MANIFEST_SCHEMA = "pqtc-manifest/1"

Verifier = Callable[[bytes, SchemeId, bytes, bytes], bool]


@dataclass(frozen=True)
class BootStage:
    name: str
    image: bytes
    signature: bytes = b""
    scheme: Optional[SchemeId] = None
    signer_pk_ref: str = ROOT_REF
    provides: dict = field(default_factory=dict)  # name -> (SchemeId, public key)

    @property
    def payload(self) -> bytes:
        """Bytes that are signed and measured: the image plus any delivered keys."""
        if not self.provides:
            return self.image
        parts = [self.image, b"PQTCKEYS"]
        for name in sorted(self.provides):
            scheme, pk = self.provides[name]
            raw = name.encode()
            blob = encode_public(scheme, pk)
            parts += [struct.pack(">H", len(raw)), raw, struct.pack(">I", len(blob)), blob]
        return b"".join(parts)

    def signed_digest(self) -> bytes:
        return digest(STAGE_DIGEST, self.payload).value


@dataclass(frozen=True)
class BootManifest:
    stages: tuple
    root_scheme: SchemeId
    root_pk: bytes
    manifest_version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if len(self.stages) < 2:
            raise ValueError("a boot manifest needs at least two stages")
        meta = scheme_metadata(self.root_scheme)
        if not meta.stateful:
            raise ValueError("the embedded root key must be a stateful hash-based scheme")
        if self.stages[0].signature:
            raise ValueError("stage 0 (CRTM) carries no signature")

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        def pk(scheme, raw):
            return {"scheme": scheme.value, "public_b64": base64.b64encode(raw).decode()}

        return {
            "schema": MANIFEST_SCHEMA,
            "manifest_version": self.manifest_version,
            "root": pk(self.root_scheme, self.root_pk),
            "stages": [
                {
                    "name": s.name,
                    "image_b64": base64.b64encode(s.image).decode(),
                    "signature_b64": base64.b64encode(s.signature).decode(),
                    "scheme": s.scheme.value if s.scheme else None,
                    "signer": s.signer_pk_ref,
                    "provides": {n: pk(*v) for n, v in sorted(s.provides.items())},
                }
                for s in self.stages
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BootManifest":
        def pk(entry):
            return SchemeId.parse(entry["scheme"]), base64.b64decode(entry["public_b64"], validate=True)

        try:
            if d.get("schema") != MANIFEST_SCHEMA:
                raise KeyFormatError(f"unexpected manifest schema {d.get('schema')!r}")
            root_scheme, root_pk = pk(d["root"])
            stages = [
                BootStage(
                    s["name"],
                    base64.b64decode(s["image_b64"], validate=True),
                    base64.b64decode(s["signature_b64"], validate=True),
                    SchemeId.parse(s["scheme"]) if s["scheme"] else None,
                    s.get("signer", ROOT_REF),
                    {n: pk(v) for n, v in s.get("provides", {}).items()},
                )
                for s in d["stages"]
            ]
            return cls(tuple(stages), root_scheme, root_pk, int(d["manifest_version"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise KeyFormatError(f"malformed boot manifest: {exc}") from exc

    def save(self, path) -> None:
        atomic_write(Path(path), json.dumps(self.to_dict(), indent=1).encode())

    @classmethod
    def load(cls, path) -> "BootManifest":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, ValueError) as exc:
            raise KeyFormatError(f"cannot read manifest {path}: {exc}") from exc


class Outcome(enum.Enum):
    BOOTED = "Booted"
    HALTED = "Halted"


@dataclass
class BootReport:
    outcome: Outcome
    halted_at: Optional[int] = None
    verified: list = field(default_factory=list)
    event_log: list = field(default_factory=list)  # (stage name, Digest)
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "halted_at": self.halted_at,
            "verified": list(self.verified),
            "event_log": [{"stage": n, "digest": str(d)} for n, d in self.event_log],
            "reason": self.reason,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BootReport":
        events = []
        for e in d.get("event_log", []):
            alg, _, hexval = e["digest"].partition(":")
            events.append((e["stage"], Digest(HashAlgId.parse(alg), bytes.fromhex(hexval))))
        return cls(Outcome(d["outcome"]), d.get("halted_at"), list(d.get("verified", [])), events, d.get("reason", ""))


def sign_stage(signer: KeyPair, image: bytes) -> bytes:
    """Sign SHA-384(image) with the next unused leaf of ``signer``.

    The key state advances in place and is persisted before the signature
    is returned.
    """
    if not signer.meta.stateful:
        raise ValueError(f"firmware must be signed with a stateful hash-based key, not {signer.scheme.value}")
    return sign(signer, digest(STAGE_DIGEST, image).value)


def signed_stage(signer: KeyPair, name: str, image: bytes, signer_pk_ref: str = ROOT_REF,
                 provides: Optional[dict] = None) -> BootStage:
    stage = BootStage(name, image, b"", signer.scheme, signer_pk_ref, dict(provides or {}))
    return replace(stage, signature=sign_stage_payload(signer, stage))


def sign_stage_payload(signer: KeyPair, stage: BootStage) -> bytes:
    return sign_stage(signer, stage.payload)


def build_manifest(signer: KeyPair, images: list[tuple[str, bytes]]) -> BootManifest:
    """CRTM first (unsigned), every later image signed by ``signer``."""
    (crtm_name, crtm), *rest = images
    stages = [BootStage(crtm_name, crtm)]
    stages += [signed_stage(signer, name, image) for name, image in rest]
    return BootManifest(tuple(stages), signer.scheme, signer.public_key)


def secure_boot(manifest: BootManifest, verifier: Verifier = verify) -> BootReport:
    keys = {ROOT_REF: (manifest.root_scheme, manifest.root_pk)}
    verified = [manifest.stages[0].name]
    keys.update(manifest.stages[0].provides)
    for i, stage in enumerate(manifest.stages[1:], start=1):
        key = keys.get(stage.signer_pk_ref)
        if key is None:
            return BootReport(Outcome.HALTED, i, verified, reason=f"unknown signer {stage.signer_pk_ref!r}")
        scheme, pk = key
        if stage.scheme is not scheme or not verifier(pk, scheme, stage.signed_digest(), stage.signature):
            return BootReport(Outcome.HALTED, i, verified, reason=f"signature check failed for {stage.name}")
        verified.append(stage.name)
        keys.update(stage.provides)
    return BootReport(Outcome.BOOTED, None, verified)


def measured_boot(manifest: BootManifest, tpm, bank_alg: HashAlgId = STAGE_DIGEST) -> BootReport:
    bank_alg = HashAlgId.parse(bank_alg)
    if not policy_allows_hash(bank_alg, DEFAULT_MIN_BITS):
        raise PolicyViolation(f"{bank_alg.value} is below the {DEFAULT_MIN_BITS}-bit quantum policy")
    events = []
    for stage in manifest.stages:
        m = digest(bank_alg, stage.payload)
        tpm.pcr_extend(bank_alg, BOOT_PCR, m)
        events.append((stage.name, m))
    return BootReport(Outcome.BOOTED, None, [], events)


def replay_boot_log(events, bank_alg: HashAlgId) -> Digest:
    acc = Digest.zero(bank_alg)
    for _, m in events:
        acc = digest(bank_alg, acc.value + m.value)
    return acc


def sign_root_update(current_root: KeyPair, new_root: KeyPair) -> bytes:
    return sign(current_root, encode_public(new_root.scheme, new_root.public_key))


def rotate_root_key(manifest: BootManifest, new_root: KeyPair, update_signature: bytes) -> BootManifest:
    """Embed ``new_root`` if the current root signed it; otherwise refuse."""
    blob = encode_public(new_root.scheme, new_root.public_key)
    if not verify(manifest.root_pk, manifest.root_scheme, blob, update_signature):
        raise InvalidUpdateSignature("root key update is not signed by the current root key")
    return replace(
        manifest,
        root_scheme=new_root.scheme,
        root_pk=new_root.public_key,
        manifest_version=manifest.manifest_version + 1,
    )
