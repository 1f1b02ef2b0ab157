"""JSON configuration files for the verifier service and the attester agent."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

from ..crypto.hashes import DEFAULT_MIN_BITS, HashAlgId
from ..crypto.schemes import SchemeId, scheme_metadata
from ..errors import ConfigError, PqtcError
from ..ima import ImaPolicy
from ..tpm import Flavor

VERIFIER_SCHEMA = "pqtc-verifier-config/1"
ATTESTER_SCHEMA = "pqtc-attester-config/1"


def _read_json(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return data


def _check_keys(d: dict, allowed, schema: str) -> None:
    if d.get("schema") != schema:
        raise ConfigError(f"expected schema {schema!r}, got {d.get('schema')!r}")
    unknown = set(d) - set(allowed) - {"schema"}
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")


@dataclass
class VerifierConfig:
    listen: str = "127.0.0.1:7840"
    store_path: str = "verifier-store.json"
    nonce_expiry: float = 120.0
    accepted_schemes: list = field(default_factory=lambda: [SchemeId.ML_DSA_65, SchemeId.ML_DSA_87, SchemeId.ML_DSA_44])
    min_hash_bits: int = DEFAULT_MIN_BITS
    bank_alg: HashAlgId = HashAlgId.SHA384
    pcr_selection: list = field(default_factory=lambda: [0, 10])
    agent_timeout: float = 30.0

    def __post_init__(self):
        try:
            self.accepted_schemes = [SchemeId.parse(s) for s in self.accepted_schemes]
            self.bank_alg = HashAlgId.parse(self.bank_alg)
        except PqtcError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.accepted_schemes:
            raise ConfigError("accepted_schemes must not be empty")
        if any(not scheme_metadata(s).quantum_safe for s in self.accepted_schemes):
            raise ConfigError("accepted_schemes name the PQ signature leg and must be quantum-safe")
        if self.min_hash_bits < 0 or self.nonce_expiry <= 0:
            raise ConfigError("min_hash_bits must be non-negative and nonce_expiry positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["accepted_schemes"] = [s.value for s in self.accepted_schemes]
        d["bank_alg"] = self.bank_alg.value
        return {"schema": VERIFIER_SCHEMA, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "VerifierConfig":
        _check_keys(d, cls.__dataclass_fields__, VERIFIER_SCHEMA)
        return cls(**{k: v for k, v in d.items() if k != "schema"})

    @classmethod
    def load(cls, path) -> "VerifierConfig":
        return cls.from_dict(_read_json(path))


@dataclass
class AttesterConfig:
    attester_id: str
    flavor: Flavor
    state_dir: str
    ak_keys: list  # attestation key files held by the TPM
    wrapper_key: Optional[str] = None  # PQ wrapper key of a physical_hybrid attester
    watched_dir: Optional[str] = None
    ima_policy: ImaPolicy = field(default_factory=lambda: ImaPolicy(("*",)))
    manifest: Optional[str] = None
    listen: str = "127.0.0.1:7841"
    verifier: Optional[str] = None
    bank_alg: HashAlgId = HashAlgId.SHA384

    def __post_init__(self):
        try:
            self.flavor = Flavor(self.flavor)
            self.bank_alg = HashAlgId.parse(self.bank_alg)
            if isinstance(self.ima_policy, dict):
                self.ima_policy = ImaPolicy.from_dict(self.ima_policy)
        except (ValueError, KeyError, PqtcError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.ak_keys:
            raise ConfigError("at least one attestation key file is required")
        if self.flavor is Flavor.PHYSICAL_HYBRID and not self.wrapper_key:
            raise ConfigError("a physical_hybrid attester needs a wrapper_key file")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["flavor"] = self.flavor.value
        d["bank_alg"] = self.bank_alg.value
        d["ima_policy"] = self.ima_policy.to_dict()
        return {"schema": ATTESTER_SCHEMA, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "AttesterConfig":
        _check_keys(d, cls.__dataclass_fields__, ATTESTER_SCHEMA)
        try:
            return cls(**{k: v for k, v in d.items() if k != "schema"})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "AttesterConfig":
        cfg = cls.from_dict(_read_json(path))
        base = Path(path).resolve().parent

        def rel(p):
            return None if p is None else str(base / p)

        # relative paths are taken relative to the config file
        cfg.state_dir = rel(cfg.state_dir)
        cfg.ak_keys = [rel(p) for p in cfg.ak_keys]
        cfg.wrapper_key = rel(cfg.wrapper_key)
        cfg.watched_dir = rel(cfg.watched_dir)
        cfg.manifest = rel(cfg.manifest)
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))
