"""On-disk key formats.

Public keys: one scheme tag byte (see ``SCHEME_TAGS``) followed by the raw
public key. Private keys: a JSON envelope::

    {"schema": "pqtc-key/1", "scheme": "ML-DSA-65",
     "public_b64": "...", "secret_b64": "..."}

LMS private keys carry ``"state"`` (the LMS state record) instead of
``secret_b64``; the file is rewritten atomically before every signature.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

from ..errors import KeyFormatError, ProviderUnavailable, UnknownScheme
from ..lms import FileStateStore
from ..lms.state import atomic_write
from .schemes import KeyPair, SchemeId, provider, scheme_metadata

KEY_SCHEMA = "pqtc-key/1"


def encode_public(scheme: SchemeId, public_key: bytes) -> bytes:
    return bytes([SchemeId.parse(scheme).tag]) + public_key


def decode_public(data: bytes) -> KeyPair:
    if not data:
        raise KeyFormatError("empty public key")
    try:
        scheme = SchemeId.from_tag(data[0])
    except UnknownScheme as exc:
        raise KeyFormatError(str(exc)) from exc
    pk = bytes(data[1:])
    meta = scheme_metadata(scheme)
    if not meta.variable_sig and len(pk) != meta.pk_len:
        raise KeyFormatError(f"{scheme.value} public key must be {meta.pk_len} bytes, got {len(pk)}")
    return KeyPair(scheme, pk)


def write_public_key(path, key: KeyPair) -> None:
    atomic_write(Path(path), encode_public(key.scheme, key.public_key))


def read_public_key(path) -> KeyPair:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise KeyFormatError(f"cannot read public key {path}: {exc}") from exc
    return decode_public(data)


def _envelope(key: KeyPair) -> dict:
    return {
        "schema": KEY_SCHEMA,
        "scheme": key.scheme.value,
        "public_b64": base64.b64encode(key.public_key).decode(),
    }


def stateless_envelope(key: KeyPair) -> dict:
    """Private envelope as a dict, for embedding in other state files."""
    if key.meta.stateful:
        raise KeyFormatError(f"{key.scheme.value} keys need a dedicated state file")
    env = _envelope(key)
    env["secret_b64"] = base64.b64encode(provider(key.scheme).private_bytes(key)).decode()
    return env


def key_from_envelope(env: dict) -> KeyPair:
    if not isinstance(env, dict) or env.get("schema") != KEY_SCHEMA:
        raise KeyFormatError(f"not a {KEY_SCHEMA} key envelope")
    try:
        scheme = SchemeId.parse(env["scheme"])
        public = base64.b64decode(env["public_b64"], validate=True)
        secret = base64.b64decode(env["secret_b64"], validate=True)
        return KeyPair(scheme, public, provider(scheme).load_private(scheme, secret, public))
    except (KeyError, TypeError, ValueError, UnknownScheme, ProviderUnavailable) as exc:
        raise KeyFormatError(f"malformed key envelope: {exc}") from exc


def save_private_key(path, key: KeyPair) -> None:
    """Write the private envelope; LMS keys become bound to this file."""
    path = Path(path)
    if key.private_key is None:
        raise KeyFormatError("key pair has no private half")
    if key.meta.stateful:
        state = key.private_key
        state.store = FileStateStore(path, envelope=_envelope(key))
        state.commit(state.q)
        return
    atomic_write(path, json.dumps(stateless_envelope(key), indent=1).encode())


def load_private_key(path) -> KeyPair:
    path = Path(path)
    try:
        env = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise KeyFormatError(f"cannot read private key {path}: {exc}") from exc
    if not isinstance(env, dict) or env.get("schema") != KEY_SCHEMA:
        raise KeyFormatError(f"{path} is not a {KEY_SCHEMA} key envelope")
    try:
        scheme = SchemeId.parse(env["scheme"])
        public = base64.b64decode(env["public_b64"], validate=True)
        if scheme_metadata(scheme).stateful:
            header = {k: env[k] for k in ("schema", "scheme", "public_b64")}
            state = FileStateStore(path, envelope=header).load()
            key = KeyPair(scheme, public, state)
        else:
            key = key_from_envelope(env)
    except (KeyError, TypeError, ValueError, UnknownScheme, ProviderUnavailable) as exc:
        raise KeyFormatError(f"malformed private key {path}: {exc}") from exc
    return key
