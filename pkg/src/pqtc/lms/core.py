"""LMS keygen, signing and verification with RFC 8554 byte encodings."""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from hashlib import sha256
from struct import pack, unpack_from
from typing import Callable, Optional

from ..errors import ConcurrentSignError, StateExhausted, UnsupportedParams
from ._backend import kernels
from .params import (
    D_INTR,
    D_LEAF,
    D_MESG,
    D_PBLC,
    KEYGEN_HEIGHTS,
    LMOTS_SHA256_N32_W8,
    LMS_SHA256_M32_H5,
    N,
    LmotsParams,
    LmsParams,
    lmots_params,
    lms_params,
)
from .state import LmsPrivateState, StateStore

# Pseudorandom derivation index for the per-signature randomizer C; it sits
# outside the chain index range of every LM-OTS type.
C_INDEX = 0xFFFD


@dataclass(frozen=True)
class LmsPublicKey:
    lms_type: int
    ots_type: int
    I: bytes
    root: bytes

    def to_bytes(self) -> bytes:
        return pack(">II", self.lms_type, self.ots_type) + self.I + self.root

    @classmethod
    def from_bytes(cls, data: bytes) -> "LmsPublicKey":
        if len(data) != 8 + 16 + N:
            raise ValueError(f"LMS public key must be {8 + 16 + N} bytes")
        lms_type, ots_type = unpack_from(">II", data)
        lms_params(lms_type)
        lmots_params(ots_type)
        return cls(lms_type, ots_type, data[8:24], data[24:])


@dataclass(frozen=True)
class LmsSignature:
    q: int
    ots_type: int
    C: bytes
    y: tuple
    lms_type: int
    path: tuple

    @property
    def leaf_index(self) -> int:
        return self.q

    def to_bytes(self) -> bytes:
        return b"".join(
            [
                pack(">II", self.q, self.ots_type),
                self.C,
                *self.y,
                pack(">I", self.lms_type),
                *self.path,
            ]
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "LmsSignature":
        """Strict parse: exact length for the embedded type codes."""
        if len(data) < 8:
            raise ValueError("LMS signature too short")
        q, ots_type = unpack_from(">II", data)
        ots = lmots_params(ots_type)
        off = 8
        end_ots = off + N * (ots.p + 1)
        if len(data) < end_ots + 4:
            raise ValueError("LMS signature truncated")
        C = data[off : off + N]
        y = tuple(data[off + N * (i + 1) : off + N * (i + 2)] for i in range(ots.p))
        (lms_type,) = unpack_from(">I", data, end_ots)
        lms = lms_params(lms_type)
        start = end_ots + 4
        if len(data) != start + lms.h * N:
            raise ValueError("LMS signature length does not match its type codes")
        path = tuple(data[start + N * i : start + N * (i + 1)] for i in range(lms.h))
        return cls(q, ots_type, C, y, lms_type, path)


def _coef(S: bytes, i: int, w: int) -> int:
    bits = i * w
    return (S[bits // 8] >> (8 - w - bits % 8)) & ((1 << w) - 1)


def _digits(ots: LmotsParams, Q: bytes) -> list[int]:
    """Base-2^w digits of Q followed by the checksum digits."""
    w = ots.w
    top = (1 << w) - 1
    u = 8 * N // w
    cksum = sum(top - _coef(Q, i, w) for i in range(u)) << ots.ls
    S = Q + pack(">H", cksum)
    return [_coef(S, i, w) for i in range(ots.p)]


def _message_hash(I: bytes, q: int, C: bytes, message: bytes) -> bytes:
    return sha256(I + pack(">IH", q, D_MESG) + C + message).digest()


def _leaf_node(I: bytes, r: int, K: bytes) -> bytes:
    return sha256(I + pack(">IH", r, D_LEAF) + K).digest()


def _inner_node(I: bytes, r: int, left: bytes, right: bytes) -> bytes:
    return sha256(I + pack(">IH", r, D_INTR) + left + right).digest()


def _build_tree(I: bytes, seed: bytes, lms: LmsParams, ots: LmotsParams) -> list[bytes]:
    """Heap-indexed node array: nodes[1] is the root, leaves at 2^h..2^(h+1)-1."""
    leaves = 1 << lms.h
    nodes = [b""] * (2 * leaves)
    for q in range(leaves):
        K = kernels.leaf_public(I, q, seed, ots.p, ots.w)
        nodes[leaves + q] = _leaf_node(I, leaves + q, K)
    _fill_inner(I, nodes, leaves)
    return nodes


def _fill_inner(I: bytes, nodes: list[bytes], leaves: int) -> None:
    for r in range(leaves - 1, 0, -1):
        nodes[r] = _inner_node(I, r, nodes[2 * r], nodes[2 * r + 1])


def _cached_tree_ok(state: LmsPrivateState, nodes: list[bytes]) -> bool:
    leaves = state.max_leaves
    check = list(nodes)
    _fill_inner(state.I, check, leaves)
    if check != nodes:
        return False
    probe = secrets.randbelow(leaves)
    K = kernels.leaf_public(state.I, probe, state.seed, state.ots.p, state.ots.w)
    return nodes[leaves + probe] == _leaf_node(state.I, leaves + probe, K)


def state_tree(state: LmsPrivateState) -> list[bytes]:
    if state._tree is None:
        nodes = state.store.load_tree(state)
        if nodes is None or not _cached_tree_ok(state, nodes):
            nodes = _build_tree(state.I, state.seed, state.lms, state.ots)
            state.store.save_tree(state, nodes)
        state._tree = nodes
    return state._tree


def public_key(state: LmsPrivateState) -> LmsPublicKey:
    return LmsPublicKey(
        state.lms.type_code, state.ots.type_code, state.I, state_tree(state)[1]
    )


def lms_keygen(
    lms: LmsParams = LMS_SHA256_M32_H5,
    ots: LmotsParams = LMOTS_SHA256_N32_W8,
    randomness: Callable[[int], bytes] = secrets.token_bytes,
    *,
    I: Optional[bytes] = None,
    seed: Optional[bytes] = None,
    store: Optional[StateStore] = None,
) -> tuple[LmsPublicKey, LmsPrivateState]:
    """Create a fresh key at leaf 0 and persist it when a store is given.

    ``I`` and ``seed`` may be pinned to reproduce a known key.
    """
    if lms.h not in KEYGEN_HEIGHTS:
        raise UnsupportedParams(f"key generation supports heights {KEYGEN_HEIGHTS}, not {lms.h}")
    lms = lms_params(lms.type_code)
    ots = lmots_params(ots.type_code)
    I = randomness(16) if I is None else I
    seed = randomness(32) if seed is None else seed
    state = LmsPrivateState(I, seed, lms, ots, 0, store)
    if store is not None:
        state.commit(0)
    pub = public_key(state)
    return pub, state


def _ots_sign(state: LmsPrivateState, q: int, message: bytes) -> tuple[bytes, tuple]:
    ots = state.ots
    C = sha256(state.I + pack(">IHB", q, C_INDEX, 0xFF) + state.seed).digest()
    digits = _digits(ots, _message_hash(state.I, q, C, message))
    x = kernels.derive_x(state.I, q, state.seed, ots.p)
    ys = kernels.chain_many(state.I, q, x, [0] * ots.p, digits)
    return C, tuple(ys[N * i : N * (i + 1)] for i in range(ots.p))


def lms_sign(
    state: LmsPrivateState, message: bytes, store: Optional[StateStore] = None
) -> LmsSignature:
    """Sign with the next leaf; the advanced counter is durable before return."""
    if not state.lock.acquire(blocking=False):
        raise ConcurrentSignError("another signature is in progress on this key state")
    try:
        if store is not None:
            state.store = store
        q = state.q
        if q >= state.max_leaves:
            raise StateExhausted(
                f"{state.lms.name} key exhausted after {state.max_leaves} signatures"
            )
        nodes = state_tree(state)
        state.commit(q + 1)
        C, y = _ots_sign(state, q, message)
        r = state.max_leaves + q
        path = []
        for _ in range(state.lms.h):
            path.append(nodes[r ^ 1])
            r >>= 1
        return LmsSignature(q, state.ots.type_code, C, y, state.lms.type_code, tuple(path))
    finally:
        state.lock.release()


def candidate_root(pub: LmsPublicKey, message: bytes, sig: LmsSignature) -> Optional[bytes]:
    if sig.ots_type != pub.ots_type or sig.lms_type != pub.lms_type:
        return None
    ots = lmots_params(sig.ots_type)
    lms = lms_params(sig.lms_type)
    if not 0 <= sig.q < lms.max_leaves or len(sig.path) != lms.h:
        return None
    I, q = pub.I, sig.q
    digits = _digits(ots, _message_hash(I, q, sig.C, message))
    top = (1 << ots.w) - 1
    ys = kernels.chain_many(I, q, b"".join(sig.y), digits, [top] * ots.p)
    Kc = sha256(I + pack(">IH", q, D_PBLC) + ys).digest()
    r = lms.max_leaves + q
    tmp = _leaf_node(I, r, Kc)
    for node in sig.path:
        if r & 1:
            tmp = _inner_node(I, r >> 1, node, tmp)
        else:
            tmp = _inner_node(I, r >> 1, tmp, node)
        r >>= 1
    return tmp


def lms_verify(public_key, message: bytes, signature) -> bool:
    """Total verification: malformed keys or signatures yield False."""
    try:
        pub = public_key if isinstance(public_key, LmsPublicKey) else LmsPublicKey.from_bytes(bytes(public_key))
        sig = signature if isinstance(signature, LmsSignature) else LmsSignature.from_bytes(bytes(signature))
    except (ValueError, TypeError, UnsupportedParams):
        return False
    root = candidate_root(pub, bytes(message), sig)
    return root is not None and secrets.compare_digest(root, pub.root)
