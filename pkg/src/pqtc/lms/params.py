"""LMS / LM-OTS parameter registries (RFC 8554 type codes, SHA-256 / n=32)."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import UnsupportedParams

N = 32

D_PBLC = 0x8080
D_MESG = 0x8181
D_LEAF = 0x8282
D_INTR = 0x8383


@dataclass(frozen=True)
class LmotsParams:
    type_code: int
    n: int
    w: int
    p: int
    ls: int

    @property
    def name(self) -> str:
        return f"LMOTS_SHA256_N32_W{self.w}"

    @property
    def sig_len(self) -> int:
        return 4 + self.n * (self.p + 1)


@dataclass(frozen=True)
class LmsParams:
    type_code: int
    h: int
    m: int = N

    @property
    def name(self) -> str:
        return f"LMS_SHA256_M32_H{self.h}"

    @property
    def max_leaves(self) -> int:
        return 1 << self.h


LMOTS_TYPES: dict[int, LmotsParams] = {
    1: LmotsParams(1, N, 1, 265, 7),
    2: LmotsParams(2, N, 2, 133, 6),
    3: LmotsParams(3, N, 4, 67, 4),
    4: LmotsParams(4, N, 8, 34, 0),
}

LMS_TYPES: dict[int, LmsParams] = {
    5: LmsParams(5, 5),
    6: LmsParams(6, 10),
    7: LmsParams(7, 15),
    8: LmsParams(8, 20),
    9: LmsParams(9, 25),
}

# Heights a signer may generate keys for; larger trees verify but are
# impractical to build at desk scale.
KEYGEN_HEIGHTS = (5, 10)

LMOTS_SHA256_N32_W8 = LMOTS_TYPES[4]
LMS_SHA256_M32_H5 = LMS_TYPES[5]
LMS_SHA256_M32_H10 = LMS_TYPES[6]


def lmots_params(type_code: int) -> LmotsParams:
    try:
        return LMOTS_TYPES[type_code]
    except KeyError:
        raise UnsupportedParams(f"unknown LM-OTS type 0x{type_code:08x}") from None


def lms_params(type_code: int) -> LmsParams:
    try:
        return LMS_TYPES[type_code]
    except KeyError:
        raise UnsupportedParams(f"unknown LMS type 0x{type_code:08x}") from None


def lms_by_height(h: int) -> LmsParams:
    for p in LMS_TYPES.values():
        if p.h == h:
            return p
    raise UnsupportedParams(f"no LMS parameter set with height {h}")


def lmots_by_width(w: int) -> LmotsParams:
    for p in LMOTS_TYPES.values():
        if p.w == w:
            return p
    raise UnsupportedParams(f"no LM-OTS parameter set with w={w}")


def signature_length(lms: LmsParams, ots: LmotsParams) -> int:
    """u32 q || LM-OTS signature || u32 type || h path nodes."""
    return 4 + ots.sig_len + 4 + lms.h * lms.m


def public_key_length() -> int:
    return 4 + 4 + 16 + N
