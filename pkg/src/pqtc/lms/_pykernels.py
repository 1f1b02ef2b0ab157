"""Pure-Python LM-OTS hash-chain kernels.

Same signatures as the compiled ``_ckernels`` module; used when the
extension is not built.
"""

from hashlib import sha256
from struct import pack

D_PBLC = b"\x80\x80"


def derive_x(I: bytes, q: int, seed: bytes, p: int) -> bytes:
    prefix = I + pack(">I", q)
    return b"".join(
        sha256(prefix + pack(">HB", i, 0xFF) + seed).digest() for i in range(p)
    )


def chain_many(I: bytes, q: int, values: bytes, starts, ends) -> bytes:
    """Advance chain ``i`` of ``values`` from step ``starts[i]`` to ``ends[i]``."""
    prefix = I + pack(">I", q)
    out = []
    for i, (lo, hi) in enumerate(zip(starts, ends)):
        tmp = values[32 * i : 32 * i + 32]
        head = prefix + pack(">H", i)
        for j in range(lo, hi):
            tmp = sha256(head + bytes((j,)) + tmp).digest()
        out.append(tmp)
    return b"".join(out)


def leaf_public(I: bytes, q: int, seed: bytes, p: int, w: int) -> bytes:
    """LM-OTS public key K for leaf ``q``."""
    top = (1 << w) - 1
    ys = chain_many(I, q, derive_x(I, q, seed, p), [0] * p, [top] * p)
    return sha256(I + pack(">I", q) + D_PBLC + ys).digest()
