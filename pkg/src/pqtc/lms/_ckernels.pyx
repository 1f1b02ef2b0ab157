# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled LM-OTS hash-chain kernels (OpenSSL SHA-256).

Drop-in replacement for ``_pykernels``; the GIL is released while hashing.
"""

from libc.string cimport memcpy
from libc.stdlib cimport malloc, free


cdef extern from "openssl/sha.h" nogil:
    ctypedef struct SHA256_CTX:
        pass
    int SHA256_Init(SHA256_CTX *c)
    int SHA256_Update(SHA256_CTX *c, const void *data, size_t len)
    int SHA256_Final(unsigned char *md, SHA256_CTX *c)


cdef inline void _sha256(const unsigned char *d, size_t n, unsigned char *md) noexcept nogil:
    # low-level API: the one-shot SHA256() re-fetches an EVP method per call
    cdef SHA256_CTX ctx
    SHA256_Init(&ctx)
    SHA256_Update(&ctx, d, n)
    SHA256_Final(md, &ctx)


cdef inline void _prefix(unsigned char *buf, const unsigned char *I, unsigned int q) noexcept nogil:
    memcpy(buf, I, 16)
    buf[16] = (q >> 24) & 0xFF
    buf[17] = (q >> 16) & 0xFF
    buf[18] = (q >> 8) & 0xFF
    buf[19] = q & 0xFF


cdef void _derive(const unsigned char *I, unsigned int q, const unsigned char *seed,
                  int p, unsigned char *out) noexcept nogil:
    cdef unsigned char buf[55]
    cdef int i
    _prefix(buf, I, q)
    buf[22] = 0xFF
    memcpy(buf + 23, seed, 32)
    for i in range(p):
        buf[20] = (i >> 8) & 0xFF
        buf[21] = i & 0xFF
        _sha256(buf, 55, out + 32 * i)


cdef void _chains(const unsigned char *I, unsigned int q, unsigned char *vals,
                  const int *starts, const int *ends, int p) noexcept nogil:
    cdef unsigned char buf[55]
    cdef int i, j
    _prefix(buf, I, q)
    for i in range(p):
        buf[20] = (i >> 8) & 0xFF
        buf[21] = i & 0xFF
        memcpy(buf + 23, vals + 32 * i, 32)
        for j in range(starts[i], ends[i]):
            buf[22] = j
            _sha256(buf, 55, buf + 23)
        memcpy(vals + 32 * i, buf + 23, 32)


def _check_I(bytes I):
    if len(I) != 16:
        raise ValueError("I must be 16 bytes")


def derive_x(bytes I, unsigned int q, bytes seed, int p):
    _check_I(I)
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    out = bytearray(32 * p)
    cdef unsigned char *o = out
    cdef const unsigned char *ci = I
    cdef const unsigned char *cs = seed
    with nogil:
        _derive(ci, q, cs, p, o)
    return bytes(out)


def chain_many(bytes I, unsigned int q, bytes values, starts, ends):
    _check_I(I)
    cdef int p = len(starts)
    if len(ends) != p or len(values) != 32 * p:
        raise ValueError("values, starts and ends disagree in length")
    cdef int *s = <int *> malloc(2 * p * sizeof(int))
    if s == NULL:
        raise MemoryError()
    cdef int *e = s + p
    cdef int i
    cdef unsigned char *buf
    cdef const unsigned char *ci
    try:
        for i in range(p):
            s[i] = starts[i]
            e[i] = ends[i]
            if s[i] < 0 or e[i] > 255 or s[i] > e[i]:
                raise ValueError("chain bounds outside 0..255")
        out = bytearray(values)
        buf = out
        ci = I
        with nogil:
            _chains(ci, q, buf, s, e, p)
        return bytes(out)
    finally:
        free(s)


def leaf_public(bytes I, unsigned int q, bytes seed, int p, int w):
    _check_I(I)
    if len(seed) != 32:
        raise ValueError("seed must be 32 bytes")
    cdef unsigned char *ys = <unsigned char *> malloc(32 * p + 2 * p * sizeof(int))
    if ys == NULL:
        raise MemoryError()
    cdef int *s = <int *> (ys + 32 * p)
    cdef int *e = s + p
    cdef int i
    cdef int top = (1 << w) - 1
    cdef unsigned char head[22]
    cdef unsigned char K[32]
    cdef SHA256_CTX ctx
    cdef const unsigned char *ci = I
    cdef const unsigned char *cs = seed
    try:
        for i in range(p):
            s[i] = 0
            e[i] = top
        with nogil:
            _derive(ci, q, cs, p, ys)
            _chains(ci, q, ys, s, e, p)
            _prefix(head, ci, q)
            head[20] = 0x80
            head[21] = 0x80
            SHA256_Init(&ctx)
            SHA256_Update(&ctx, head, 22)
            SHA256_Update(&ctx, ys, 32 * p)
            SHA256_Final(K, &ctx)
        return K[:32]
    finally:
        free(ys)
