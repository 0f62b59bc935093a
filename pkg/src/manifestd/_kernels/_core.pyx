# cython: language_level=3
# cython: boundscheck=False, wraparound=False
"""Compiled hash kernels backed by OpenSSL's EVP digest interface.

Observationally identical to ``manifestd._kernels._ref``; that module is the
reference, this one exists for throughput on tree-heavy paths (batch appends,
inclusion paths, integrity replays).
"""

from cpython.bytes cimport PyBytes_FromStringAndSize
from libc.stdlib cimport free, malloc
from libc.string cimport memcmp, memcpy

cdef extern from "openssl/evp.h":
    ctypedef struct EVP_MD
    ctypedef struct EVP_MD_CTX
    ctypedef struct ENGINE
    const EVP_MD *EVP_sha256()
    EVP_MD_CTX *EVP_MD_CTX_new()
    void EVP_MD_CTX_free(EVP_MD_CTX *ctx)
    int EVP_DigestInit_ex(EVP_MD_CTX *ctx, const EVP_MD *type, ENGINE *impl)
    int EVP_DigestUpdate(EVP_MD_CTX *ctx, const void *d, size_t cnt)
    int EVP_DigestFinal_ex(EVP_MD_CTX *ctx, unsigned char *md, unsigned int *s)

BACKEND = "cython-openssl"

LEAF_PREFIX = b"\x00"
INTERIOR_PREFIX = b"\x01"

HASH_SIZE = 32

cdef const EVP_MD *_MD = EVP_sha256()
# One context reused for every digest; all entry points hold the GIL and
# never call back into Python mid-hash, so reuse is safe.
cdef EVP_MD_CTX *_CTX = EVP_MD_CTX_new()

cdef unsigned long long _ops = 0


def ops():
    """Cumulative count of tree-hash operations (leaf, interior, chain)."""
    return _ops


def reset_ops():
    global _ops
    _ops = 0


cdef inline int _sha1buf(const unsigned char *buf, size_t n, unsigned char *out) except -1:
    cdef unsigned int outn = 0
    if EVP_DigestInit_ex(_CTX, _MD, NULL) != 1:
        raise RuntimeError("EVP digest init failed")
    if n and EVP_DigestUpdate(_CTX, buf, n) != 1:
        raise RuntimeError("EVP digest update failed")
    if EVP_DigestFinal_ex(_CTX, out, &outn) != 1 or outn != 32:
        raise RuntimeError("EVP digest final failed")
    return 0


cdef inline int _sha_prefixed(unsigned char prefix, const unsigned char *data,
                              size_t n, unsigned char *out) except -1:
    cdef unsigned int outn = 0
    if EVP_DigestInit_ex(_CTX, _MD, NULL) != 1:
        raise RuntimeError("EVP digest init failed")
    if EVP_DigestUpdate(_CTX, &prefix, 1) != 1:
        raise RuntimeError("EVP digest update failed")
    if n and EVP_DigestUpdate(_CTX, data, n) != 1:
        raise RuntimeError("EVP digest update failed")
    if EVP_DigestFinal_ex(_CTX, out, &outn) != 1 or outn != 32:
        raise RuntimeError("EVP digest final failed")
    return 0


cdef inline int _interior(const unsigned char *left, const unsigned char *right,
                          unsigned char *out) except -1:
    cdef unsigned char buf[65]
    buf[0] = 1
    memcpy(buf + 1, left, 32)
    memcpy(buf + 33, right, 32)
    return _sha1buf(buf, 65, out)


def sha256(bytes data not None):
    """Plain SHA-256; not counted as a tree operation."""
    cdef unsigned char out[32]
    cdef const unsigned char *p = data
    _sha1buf(p, len(data), out)
    return PyBytes_FromStringAndSize(<char *> out, 32)


def hash_leaf(bytes data not None):
    global _ops
    cdef unsigned char out[32]
    cdef const unsigned char *p = data
    _sha_prefixed(0, p, len(data), out)
    _ops += 1
    return PyBytes_FromStringAndSize(<char *> out, 32)


def hash_leaves(list records not None):
    global _ops
    cdef unsigned char out[32]
    cdef const unsigned char *p
    cdef bytes rec
    cdef list result = []
    for rec in records:
        p = rec
        _sha_prefixed(0, p, len(rec), out)
        _ops += 1
        result.append(PyBytes_FromStringAndSize(<char *> out, 32))
    return result


def hash_interior(bytes left not None, bytes right not None):
    global _ops
    cdef unsigned char out[32]
    cdef const unsigned char *lp
    cdef const unsigned char *rp
    if len(left) != 32 or len(right) != 32:
        raise ValueError("interior children must be 32-byte digests")
    lp = left
    rp = right
    _interior(lp, rp, out)
    _ops += 1
    return PyBytes_FromStringAndSize(<char *> out, 32)


def chain_update(bytes prev not None, bytes leaf_hash not None):
    global _ops
    cdef unsigned char buf[64]
    cdef unsigned char out[32]
    cdef const unsigned char *pp
    cdef const unsigned char *lp
    if len(prev) != 32 or len(leaf_hash) != 32:
        raise ValueError("chain inputs must be 32-byte digests")
    pp = prev
    lp = leaf_hash
    memcpy(buf, pp, 32)
    memcpy(buf + 32, lp, 32)
    _sha1buf(buf, 64, out)
    _ops += 1
    return PyBytes_FromStringAndSize(<char *> out, 32)


cdef unsigned char *_copy_level(list leaf_hashes, Py_ssize_t n) except NULL:
    cdef unsigned char *buf = <unsigned char *> malloc(32 * n if n else 32)
    cdef Py_ssize_t i
    cdef bytes h
    cdef const unsigned char *p
    if buf == NULL:
        raise MemoryError()
    for i in range(n):
        h = leaf_hashes[i]
        if len(h) != 32:
            free(buf)
            raise ValueError("leaf hashes must be 32-byte digests")
        p = h
        memcpy(buf + 32 * i, p, 32)
    return buf


def merkle_root(list leaf_hashes not None):
    """Root over already-hashed leaves; unpaired right nodes promote unchanged."""
    global _ops
    cdef Py_ssize_t n = len(leaf_hashes)
    cdef unsigned char out[32]
    cdef unsigned char *buf
    cdef Py_ssize_t m, i, j
    if n == 0:
        _sha1buf(NULL, 0, out)
        return PyBytes_FromStringAndSize(<char *> out, 32)
    buf = _copy_level(leaf_hashes, n)
    m = n
    try:
        while m > 1:
            j = 0
            i = 0
            while i + 1 < m:
                # _interior copies both children out before writing, so the
                # in-place overwrite of slot j is safe even when j == i.
                _interior(buf + 32 * i, buf + 32 * (i + 1), buf + 32 * j)
                _ops += 1
                i += 2
                j += 1
            if m & 1:
                memcpy(buf + 32 * j, buf + 32 * (m - 1), 32)
                j += 1
            m = j
        return PyBytes_FromStringAndSize(<char *> buf, 32)
    finally:
        free(buf)


def inclusion_path(list leaf_hashes not None, Py_ssize_t index):
    """Sibling path for one leaf; see the reference backend for the format."""
    global _ops
    cdef Py_ssize_t n = len(leaf_hashes)
    cdef unsigned char *buf
    cdef Py_ssize_t m, i, j, pos, sib
    cdef list path = []
    if not 0 <= index < n:
        raise IndexError(f"leaf index {index} out of range for {n} leaves")
    buf = _copy_level(leaf_hashes, n)
    m = n
    pos = index
    try:
        while m > 1:
            sib = pos ^ 1
            if sib < m:
                path.append((
                    PyBytes_FromStringAndSize(<char *> (buf + 32 * sib), 32),
                    0 if sib < pos else 1,
                ))
            j = 0
            i = 0
            while i + 1 < m:
                _interior(buf + 32 * i, buf + 32 * (i + 1), buf + 32 * j)
                _ops += 1
                i += 2
                j += 1
            if m & 1:
                memcpy(buf + 32 * j, buf + 32 * (m - 1), 32)
                j += 1
            m = j
            pos >>= 1
        return path
    finally:
        free(buf)


def fold_path(bytes leaf_hash not None, list path not None):
    """Recompute the root implied by a leaf hash and its sibling path."""
    global _ops
    cdef unsigned char node[32]
    cdef unsigned char out[32]
    cdef const unsigned char *p
    cdef const unsigned char *sp
    cdef bytes sibling
    cdef int side
    if len(leaf_hash) != 32:
        raise ValueError("leaf hash must be a 32-byte digest")
    p = leaf_hash
    memcpy(node, p, 32)
    for sibling, side in path:
        if len(sibling) != 32:
            raise ValueError("path siblings must be 32-byte digests")
        sp = sibling
        if side == 0:
            _interior(sp, node, out)
        else:
            _interior(node, sp, out)
        _ops += 1
        memcpy(node, out, 32)
    return PyBytes_FromStringAndSize(<char *> node, 32)


def verify_checkpoints(list leaves not None, list roots not None,
                       list chains not None, bytes genesis not None):
    """Replay leaf hashes against stored per-append roots and chain values.

    Returns the first index whose stored root or chain value disagrees with
    the recomputation, or -1 when all match.  Mirrors the reference backend.
    """
    global _ops
    cdef Py_ssize_t n = len(leaves)
    cdef unsigned char chain[32]
    cdef unsigned char buf64[64]
    cdef unsigned char root[32]
    cdef unsigned char *peaks
    cdef Py_ssize_t *sizes
    cdef Py_ssize_t npeaks = 0, i, k
    cdef bytes leaf, want_root, want_chain
    cdef const unsigned char *p
    if len(roots) != n or len(chains) != n:
        raise ValueError("leaves, roots and chains must have equal length")
    if len(genesis) != 32:
        raise ValueError("genesis must be a 32-byte value")
    p = genesis
    memcpy(chain, p, 32)
    # At most 64 peaks for any feasible entry count.
    peaks = <unsigned char *> malloc(32 * 64)
    sizes = <Py_ssize_t *> malloc(sizeof(Py_ssize_t) * 64)
    if peaks == NULL or sizes == NULL:
        free(peaks)
        free(sizes)
        raise MemoryError()
    try:
        for i in range(n):
            leaf = leaves[i]
            want_root = roots[i]
            want_chain = chains[i]
            if len(leaf) != 32 or len(want_root) != 32 or len(want_chain) != 32:
                raise ValueError("digests must be 32 bytes")
            p = leaf
            memcpy(buf64, chain, 32)
            memcpy(buf64 + 32, p, 32)
            _sha1buf(buf64, 64, chain)
            _ops += 1
            memcpy(peaks + 32 * npeaks, p, 32)
            sizes[npeaks] = 1
            npeaks += 1
            while npeaks >= 2 and sizes[npeaks - 1] == sizes[npeaks - 2]:
                _interior(peaks + 32 * (npeaks - 2), peaks + 32 * (npeaks - 1),
                          peaks + 32 * (npeaks - 2))
                _ops += 1
                sizes[npeaks - 2] += sizes[npeaks - 1]
                npeaks -= 1
            memcpy(root, peaks + 32 * (npeaks - 1), 32)
            for k in range(npeaks - 2, -1, -1):
                _interior(peaks + 32 * k, root, root)
                _ops += 1
            p = want_chain
            if memcmp(chain, p, 32) != 0:
                return i
            p = want_root
            if memcmp(root, p, 32) != 0:
                return i
        return -1
    finally:
        free(peaks)
        free(sizes)


def byte_histogram(bytes data not None):
    cdef Py_ssize_t counts[256]
    cdef Py_ssize_t i, n = len(data)
    cdef const unsigned char *p = data
    for i in range(256):
        counts[i] = 0
    for i in range(n):
        counts[p[i]] += 1
    return [counts[i] for i in range(256)]
