"""Pure-Python hash kernels.

Reference implementation of the tree/chain primitives.  The compiled backend
(`manifestd._kernels._core`) must be observationally identical; tests compare
the two directly.  All digests are SHA-256.  Leaf and interior hashes are
domain-separated with one-byte prefixes so a leaf can never be reinterpreted
as an interior node.
"""

from __future__ import annotations

import hashlib

BACKEND = "pure-python"

LEAF_PREFIX = b"\x00"
INTERIOR_PREFIX = b"\x01"

HASH_SIZE = 32

_ops = 0


def ops() -> int:
    """Cumulative count of tree-hash operations (leaf, interior, chain)."""
    return _ops


def reset_ops() -> None:
    global _ops
    _ops = 0


def sha256(data: bytes) -> bytes:
    """Plain SHA-256; not counted as a tree operation."""
    return hashlib.sha256(data).digest()


def hash_leaf(data: bytes) -> bytes:
    global _ops
    _ops += 1
    return hashlib.sha256(LEAF_PREFIX + data).digest()


def hash_leaves(records: list[bytes]) -> list[bytes]:
    return [hash_leaf(r) for r in records]


def hash_interior(left: bytes, right: bytes) -> bytes:
    if len(left) != HASH_SIZE or len(right) != HASH_SIZE:
        raise ValueError("interior children must be 32-byte digests")
    global _ops
    _ops += 1
    return hashlib.sha256(INTERIOR_PREFIX + left + right).digest()


def chain_update(prev: bytes, leaf_hash: bytes) -> bytes:
    if len(prev) != HASH_SIZE or len(leaf_hash) != HASH_SIZE:
        raise ValueError("chain inputs must be 32-byte digests")
    global _ops
    _ops += 1
    return hashlib.sha256(prev + leaf_hash).digest()


def _check_level(leaf_hashes: list[bytes]) -> None:
    for h in leaf_hashes:
        if len(h) != HASH_SIZE:
            raise ValueError("leaf hashes must be 32-byte digests")


def merkle_root(leaf_hashes: list[bytes]) -> bytes:
    """Root over already-hashed leaves.

    Unpaired rightmost nodes promote to the next level unchanged, which gives
    the same root as splitting at the largest power of two below n.
    """
    _check_level(leaf_hashes)
    if not leaf_hashes:
        return hashlib.sha256(b"").digest()
    level = list(leaf_hashes)
    while len(level) > 1:
        nxt = [hash_interior(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def inclusion_path(leaf_hashes: list[bytes], index: int) -> list[tuple[bytes, int]]:
    """Sibling path for one leaf.

    Each element is ``(sibling_hash, side)`` where side 0 means the sibling
    sits to the left of the running node and side 1 to the right.  Levels
    where the node is promoted without a partner contribute no element.
    """
    _check_level(leaf_hashes)
    n = len(leaf_hashes)
    if not 0 <= index < n:
        raise IndexError(f"leaf index {index} out of range for {n} leaves")
    path: list[tuple[bytes, int]] = []
    level = list(leaf_hashes)
    pos = index
    while len(level) > 1:
        sib = pos ^ 1
        if sib < len(level):
            path.append((level[sib], 0 if sib < pos else 1))
        nxt = [hash_interior(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
        pos //= 2
    return path


def fold_path(leaf_hash: bytes, path: list[tuple[bytes, int]]) -> bytes:
    """Recompute the root implied by a leaf hash and its sibling path."""
    node = leaf_hash
    for sibling, side in path:
        node = hash_interior(sibling, node) if side == 0 else hash_interior(node, sibling)
    return node


def verify_checkpoints(
    leaves: list[bytes],
    roots: list[bytes],
    chains: list[bytes],
    genesis: bytes,
) -> int:
    """Replay a log from its leaf hashes against stored per-append state.

    ``roots[i]`` and ``chains[i]`` are the expected tree root and chain value
    after appending leaf i.  Returns the first index where either disagrees,
    or -1 when every checkpoint matches.  Roots are recomputed incrementally
    from the peak set (one subtree root per set bit of the entry count), so
    the whole replay costs O(n log n) hashes.
    """
    if not len(leaves) == len(roots) == len(chains):
        raise ValueError("leaves, roots and chains must have equal length")
    chain = genesis
    peaks: list[bytes] = []
    sizes: list[int] = []
    for i, leaf in enumerate(leaves):
        chain = chain_update(chain, leaf)
        peaks.append(leaf)
        sizes.append(1)
        while len(sizes) >= 2 and sizes[-1] == sizes[-2]:
            right = peaks.pop()
            merged = hash_interior(peaks.pop(), right)
            peaks.append(merged)
            sizes.append(sizes.pop() + sizes.pop())
        root = peaks[-1]
        for p in reversed(peaks[:-1]):
            root = hash_interior(p, root)
        if chain != chains[i] or root != roots[i]:
            return i
    return -1


def byte_histogram(data: bytes) -> list[int]:
    counts = [0] * 256
    for b in data:
        counts[b] += 1
    return counts
