"""Hash kernel backend selection.

Imports the compiled OpenSSL-backed kernels when the extension was built and
falls back to the pure-Python reference otherwise.  Set MANIFESTD_PURE_PYTHON
to any non-empty value to force the fallback (useful for benchmarking and for
diffing the two backends).
"""

import os

from . import _ref

if os.environ.get("MANIFESTD_PURE_PYTHON"):
    _impl = _ref
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _ref

BACKEND = _impl.BACKEND
LEAF_PREFIX = _impl.LEAF_PREFIX
INTERIOR_PREFIX = _impl.INTERIOR_PREFIX
HASH_SIZE = _impl.HASH_SIZE

sha256 = _impl.sha256
hash_leaf = _impl.hash_leaf
hash_leaves = _impl.hash_leaves
hash_interior = _impl.hash_interior
chain_update = _impl.chain_update
merkle_root = _impl.merkle_root
inclusion_path = _impl.inclusion_path
fold_path = _impl.fold_path
verify_checkpoints = _impl.verify_checkpoints
byte_histogram = _impl.byte_histogram
ops = _impl.ops
reset_ops = _impl.reset_ops

__all__ = [
    "BACKEND",
    "LEAF_PREFIX",
    "INTERIOR_PREFIX",
    "HASH_SIZE",
    "sha256",
    "hash_leaf",
    "hash_leaves",
    "hash_interior",
    "chain_update",
    "merkle_root",
    "inclusion_path",
    "fold_path",
    "verify_checkpoints",
    "byte_histogram",
    "ops",
    "reset_ops",
]
