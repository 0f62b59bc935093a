"""Append-only Merkle transparency log with dual integrity tracking.

Every accepted manifest becomes a length-prefixed record in an append-only
file.  Two structures are maintained over the records:

* a Merkle tree (leaf/interior hashes domain-separated) whose root commits
  to the whole history and supports O(log n) inclusion proofs, and
* a sequential hash chain, giving cheap forward integrity.

Appends keep only the O(log n) right-edge subtree roots ("peaks", one per
set bit of the entry count) in play, so each append costs O(log n) hash
operations rather than a full rebuild.  After every append a checkpoint line
``<tree_size> <root hex> <chain hex>`` is persisted; integrity checking
replays the records against those lines and reports the first divergent
index.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

from . import _kernels
from .errors import EncodingError, OutOfRange, StorageError
from .manifest import ManifestDigest

RECORDS_NAME = "log.records"
CHECKPOINTS_NAME = "log.checkpoints"

CHAIN_GENESIS = bytes(32)

_LEN = struct.Struct(">I")

#: Hard cap on one record's size; a length prefix above this is corruption.
MAX_RECORD_BYTES = 1 << 20


@dataclass(frozen=True)
class MerkleRoot:
    """Tree root together with the size it commits to."""

    value: bytes
    tree_size: int

    @property
    def hex(self) -> str:
        return self.value.hex()


@dataclass(frozen=True)
class LogEntry:
    """One appended record: digest provenance plus signing context."""

    index: int
    manifest_digest: ManifestDigest
    signature: bytes
    key_id: str
    appended_at: int

    def to_record(self) -> bytes:
        # Fixed field order and compact separators: these bytes are what the
        # leaf hash commits to, so the serialization must be stable.
        obj = {
            "index": self.index,
            "manifest_digest": self.manifest_digest.hex,
            "signature": self.signature.hex(),
            "key_id": self.key_id,
            "appended_at": self.appended_at,
        }
        return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    @classmethod
    def from_record(cls, data: bytes) -> "LogEntry":
        try:
            obj = json.loads(data.decode("utf-8"))
            return cls(
                index=int(obj["index"]),
                manifest_digest=ManifestDigest.from_hex(obj["manifest_digest"]),
                signature=bytes.fromhex(obj["signature"]),
                key_id=str(obj["key_id"]),
                appended_at=int(obj["appended_at"]),
            )
        except (ValueError, KeyError, UnicodeDecodeError, EncodingError) as exc:
            raise StorageError(f"unreadable log record: {exc}") from exc


@dataclass(frozen=True)
class MerkleProof:
    """Inclusion proof: sibling hashes bottom-up with their sides.

    Side 0 means the sibling is left of the running node, side 1 right.
    """

    leaf_index: int
    tree_size: int
    path: tuple[tuple[bytes, int], ...]


@dataclass(frozen=True)
class IntegrityReport:
    ok: bool
    tampered_at: Optional[int] = None
    detail: str = ""


def empty_root() -> MerkleRoot:
    return MerkleRoot(_kernels.sha256(b""), 0)


class TransparencyLog:
    """Single-writer log over one directory; reopening replays the files."""

    def __init__(self, directory: Union[str, Path]):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._records_path = self._dir / RECORDS_NAME
        self._checkpoints_path = self._dir / CHECKPOINTS_NAME
        self._leaf_hashes: list[bytes] = []
        # _offsets[i] is the file offset where record i starts; the final
        # element is the current end of file.
        self._offsets: list[int] = [0]
        self._peaks: list[bytes] = []
        self._peak_sizes: list[int] = []
        self._chain: bytes = CHAIN_GENESIS
        if self._records_path.exists():
            self._replay()
        elif self._checkpoints_path.exists():
            raise StorageError(f"{self._dir}: checkpoint file present without records file")
        try:
            self._records_fh = open(self._records_path, "ab")
            self._checkpoints_fh = open(self._checkpoints_path, "a", encoding="ascii")
        except OSError as exc:
            raise StorageError(f"cannot open log files in {self._dir}: {exc}") from exc

    # -- state ------------------------------------------------------------

    @property
    def directory(self) -> Path:
        return self._dir

    @property
    def size(self) -> int:
        return len(self._leaf_hashes)

    @property
    def storage_bytes(self) -> int:
        return self._offsets[-1]

    def current_root(self) -> MerkleRoot:
        if not self._peaks:
            return empty_root()
        root = self._peaks[-1]
        for peak in reversed(self._peaks[:-1]):
            root = _kernels.hash_interior(peak, root)
        return MerkleRoot(root, self.size)

    def chain_value(self) -> bytes:
        return self._chain

    def close(self) -> None:
        self._records_fh.close()
        self._checkpoints_fh.close()

    def __enter__(self) -> "TransparencyLog":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- writing ----------------------------------------------------------

    def append(
        self,
        manifest_digest: ManifestDigest,
        signature: bytes,
        key_id: str,
        appended_at: Optional[int] = None,
    ) -> tuple[int, MerkleRoot]:
        """Durably append one entry; returns its index and the new root."""
        if appended_at is None:
            appended_at = int(time.time() * 1000)
        index = self.size
        entry = LogEntry(
            index=index,
            manifest_digest=manifest_digest,
            signature=signature,
            key_id=key_id,
            appended_at=appended_at,
        )
        record = entry.to_record()
        if len(record) > MAX_RECORD_BYTES:
            # refuse to write what replay would refuse to read
            raise StorageError(
                f"record of {len(record)} bytes exceeds the {MAX_RECORD_BYTES} byte limit"
            )
        leaf = _kernels.hash_leaf(record)
        chain = _kernels.chain_update(self._chain, leaf)
        peaks, sizes = self._push_peak(leaf)
        root = peaks[-1]
        for peak in reversed(peaks[:-1]):
            root = _kernels.hash_interior(peak, root)
        merkle = MerkleRoot(root, index + 1)
        try:
            self._records_fh.write(_LEN.pack(len(record)) + record)
            self._records_fh.flush()
            self._checkpoints_fh.write(f"{merkle.tree_size} {merkle.hex} {chain.hex()}\n")
            self._checkpoints_fh.flush()
        except OSError as exc:
            raise StorageError(f"append to {self._dir} failed: {exc}") from exc
        # Commit in-memory state only after both files took the write.
        self._leaf_hashes.append(leaf)
        self._offsets.append(self._offsets[-1] + _LEN.size + len(record))
        self._peaks = peaks
        self._peak_sizes = sizes
        self._chain = chain
        return index, merkle

    def _push_peak(self, leaf: bytes) -> tuple[list[bytes], list[int]]:
        peaks = list(self._peaks)
        sizes = list(self._peak_sizes)
        peaks.append(leaf)
        sizes.append(1)
        while len(sizes) >= 2 and sizes[-1] == sizes[-2]:
            right = peaks.pop()
            left = peaks.pop()
            peaks.append(_kernels.hash_interior(left, right))
            sizes.append(sizes.pop() + sizes.pop())
        return peaks, sizes

    # -- reading ----------------------------------------------------------

    def leaf_hash(self, index: int) -> bytes:
        if not 0 <= index < self.size:
            raise OutOfRange(f"index {index} outside log of size {self.size}")
        return self._leaf_hashes[index]

    def entry(self, index: int) -> LogEntry:
        if not 0 <= index < self.size:
            raise OutOfRange(f"index {index} outside log of size {self.size}")
        try:
            with open(self._records_path, "rb") as fh:
                fh.seek(self._offsets[index])
                header = fh.read(_LEN.size)
                (length,) = _LEN.unpack(header)
                record = fh.read(length)
        except (OSError, struct.error) as exc:
            raise StorageError(f"cannot read record {index}: {exc}") from exc
        entry = LogEntry.from_record(record)
        if entry.index != index:
            raise StorageError(f"record at position {index} claims index {entry.index}")
        return entry

    def entries(self, start: int = 0, end: Optional[int] = None) -> Iterator[LogEntry]:
        end = self.size if end is None else end
        for index in range(start, end):
            yield self.entry(index)

    def root_at(self, tree_size: int) -> MerkleRoot:
        if not 0 <= tree_size <= self.size:
            raise OutOfRange(f"tree size {tree_size} outside log of size {self.size}")
        if tree_size == self.size:
            return self.current_root()
        if tree_size == 0:
            return empty_root()
        return MerkleRoot(_kernels.merkle_root(self._leaf_hashes[:tree_size]), tree_size)

    def prove_inclusion(self, index: int, tree_size: Optional[int] = None) -> MerkleProof:
        """Inclusion proof for entry ``index`` in the tree at ``tree_size``."""
        if tree_size is None:
            tree_size = self.size
        if not 0 < tree_size <= self.size:
            raise OutOfRange(f"tree size {tree_size} outside log of size {self.size}")
        if not 0 <= index < tree_size:
            raise OutOfRange(f"index {index} outside tree of size {tree_size}")
        path = _kernels.inclusion_path(self._leaf_hashes[:tree_size], index)
        return MerkleProof(leaf_index=index, tree_size=tree_size, path=tuple(path))

    def growth_series(self, sample_sizes: Optional[Sequence[int]] = None) -> list[tuple[int, int]]:
        """(entry count, cumulative record-file bytes) at each sampled size."""
        if sample_sizes is None:
            sample_sizes = [1 << k for k in range((self.size).bit_length())]
            if self.size and self.size not in sample_sizes:
                sample_sizes.append(self.size)
        series = []
        for n in sorted(set(sample_sizes)):
            if not 0 <= n <= self.size:
                raise OutOfRange(f"sample size {n} outside log of size {self.size}")
            series.append((n, self._offsets[n]))
        return series

    # -- consistency ------------------------------------------------------

    def _range_root(self, start: int, end: int) -> bytes:
        return _kernels.merkle_root(self._leaf_hashes[start:end])

    def _subproof(self, m: int, start: int, end: int, complete: bool) -> list[bytes]:
        n = end - start
        if m == n:
            return [] if complete else [self._range_root(start, end)]
        k = 1 << ((n - 1).bit_length() - 1)
        if m <= k:
            nodes = self._subproof(m, start, start + k, complete)
            nodes.append(self._range_root(start + k, end))
        else:
            nodes = self._subproof(m - k, start + k, end, False)
            nodes.append(self._range_root(start, start + k))
        return nodes

    def prove_consistency(self, old_size: int, new_size: int) -> tuple[bytes, ...]:
        """Proof that the tree at ``new_size`` extends the tree at ``old_size``."""
        if not 0 < old_size <= new_size <= self.size:
            raise OutOfRange(
                f"need 0 < old <= new <= {self.size}, got old={old_size} new={new_size}"
            )
        if old_size == new_size:
            return ()
        return tuple(self._subproof(old_size, 0, new_size, True))

    # -- replay -----------------------------------------------------------

    def _replay(self) -> None:
        records = list(_iter_records(self._records_path, strict=True))
        leaves = _kernels.hash_leaves(records)
        offsets = [0]
        for record in records:
            offsets.append(offsets[-1] + _LEN.size + len(record))
        chain = CHAIN_GENESIS
        peaks: list[bytes] = []
        sizes: list[int] = []
        for leaf in leaves:
            chain = _kernels.chain_update(chain, leaf)
            peaks.append(leaf)
            sizes.append(1)
            while len(sizes) >= 2 and sizes[-1] == sizes[-2]:
                right = peaks.pop()
                left = peaks.pop()
                peaks.append(_kernels.hash_interior(left, right))
                sizes.append(sizes.pop() + sizes.pop())
        self._leaf_hashes = leaves
        self._offsets = offsets
        self._peaks = peaks
        self._peak_sizes = sizes
        self._chain = chain
        checkpoints = _read_checkpoints(self._checkpoints_path, strict=True)
        if len(checkpoints) != len(leaves):
            raise StorageError(
                f"{self._dir}: {len(leaves)} records but {len(checkpoints)} checkpoints"
            )
        if leaves:
            size, root_hex, chain_hex = checkpoints[-1]
            current = self.current_root()
            if size != current.tree_size or root_hex != current.hex or chain_hex != chain.hex():
                raise StorageError(
                    f"{self._dir}: replayed state disagrees with final checkpoint; "
                    "run an integrity check"
                )


def verify_inclusion(leaf_hash: bytes, proof: MerkleProof, root: MerkleRoot) -> bool:
    """Accept iff the proof folds from the leaf hash to exactly this root."""
    if proof.tree_size != root.tree_size:
        return False
    if not 0 <= proof.leaf_index < proof.tree_size:
        return False
    if len(leaf_hash) != _kernels.HASH_SIZE:
        return False
    for sibling, side in proof.path:
        if len(sibling) != _kernels.HASH_SIZE or side not in (0, 1):
            return False
    return _kernels.fold_path(leaf_hash, list(proof.path)) == root.value


def verify_consistency(
    old_root: MerkleRoot,
    new_root: MerkleRoot,
    proof: Sequence[bytes],
) -> bool:
    """Accept iff ``new_root`` extends ``old_root`` per the supplied proof."""
    m, n = old_root.tree_size, new_root.tree_size
    if m == n:
        return not proof and old_root.value == new_root.value
    if not 0 < m < n:
        return False
    nodes = iter(proof)
    node, last = m - 1, n - 1
    while node % 2 == 1:
        node //= 2
        last //= 2
    try:
        if node:
            fr = sr = next(nodes)
        else:
            fr = sr = old_root.value
        while node:
            if node % 2 == 1:
                sibling = next(nodes)
                fr = _kernels.hash_interior(sibling, fr)
                sr = _kernels.hash_interior(sibling, sr)
            elif node < last:
                sr = _kernels.hash_interior(sr, next(nodes))
            node //= 2
            last //= 2
        while last:
            sr = _kernels.hash_interior(sr, next(nodes))
            last //= 2
    except StopIteration:
        return False
    except (TypeError, ValueError):
        # Malformed proof elements are rejections, not errors.
        return False
    if next(nodes, None) is not None:
        return False
    return fr == old_root.value and sr == new_root.value


def _iter_records(path: Path, strict: bool) -> Iterator[bytes]:
    """Yield raw records; in strict mode framing damage raises StorageError."""
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    pos = 0
    index = 0
    while pos < len(data):
        if pos + _LEN.size > len(data):
            if strict:
                raise StorageError(f"{path}: truncated length prefix at record {index}")
            raise _FramingError(index)
        (length,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        if length > MAX_RECORD_BYTES or pos + length > len(data):
            if strict:
                raise StorageError(f"{path}: truncated or oversized record {index}")
            raise _FramingError(index)
        yield data[pos : pos + length]
        pos += length
        index += 1


class _FramingError(Exception):
    def __init__(self, index: int):
        super().__init__(index)
        self.index = index


def _read_checkpoints(path: Path, strict: bool) -> list[tuple[int, str, str]]:
    try:
        text = path.read_text(encoding="ascii", errors="strict" if strict else "replace")
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    except UnicodeDecodeError as exc:
        raise StorageError(f"{path} is not ASCII: {exc}") from exc
    out: list[tuple[int, str, str]] = []
    for lineno, line in enumerate(text.splitlines()):
        parts = line.split()
        good = (
            len(parts) == 3
            and parts[0].isdigit()
            and len(parts[1]) == 64
            and len(parts[2]) == 64
            and _is_hex(parts[1])
            and _is_hex(parts[2])
            and int(parts[0]) == lineno + 1
        )
        if not good:
            if strict:
                raise StorageError(f"{path}: malformed checkpoint line {lineno}")
            raise _FramingError(lineno)
        out.append((int(parts[0]), parts[1], parts[2]))
    return out


def _is_hex(text: str) -> bool:
    try:
        bytes.fromhex(text)
        return True
    except ValueError:
        return False


def check_integrity(directory: Union[str, Path]) -> IntegrityReport:
    """Replay a log directory and report the first index that fails to verify.

    Recomputes every leaf hash, every chain value, and every per-append root
    from the raw records and compares them with the stored checkpoint lines.
    Any single-byte change to either file (including truncation) surfaces as
    a non-ok report.
    """
    directory = Path(directory)
    records_path = directory / RECORDS_NAME
    checkpoints_path = directory / CHECKPOINTS_NAME
    if not records_path.exists():
        return IntegrityReport(False, None, "records file missing")
    if not checkpoints_path.exists():
        return IntegrityReport(False, None, "checkpoint file missing")
    records: list[bytes] = []
    try:
        for record in _iter_records(records_path, strict=False):
            records.append(record)
    except _FramingError as exc:
        return IntegrityReport(False, exc.index, "record framing damaged")
    except StorageError as exc:
        return IntegrityReport(False, None, str(exc))
    try:
        checkpoints = _read_checkpoints(checkpoints_path, strict=False)
    except _FramingError as exc:
        return IntegrityReport(False, exc.index, "checkpoint line malformed")
    except StorageError as exc:
        return IntegrityReport(False, None, str(exc))
    if len(checkpoints) != len(records):
        return IntegrityReport(
            False,
            min(len(checkpoints), len(records)),
            f"{len(records)} records but {len(checkpoints)} checkpoints",
        )
    leaves = _kernels.hash_leaves(records)
    roots = [bytes.fromhex(root_hex) for _, root_hex, _ in checkpoints]
    chains = [bytes.fromhex(chain_hex) for _, _, chain_hex in checkpoints]
    bad = _kernels.verify_checkpoints(leaves, roots, chains, CHAIN_GENESIS)
    if bad >= 0:
        return IntegrityReport(False, bad, "stored root or chain value diverges from replay")
    return IntegrityReport(True, None, f"{len(records)} entries verified")
