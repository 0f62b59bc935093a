"""Software keystore: key generation, signing, verification, revocation, rotation.

Private keys live only inside :class:`Keystore` instances (and, when saved,
in the keystore file, optionally passphrase-encrypted).  No public method
returns private key material.  Signatures are made over 32-byte manifest
digests.  Verification is fail-closed: unknown key, revoked key, and bad
signature are all rejections, each with a distinct reason.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec, ed25519

from .errors import (
    ConfigError,
    DomainError,
    DuplicateKeyId,
    KeyRevoked,
    NoUsableKey,
    StorageError,
    UnknownKey,
)
from .manifest import Manifest, ManifestDigest, digest as manifest_digest

DEFAULT_SCHEME = "ecdsa-p256"


class RejectReason(enum.Enum):
    SIGNATURE_INVALID = "signature-invalid"
    KEY_REVOKED = "key-revoked"
    UNKNOWN_KEY = "unknown-key"


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    reason: Optional[RejectReason] = None


ACCEPT = VerifyResult(True, None)


@dataclass(frozen=True)
class KeyHandle:
    """Public view of one key; carries no private material."""

    key_id: str
    scheme: str
    public_key: bytes
    created_at: int
    revoked: bool

    @property
    def public_key_hex(self) -> str:
        return self.public_key.hex()


@dataclass(frozen=True)
class SignedManifest:
    """A manifest bound to its digest and a signature that verified at signing time."""

    manifest: Manifest
    digest: ManifestDigest
    signature: bytes
    key_id: str


@dataclass(frozen=True)
class RotationPolicy:
    """Per-key selection weights: uniform base 1/K plus zero-sum offsets."""

    key_ids: tuple[str, ...]
    offsets: tuple[float, ...]

    def __post_init__(self) -> None:
        key_ids = tuple(self.key_ids)
        offsets = tuple(float(o) for o in self.offsets)
        object.__setattr__(self, "key_ids", key_ids)
        object.__setattr__(self, "offsets", offsets)
        if not key_ids:
            raise ConfigError("rotation policy needs at least one key")
        if len(set(key_ids)) != len(key_ids):
            raise ConfigError("rotation policy key ids must be unique")
        if len(offsets) != len(key_ids):
            raise ConfigError("one offset per key id required")
        if abs(sum(offsets)) > 1e-9:
            raise ConfigError("offsets must sum to zero")
        for w in self.weights():
            if not 0.0 <= w <= 1.0:
                raise ConfigError(f"selection weight {w} outside [0, 1]")

    @classmethod
    def uniform(cls, key_ids: Sequence[str]) -> "RotationPolicy":
        ids = tuple(key_ids)
        return cls(key_ids=ids, offsets=(0.0,) * len(ids))

    @classmethod
    def weighted(cls, weights: dict[str, float]) -> "RotationPolicy":
        ids = tuple(weights)
        k = len(ids)
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ConfigError("weights must sum to 1")
        return cls(key_ids=ids, offsets=tuple(weights[i] - 1.0 / k for i in ids))

    def weights(self) -> tuple[float, ...]:
        base = 1.0 / len(self.key_ids)
        return tuple(base + o for o in self.offsets)


class _Ecdsa:
    name = "ecdsa-p256"

    @staticmethod
    def generate():
        return ec.generate_private_key(ec.SECP256R1())

    @staticmethod
    def sign(private_key, data: bytes) -> bytes:
        return private_key.sign(data, ec.ECDSA(hashes.SHA256()))

    @staticmethod
    def verify(public_key, signature: bytes, data: bytes) -> None:
        public_key.verify(signature, data, ec.ECDSA(hashes.SHA256()))


class _Ed25519:
    name = "ed25519"

    @staticmethod
    def generate():
        return ed25519.Ed25519PrivateKey.generate()

    @staticmethod
    def sign(private_key, data: bytes) -> bytes:
        return private_key.sign(data)

    @staticmethod
    def verify(public_key, signature: bytes, data: bytes) -> None:
        public_key.verify(signature, data)


_SCHEMES = {cls.name: cls for cls in (_Ecdsa, _Ed25519)}


@dataclass
class _KeyRecord:
    key_id: str
    private_key: object
    public_bytes: bytes
    created_at: int
    revoked: bool


def _public_bytes(private_key) -> bytes:
    return private_key.public_key().public_bytes(
        serialization.Encoding.DER,
        serialization.PublicFormat.SubjectPublicKeyInfo,
    )


class Keystore:
    """Holds signing keys for one scheme; revocation is permanent."""

    def __init__(self, scheme: str = DEFAULT_SCHEME):
        if scheme not in _SCHEMES:
            raise ConfigError(f"unknown signature scheme {scheme!r}; known: {sorted(_SCHEMES)}")
        self._scheme = _SCHEMES[scheme]
        self._keys: dict[str, _KeyRecord] = {}

    @property
    def scheme(self) -> str:
        return self._scheme.name

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key_id: str) -> bool:
        return key_id in self._keys

    def keygen(self, key_id: str, created_at: int = 0) -> KeyHandle:
        if not key_id:
            raise ConfigError("key_id must be non-empty")
        if key_id in self._keys:
            raise DuplicateKeyId(f"key {key_id!r} already exists")
        private_key = self._scheme.generate()
        record = _KeyRecord(
            key_id=key_id,
            private_key=private_key,
            public_bytes=_public_bytes(private_key),
            created_at=created_at,
            revoked=False,
        )
        self._keys[key_id] = record
        return self._handle(record)

    def _record(self, key_id: str) -> _KeyRecord:
        try:
            return self._keys[key_id]
        except KeyError:
            raise UnknownKey(f"no key {key_id!r} in keystore") from None

    def _handle(self, record: _KeyRecord) -> KeyHandle:
        return KeyHandle(
            key_id=record.key_id,
            scheme=self._scheme.name,
            public_key=record.public_bytes,
            created_at=record.created_at,
            revoked=record.revoked,
        )

    def handle(self, key_id: str) -> KeyHandle:
        return self._handle(self._record(key_id))

    def list_keys(self) -> list[KeyHandle]:
        return [self._handle(r) for r in self._keys.values()]

    def revoke(self, key_id: str) -> None:
        self._record(key_id).revoked = True

    def sign(self, dig: ManifestDigest, key_id: str) -> bytes:
        record = self._record(key_id)
        if record.revoked:
            raise KeyRevoked(f"key {key_id!r} is revoked")
        return self._scheme.sign(record.private_key, dig.value)

    def sign_manifest(self, manifest: Manifest, key_id: str) -> SignedManifest:
        dig = manifest_digest(manifest)
        return SignedManifest(
            manifest=manifest,
            digest=dig,
            signature=self.sign(dig, key_id),
            key_id=key_id,
        )

    def verify(self, dig: ManifestDigest, signature: bytes, key_id: str) -> VerifyResult:
        """Fail-closed: every path that is not a clean match is a rejection."""
        record = self._keys.get(key_id)
        if record is None:
            return VerifyResult(False, RejectReason.UNKNOWN_KEY)
        if record.revoked:
            return VerifyResult(False, RejectReason.KEY_REVOKED)
        public_key = record.private_key.public_key()
        try:
            self._scheme.verify(public_key, signature, dig.value)
        except InvalidSignature:
            return VerifyResult(False, RejectReason.SIGNATURE_INVALID)
        except Exception:
            # Garbage signature encodings land here; still a plain rejection.
            return VerifyResult(False, RejectReason.SIGNATURE_INVALID)
        return ACCEPT

    def select_key(self, policy: RotationPolicy, rng) -> str:
        """Draw one unrevoked key id; weights renormalized over usable keys."""
        usable: list[tuple[str, float]] = []
        for key_id, weight in zip(policy.key_ids, policy.weights()):
            record = self._keys.get(key_id)
            if record is not None and not record.revoked:
                usable.append((key_id, weight))
        if not usable:
            raise NoUsableKey("rotation policy has no unrevoked key in this keystore")
        total = sum(w for _, w in usable)
        if total <= 0:
            raise NoUsableKey("usable keys all have zero selection weight")
        r = rng.random() * total
        acc = 0.0
        for key_id, weight in usable:
            acc += weight
            if r < acc:
                return key_id
        return usable[-1][0]

    def save(self, path: Union[str, Path], passphrase: Optional[str] = None) -> None:
        if passphrase:
            encryption = serialization.BestAvailableEncryption(passphrase.encode("utf-8"))
        else:
            encryption = serialization.NoEncryption()
        keys = []
        for record in self._keys.values():
            pem = record.private_key.private_bytes(
                serialization.Encoding.PEM,
                serialization.PrivateFormat.PKCS8,
                encryption,
            )
            keys.append(
                {
                    "key_id": record.key_id,
                    "public_key": record.public_bytes.hex(),
                    "created_at": record.created_at,
                    "revoked": record.revoked,
                    "private_pem": pem.decode("ascii"),
                }
            )
        payload = json.dumps({"version": 1, "scheme": self._scheme.name, "keys": keys}, indent=2)
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        try:
            fd = os.open(tmp, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
            os.replace(tmp, path)
        except OSError as exc:
            raise StorageError(f"cannot write keystore {path}: {exc}") from exc

    @classmethod
    def load(cls, path: Union[str, Path], passphrase: Optional[str] = None) -> "Keystore":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise StorageError(f"cannot read keystore {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise StorageError(f"keystore {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict) or obj.get("version") != 1:
            raise StorageError(f"keystore {path} has unsupported format")
        store = cls(scheme=obj.get("scheme", DEFAULT_SCHEME))
        password = passphrase.encode("utf-8") if passphrase else None
        for raw in obj.get("keys", []):
            try:
                private_key = serialization.load_pem_private_key(
                    raw["private_pem"].encode("ascii"), password=password
                )
            except (TypeError, ValueError) as exc:
                raise StorageError(
                    f"keystore {path}: cannot load key {raw.get('key_id')!r}: {exc}"
                ) from exc
            record = _KeyRecord(
                key_id=raw["key_id"],
                private_key=private_key,
                public_bytes=_public_bytes(private_key),
                created_at=int(raw.get("created_at", 0)),
                revoked=bool(raw.get("revoked", False)),
            )
            if record.key_id in store._keys:
                raise StorageError(f"keystore {path}: duplicate key id {record.key_id!r}")
            store._keys[record.key_id] = record
        return store


def rotation_frequencies(selections: Sequence[str], key_ids: Sequence[str]) -> dict[str, float]:
    """Empirical selection frequency per key id."""
    if not selections:
        raise DomainError("no selections to summarize")
    counts = {key_id: 0 for key_id in key_ids}
    for choice in selections:
        if choice not in counts:
            raise DomainError(f"selection {choice!r} not in key id list")
        counts[choice] += 1
    total = len(selections)
    return {key_id: counts[key_id] / total for key_id in key_ids}
