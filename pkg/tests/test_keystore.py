"""Keystore, signature, and rotation tests."""

import numpy as np
import pytest

from manifestd.errors import DuplicateKeyId, KeyRevoked, NoUsableKey, StorageError, UnknownKey
from manifestd.keystore import (
    Keystore,
    RejectReason,
    RotationPolicy,
    rotation_frequencies,
)
from manifestd.manifest import Manifest, digest

SCHEMES = ["ecdsa-p256", "ed25519"]


def make_digest(tag="hello"):
    m = Manifest({"query": tag}, {"system_prompt": "s"}, 1_755_000_000_000, "t")
    return digest(m)


@pytest.mark.parametrize("scheme", SCHEMES)
class TestSignVerify:
    def test_round_trip(self, scheme):
        ks = Keystore(scheme)
        ks.keygen("k1")
        d = make_digest()
        sig = ks.sign(d, "k1")
        result = ks.verify(d, sig, "k1")
        assert result.accepted and result.reason is None

    def test_sign_manifest_carries_digest_and_key(self, scheme):
        ks = Keystore(scheme)
        ks.keygen("k1")
        m = Manifest({"query": "q"}, {}, 5, "t")
        signed = ks.sign_manifest(m, "k1")
        assert signed.key_id == "k1"
        assert signed.manifest == m
        assert signed.digest == digest(m)
        assert ks.verify(signed.digest, signed.signature, "k1").accepted

    def test_flipped_signature_bit_rejected(self, scheme):
        ks = Keystore(scheme)
        ks.keygen("k1")
        d = make_digest()
        sig = bytearray(ks.sign(d, "k1"))
        sig[-1] ^= 0x01
        result = ks.verify(d, bytes(sig), "k1")
        assert not result.accepted
        assert result.reason is RejectReason.SIGNATURE_INVALID

    def test_signature_does_not_transfer_between_digests(self, scheme):
        ks = Keystore(scheme)
        ks.keygen("k1")
        sig = ks.sign(make_digest("a"), "k1")
        assert not ks.verify(make_digest("b"), sig, "k1").accepted

    def test_signature_does_not_transfer_between_keys(self, scheme):
        ks = Keystore(scheme)
        ks.keygen("k1")
        ks.keygen("k2")
        sig = ks.sign(make_digest(), "k1")
        result = ks.verify(make_digest(), sig, "k2")
        assert not result.accepted
        assert result.reason is RejectReason.SIGNATURE_INVALID

    @pytest.mark.parametrize("junk", [b"", b"\x00", b"not a signature", b"\xff" * 96])
    def test_garbage_signatures_rejected_not_raised(self, scheme, junk):
        ks = Keystore(scheme)
        ks.keygen("k1")
        result = ks.verify(make_digest(), junk, "k1")
        assert not result.accepted
        assert result.reason is RejectReason.SIGNATURE_INVALID


class TestLifecycle:
    def test_duplicate_keygen_rejected(self):
        ks = Keystore()
        ks.keygen("k1")
        with pytest.raises(DuplicateKeyId):
            ks.keygen("k1")

    def test_unknown_key_paths(self):
        ks = Keystore()
        with pytest.raises(UnknownKey):
            ks.sign(make_digest(), "ghost")
        with pytest.raises(UnknownKey):
            ks.revoke("ghost")
        result = ks.verify(make_digest(), b"sig", "ghost")
        assert not result.accepted
        assert result.reason is RejectReason.UNKNOWN_KEY

    def test_revoked_key_cannot_sign(self):
        ks = Keystore()
        ks.keygen("k1")
        ks.revoke("k1")
        with pytest.raises(KeyRevoked):
            ks.sign(make_digest(), "k1")

    def test_signature_made_before_revocation_is_rejected_after(self):
        ks = Keystore()
        ks.keygen("k1")
        d = make_digest()
        sig = ks.sign(d, "k1")
        assert ks.verify(d, sig, "k1").accepted
        ks.revoke("k1")
        result = ks.verify(d, sig, "k1")
        assert not result.accepted
        assert result.reason is RejectReason.KEY_REVOKED

    def test_handles_report_revocation(self):
        ks = Keystore()
        ks.keygen("k1", created_at=123)
        ks.keygen("k2")
        ks.revoke("k2")
        handles = {h.key_id: h for h in ks.list_keys()}
        assert handles["k1"].created_at == 123
        assert not handles["k1"].revoked
        assert handles["k2"].revoked
        assert len(ks) == 2 and "k1" in ks

    def test_public_api_never_exposes_private_material(self):
        # every externally reachable value must stay on the public side
        ks = Keystore()
        ks.keygen("k1")
        d = make_digest()
        reachable = [
            ks.handle("k1"),
            ks.list_keys()[0],
            ks.sign_manifest(Manifest({"q": "x"}, {}, 1, "t"), "k1"),
            ks.sign(d, "k1"),
            ks.verify(d, ks.sign(d, "k1"), "k1"),
        ]
        for value in reachable:
            text = repr(value)
            assert "PrivateKey" not in text
            assert "PRIVATE" not in text
        handle = ks.handle("k1")
        assert isinstance(handle.public_key, bytes)
        assert b"PRIVATE" not in handle.public_key


class TestRotation:
    def test_uniform_policy_weights(self):
        policy = RotationPolicy.uniform(["a", "b", "c", "d"])
        assert policy.weights() == pytest.approx((0.25,) * 4)

    def test_offsets_must_sum_to_zero(self):
        with pytest.raises(Exception):
            RotationPolicy(("a", "b"), (0.2, 0.2))

    def test_weighted_constructor(self):
        policy = RotationPolicy.weighted({"a": 0.8, "b": 0.2})
        assert policy.weights() == pytest.approx((0.8, 0.2))

    def test_uniform_selection_frequencies(self):
        ks = Keystore()
        ks.keygen("a")
        ks.keygen("b")
        policy = RotationPolicy.uniform(["a", "b"])
        rng = np.random.Generator(np.random.Philox(42))
        picks = [ks.select_key(policy, rng) for _ in range(20_000)]
        freqs = rotation_frequencies(picks, ["a", "b"])
        assert freqs["a"] == pytest.approx(0.5, abs=0.015)
        assert freqs["b"] == pytest.approx(0.5, abs=0.015)

    def test_weighted_selection_frequencies(self):
        ks = Keystore()
        ks.keygen("a")
        ks.keygen("b")
        policy = RotationPolicy.weighted({"a": 0.8, "b": 0.2})
        rng = np.random.Generator(np.random.Philox(43))
        picks = [ks.select_key(policy, rng) for _ in range(20_000)]
        freqs = rotation_frequencies(picks, ["a", "b"])
        assert freqs["a"] == pytest.approx(0.8, abs=0.015)

    def test_selection_renormalizes_after_revocation(self):
        ks = Keystore()
        for kid in ("a", "b", "c"):
            ks.keygen(kid)
        ks.revoke("b")
        policy = RotationPolicy.uniform(["a", "b", "c"])
        rng = np.random.Generator(np.random.Philox(44))
        picks = {ks.select_key(policy, rng) for _ in range(500)}
        assert picks == {"a", "c"}

    def test_no_usable_key(self):
        ks = Keystore()
        ks.keygen("a")
        ks.revoke("a")
        rng = np.random.Generator(np.random.Philox(45))
        with pytest.raises(NoUsableKey):
            ks.select_key(RotationPolicy.uniform(["a"]), rng)

    def test_rotation_frequencies_cover_unpicked_keys(self):
        freqs = rotation_frequencies(["a", "a"], ["a", "b"])
        assert freqs == {"a": 1.0, "b": 0.0}


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        path = tmp_path / "keys.pem"
        ks = Keystore()
        ks.keygen("k1", created_at=7)
        ks.keygen("k2")
        ks.revoke("k2")
        d = make_digest()
        sig = ks.sign(d, "k1")
        ks.save(path)

        loaded = Keystore.load(path)
        assert loaded.scheme == ks.scheme
        assert {h.key_id for h in loaded.list_keys()} == {"k1", "k2"}
        assert loaded.handle("k2").revoked
        assert loaded.handle("k1").created_at == 7
        assert loaded.verify(d, sig, "k1").accepted
        # the reloaded private key must produce verifiable fresh signatures
        assert ks.verify(d, loaded.sign(d, "k1"), "k1").accepted

    def test_keystore_file_is_owner_only(self, tmp_path):
        path = tmp_path / "keys.pem"
        ks = Keystore()
        ks.keygen("k1")
        ks.save(path)
        assert (path.stat().st_mode & 0o777) == 0o600

    def test_passphrase_round_trip(self, tmp_path):
        path = tmp_path / "keys.pem"
        ks = Keystore("ed25519")
        ks.keygen("k1")
        ks.save(path, passphrase="correct horse")
        loaded = Keystore.load(path, passphrase="correct horse")
        d = make_digest()
        assert loaded.verify(d, loaded.sign(d, "k1"), "k1").accepted
        with pytest.raises(StorageError):
            Keystore.load(path, passphrase="wrong")
        with pytest.raises(StorageError):
            Keystore.load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(StorageError):
            Keystore.load(tmp_path / "absent.pem")

    def test_corrupted_file(self, tmp_path):
        path = tmp_path / "keys.pem"
        ks = Keystore()
        ks.keygen("k1")
        ks.save(path)
        path.write_text(path.read_text()[:50], encoding="utf-8")
        with pytest.raises(StorageError):
            Keystore.load(path)
