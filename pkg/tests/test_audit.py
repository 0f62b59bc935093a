"""Audit sampling and evidence tests.

The closed-form escape probability is cross-checked by direct Monte Carlo
simulation, so the formula and the sampler are validated against each other.
"""

import hashlib

import numpy as np
import pytest

from manifestd.audit import (
    AuditConfig,
    EvidenceTuple,
    TradeoffWeights,
    audit_sample,
    build_evidence,
    expected_detection_latency,
    overhead,
    recheck_evidence,
    tradeoff,
    undetected_probability,
)
from manifestd.errors import DomainError, EncodingError
from manifestd.translog import MerkleRoot


def root(tag=b"r", size=5):
    return MerkleRoot(hashlib.sha256(tag).digest(), size)


class TestEvidence:
    def test_build_and_recheck(self):
        ev = build_evidence(root(), b"tool output", 12.5, 1.25)
        assert ev.output_digest == hashlib.sha256(b"tool output").digest()
        assert recheck_evidence(ev)

    def test_json_line_round_trip(self):
        ev = build_evidence(root(), b"payload", 3.125, 0.5)
        clone = EvidenceTuple.from_json_line(ev.to_json_line())
        assert clone == ev
        assert recheck_evidence(clone)

    def test_bad_line_rejected(self):
        with pytest.raises(EncodingError):
            EvidenceTuple.from_json_line("{}")
        with pytest.raises(EncodingError):
            EvidenceTuple.from_json_line("not json")

    def test_digest_binds_every_field(self):
        base = build_evidence(root(), b"out", 10.0, 2.0)
        changed = [
            build_evidence(root(b"other"), b"out", 10.0, 2.0),
            build_evidence(root(), b"out2", 10.0, 2.0),
            build_evidence(root(), b"out", 10.001, 2.0),
            build_evidence(root(), b"out", 10.0, 2.001),
        ]
        digests = {base.evidence_digest} | {c.evidence_digest for c in changed}
        assert len(digests) == 5

    def test_timing_is_canonicalized_to_milliseconds_3dp(self):
        # below the canonical resolution the digest must not move, otherwise
        # a reloaded evidence line could fail its own recheck
        a = build_evidence(root(), b"out", 10.0001, 2.0)
        b = build_evidence(root(), b"out", 10.00012, 2.0)
        assert a.evidence_digest == b.evidence_digest

    def test_corrupted_digest_fails_recheck(self):
        ev = build_evidence(root(), b"out", 1.0, 1.0)
        bad = EvidenceTuple(
            ev.merkle_root,
            ev.output_digest,
            ev.exec_time_ms,
            ev.verify_time_ms,
            bytes(32),
        )
        assert not recheck_evidence(bad)

    def test_negative_timings_rejected(self):
        with pytest.raises(DomainError):
            build_evidence(root(), b"out", -0.1, 1.0)
        with pytest.raises(DomainError):
            build_evidence(root(), b"out", 1.0, -0.1)

    def test_digests_are_collision_free_at_scale(self):
        seen = set()
        for i in range(100_000):
            ev_digest = build_evidence(root(), b"out-%d" % i, 1.0, 1.0).evidence_digest
            seen.add(ev_digest)
        assert len(seen) == 100_000


class TestSampling:
    def executions(self, n):
        return [(root(b"%d" % i, i + 1), b"out-%d" % i, float(i), 0.5) for i in range(n)]

    def test_probability_one_samples_everything(self):
        rng = np.random.Generator(np.random.Philox(1))
        sampled = list(audit_sample(self.executions(50), AuditConfig(1.0), rng))
        assert [pos for pos, _ in sampled] == list(range(50))

    def test_sampled_evidence_matches_positions(self):
        rng = np.random.Generator(np.random.Philox(2))
        for pos, ev in audit_sample(self.executions(200), AuditConfig(0.3), rng):
            assert ev.merkle_root.tree_size == pos + 1
            assert recheck_evidence(ev)

    def test_sampling_is_reproducible(self):
        runs = []
        for _ in range(2):
            rng = np.random.Generator(np.random.Philox(99))
            runs.append([pos for pos, _ in audit_sample(self.executions(500), AuditConfig(0.2), rng)])
        assert runs[0] == runs[1]

    def test_sampling_rate_matches_probability(self):
        rng = np.random.Generator(np.random.Philox(3))
        n = 40_000
        sampled = list(audit_sample(self.executions(n), AuditConfig(0.1), rng))
        rate = len(sampled) / n
        assert rate == pytest.approx(0.1, abs=0.01)


class TestEscapeProbability:
    def test_hand_values(self):
        assert undetected_probability(0.5, 1) == 0.5
        assert undetected_probability(1.0, 3) == 0.0
        assert undetected_probability(0.25, 0) == 1.0
        assert undetected_probability(0.9, 10) == pytest.approx(1e-10, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            undetected_probability(0.0, 5)
        with pytest.raises(DomainError):
            undetected_probability(1.5, 5)
        with pytest.raises(DomainError):
            undetected_probability(0.5, -1)

    def test_monte_carlo_agrees_with_closed_form(self):
        # 200k simulated 5-round violation campaigns at p = 0.3
        rng = np.random.Generator(np.random.Philox(7))
        trials = 200_000
        detected = rng.random((trials, 5)) < 0.3
        escaped = np.mean(~detected.any(axis=1))
        expected = undetected_probability(0.3, 5)
        # binomial standard error ~ sqrt(q(1-q)/trials) ~ 0.0008
        assert escaped == pytest.approx(expected, abs=0.004)

    def test_latency_formula(self):
        assert expected_detection_latency(AuditConfig(0.9, 1.0)) == pytest.approx(1.1111, rel=1e-3)
        assert expected_detection_latency(AuditConfig(0.1, 2.0)) == pytest.approx(5.0)


class TestOverheadAndTradeoff:
    def test_overhead_hand_values(self):
        assert overhead(10.0, 15.0) == pytest.approx(0.5)
        assert overhead(100.0, 100.0) == 0.0

    def test_overhead_requires_positive_baseline(self):
        with pytest.raises(DomainError):
            overhead(0.0, 5.0)
        with pytest.raises(DomainError):
            overhead(-1.0, 5.0)

    def test_tradeoff_combines_weighted_terms(self):
        w = TradeoffWeights(overhead_weight=2.0, error_weight=1.0)
        assert tradeoff(0.1, 0.01, w) == pytest.approx(2.0 * 0.1 + 1.0 * 0.01)

    def test_tradeoff_domain(self):
        w = TradeoffWeights(1.0, 1.0)
        with pytest.raises(DomainError):
            tradeoff(-0.1, 0.5, w)
        with pytest.raises(DomainError):
            tradeoff(0.1, 1.5, w)

    def test_weights_validation(self):
        with pytest.raises(DomainError):
            TradeoffWeights(overhead_weight=-1.0, error_weight=1.0)
        with pytest.raises(DomainError):
            TradeoffWeights(overhead_weight=0.0, error_weight=0.0)
