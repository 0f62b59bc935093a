"""Bernoulli audit sampling, evidence tuples, and overhead/trade-off math.

Each execution can be sampled for audit with probability p.  A sampled
execution yields an evidence tuple binding the log root, the output digest,
and the two stage timings into a single digest.  Timings enter the digest at
fixed millisecond precision (three decimals) so that a tuple serialized and
re-read reproduces its digest exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator

from . import _kernels
from .errors import DomainError, EncodingError
from .translog import MerkleRoot

TIMING_DECIMALS = 3


def _canonical_timing(value_ms: float) -> bytes:
    return format(value_ms, f".{TIMING_DECIMALS}f").encode("ascii")


@dataclass(frozen=True)
class AuditConfig:
    """Sampling parameters: per-execution probability and audit cadence."""

    detection_probability: float
    audits_per_second: float = 1.0

    def __post_init__(self) -> None:
        p = self.detection_probability
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not math.isfinite(p):
            raise DomainError("detection probability must be a finite number")
        if not 0.0 < p <= 1.0:
            raise DomainError(f"detection probability {p} outside (0, 1]")
        f = self.audits_per_second
        if not isinstance(f, (int, float)) or not math.isfinite(f) or f <= 0:
            raise DomainError("audit frequency must be positive and finite")


@dataclass(frozen=True)
class EvidenceTuple:
    """Audit evidence for one sampled execution."""

    merkle_root: MerkleRoot
    output_digest: bytes
    exec_time_ms: float
    verify_time_ms: float
    evidence_digest: bytes

    def to_json_line(self) -> str:
        return json.dumps(
            {
                "root": self.merkle_root.hex,
                "tree_size": self.merkle_root.tree_size,
                "output_digest": self.output_digest.hex(),
                "exec_ms": self.exec_time_ms,
                "verify_ms": self.verify_time_ms,
                "evidence_digest": self.evidence_digest.hex(),
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_json_line(cls, line: str) -> "EvidenceTuple":
        try:
            obj = json.loads(line)
            root = MerkleRoot(bytes.fromhex(obj["root"]), int(obj["tree_size"]))
            tup = cls(
                merkle_root=root,
                output_digest=bytes.fromhex(obj["output_digest"]),
                exec_time_ms=float(obj["exec_ms"]),
                verify_time_ms=float(obj["verify_ms"]),
                evidence_digest=bytes.fromhex(obj["evidence_digest"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise EncodingError(f"bad evidence line: {exc}") from exc
        return tup


def evidence_digest_of(
    root: MerkleRoot, output_digest: bytes, exec_time_ms: float, verify_time_ms: float
) -> bytes:
    return _kernels.sha256(
        root.value
        + output_digest
        + _canonical_timing(exec_time_ms)
        + _canonical_timing(verify_time_ms)
    )


def build_evidence(
    root: MerkleRoot, output: bytes, exec_time_ms: float, verify_time_ms: float
) -> EvidenceTuple:
    if exec_time_ms < 0 or verify_time_ms < 0:
        raise DomainError("stage timings must not be negative")
    output_digest = _kernels.sha256(output)
    return EvidenceTuple(
        merkle_root=root,
        output_digest=output_digest,
        exec_time_ms=exec_time_ms,
        verify_time_ms=verify_time_ms,
        evidence_digest=evidence_digest_of(root, output_digest, exec_time_ms, verify_time_ms),
    )


def recheck_evidence(evidence: EvidenceTuple) -> bool:
    """True iff the stored digest matches a recomputation from the fields."""
    expected = evidence_digest_of(
        evidence.merkle_root,
        evidence.output_digest,
        evidence.exec_time_ms,
        evidence.verify_time_ms,
    )
    return expected == evidence.evidence_digest


def audit_sample(
    executions: Iterable[tuple[MerkleRoot, bytes, float, float]],
    config: AuditConfig,
    rng,
) -> Iterator[tuple[int, EvidenceTuple]]:
    """Independently sample executions with probability p; yields (position, evidence).

    One uniform draw is consumed per execution whether or not it is sampled,
    so the set of audited positions depends only on the rng stream.
    """
    p = config.detection_probability
    for position, (root, output, exec_ms, verify_ms) in enumerate(executions):
        if rng.random() < p:
            yield position, build_evidence(root, output, exec_ms, verify_ms)


def undetected_probability(detection_probability: float, rounds: int) -> float:
    """Chance that n independently sampled violations all escape audit."""
    p = detection_probability
    if isinstance(p, bool) or not isinstance(p, (int, float)) or not math.isfinite(p):
        raise DomainError("detection probability must be a finite number")
    if not 0.0 < p <= 1.0:
        raise DomainError(f"detection probability {p} outside (0, 1]")
    if not isinstance(rounds, int) or isinstance(rounds, bool) or rounds < 0:
        raise DomainError("rounds must be a non-negative integer")
    return (1.0 - p) ** rounds


def expected_detection_latency(config: AuditConfig) -> float:
    """Mean time to first detection, in seconds, for a persistent violator."""
    return 1.0 / (config.detection_probability * config.audits_per_second)


def overhead(baseline_ms: float, secure_ms: float) -> float:
    """Relative slowdown of the full pipeline over the stripped baseline."""
    if not math.isfinite(baseline_ms) or baseline_ms <= 0:
        raise DomainError("baseline time must be positive")
    if not math.isfinite(secure_ms) or secure_ms < 0:
        raise DomainError("secure time must not be negative")
    return (secure_ms - baseline_ms) / baseline_ms


@dataclass(frozen=True)
class TradeoffWeights:
    """Relative importance of overhead versus residual error."""

    overhead_weight: float
    error_weight: float

    def __post_init__(self) -> None:
        for value in (self.overhead_weight, self.error_weight):
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise DomainError("trade-off weights must be non-negative and finite")
        if self.overhead_weight + self.error_weight <= 0:
            raise DomainError("at least one trade-off weight must be positive")


def tradeoff(overhead_delta: float, error_probability: float, weights: TradeoffWeights) -> float:
    """Scalar cost combining overhead and residual error probability."""
    if not math.isfinite(overhead_delta) or overhead_delta < 0:
        raise DomainError("overhead delta must be non-negative")
    if not 0.0 <= error_probability <= 1.0:
        raise DomainError(f"error probability {error_probability} outside [0, 1]")
    return weights.overhead_weight * overhead_delta + weights.error_weight * error_probability


@dataclass(frozen=True)
class MetricsRecord:
    """Per-workload timing summary used by the overhead analysis."""

    workload_id: str
    scale: int
    exec_time_ms: float
    verify_time_ms: float
    baseline_time_ms: float
    secure_time_ms: float
    overhead_delta: float

    @classmethod
    def build(
        cls,
        workload_id: str,
        scale: int,
        exec_time_ms: float,
        verify_time_ms: float,
        baseline_time_ms: float,
        secure_time_ms: float,
    ) -> "MetricsRecord":
        return cls(
            workload_id=workload_id,
            scale=scale,
            exec_time_ms=exec_time_ms,
            verify_time_ms=verify_time_ms,
            baseline_time_ms=baseline_time_ms,
            secure_time_ms=secure_time_ms,
            overhead_delta=overhead(baseline_time_ms, secure_time_ms),
        )
