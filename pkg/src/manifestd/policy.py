"""Fail-closed compliance evaluation.

A policy set is an ordered list of Boolean rules.  Evaluation runs every rule
(no short-circuiting, so reports always list the complete set of failures)
and the manifest passes only if no rule of blocking severity failed.  Rules
that cannot be evaluated are treated as failed: absence of evidence is
non-compliance.
"""

from __future__ import annotations

import enum
import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

from .errors import ConfigError, DomainError
from .manifest import Manifest, canonical_encode


class Severity(enum.Enum):
    OK = "ok"
    WARN = "warn"
    BLOCK = "block"


_SEVERITY_RANK = {Severity.OK: 0, Severity.WARN: 1, Severity.BLOCK: 2}


class RuleKind(enum.Enum):
    REQUIRED_FIELD = "required-field"
    FIELD_PATTERN = "field-pattern"
    VALUE_RANGE = "value-range"
    MAX_FIELD_COUNT = "max-field-count"
    MAX_ENCODING_SIZE = "max-encoding-size"
    TOOL_ALLOWLIST = "tool-allowlist"
    FRESHNESS_WINDOW = "freshness-window"


_PARTITIONS = ("user", "model", "any")


@dataclass(frozen=True)
class PolicyRule:
    """One named check with the severity its failure carries."""

    rule_id: str
    kind: RuleKind
    params: Mapping[str, Any] = field(default_factory=dict)
    severity_on_fail: Severity = Severity.BLOCK

    def __post_init__(self) -> None:
        if not self.rule_id:
            raise ConfigError("rule_id must be non-empty")
        if self.severity_on_fail is Severity.OK:
            raise ConfigError(f"rule {self.rule_id}: failure severity cannot be 'ok'")
        params = dict(self.params)
        object.__setattr__(self, "params", params)
        self._validate_params(params)

    def _validate_params(self, params: dict) -> None:
        kind = self.kind
        def need(name: str, types: tuple) -> Any:
            if name not in params:
                raise ConfigError(f"rule {self.rule_id}: missing param {name!r}")
            value = params[name]
            if not isinstance(value, types) or isinstance(value, bool):
                raise ConfigError(f"rule {self.rule_id}: param {name!r} has wrong type")
            return value

        if kind in (RuleKind.REQUIRED_FIELD, RuleKind.FIELD_PATTERN, RuleKind.VALUE_RANGE):
            need("field", (str,))
            partition = params.setdefault("partition", "any")
            if partition not in _PARTITIONS:
                raise ConfigError(f"rule {self.rule_id}: partition must be one of {_PARTITIONS}")
        if kind is RuleKind.FIELD_PATTERN:
            pattern = need("pattern", (str,))
            try:
                object.__setattr__(self, "_compiled", re.compile(pattern))
            except re.error as exc:
                raise ConfigError(f"rule {self.rule_id}: bad pattern: {exc}") from exc
        elif kind is RuleKind.VALUE_RANGE:
            lo = params.get("min")
            hi = params.get("max")
            if lo is None and hi is None:
                raise ConfigError(f"rule {self.rule_id}: need at least one of min/max")
            for name, bound in (("min", lo), ("max", hi)):
                if bound is not None and (isinstance(bound, bool) or not isinstance(bound, (int, float))):
                    raise ConfigError(f"rule {self.rule_id}: param {name!r} has wrong type")
            if lo is not None and hi is not None and lo > hi:
                raise ConfigError(f"rule {self.rule_id}: min exceeds max")
        elif kind is RuleKind.MAX_FIELD_COUNT:
            if need("max_fields", (int,)) < 0:
                raise ConfigError(f"rule {self.rule_id}: max_fields must be >= 0")
        elif kind is RuleKind.MAX_ENCODING_SIZE:
            if need("max_bytes", (int,)) <= 0:
                raise ConfigError(f"rule {self.rule_id}: max_bytes must be positive")
        elif kind is RuleKind.TOOL_ALLOWLIST:
            tools = need("tools", (list, tuple))
            if not tools or not all(isinstance(t, str) for t in tools):
                raise ConfigError(f"rule {self.rule_id}: tools must be a non-empty string list")
            params["tools"] = tuple(tools)


@dataclass(frozen=True)
class PolicySet:
    """Ordered rules plus the freshness parameters shared by them."""

    rules: tuple[PolicyRule, ...]
    epoch_ms: int = 60_000
    clock_skew_ms: int = 2_000

    def __post_init__(self) -> None:
        rules = tuple(self.rules)
        object.__setattr__(self, "rules", rules)
        seen: set[str] = set()
        for rule in rules:
            if rule.rule_id in seen:
                raise ConfigError(f"duplicate rule_id {rule.rule_id!r}")
            seen.add(rule.rule_id)
        if self.epoch_ms <= 0:
            raise ConfigError("epoch_ms must be positive")
        if self.clock_skew_ms < 0:
            raise ConfigError("clock_skew_ms must not be negative")


@dataclass(frozen=True)
class ComplianceReport:
    """Outcome of evaluating every rule against one manifest."""

    passed: bool
    severity: Severity
    failed_rules: tuple[tuple[str, Severity], ...]

    @property
    def failed_rule_ids(self) -> tuple[str, ...]:
        return tuple(rule_id for rule_id, _ in self.failed_rules)


def _lookup(manifest: Manifest, partition: str, name: str) -> tuple[bool, Any]:
    if partition in ("user", "any") and name in manifest.user_fields:
        return True, manifest.user_fields[name]
    if partition in ("model", "any") and name in manifest.model_fields:
        return True, manifest.model_fields[name]
    return False, None


def _rule_passes(rule: PolicyRule, manifest: Manifest, policy: PolicySet, now_ms: int) -> bool:
    params = rule.params
    kind = rule.kind
    if kind is RuleKind.REQUIRED_FIELD:
        present, _ = _lookup(manifest, params["partition"], params["field"])
        return present
    if kind is RuleKind.FIELD_PATTERN:
        present, value = _lookup(manifest, params["partition"], params["field"])
        if not present:
            return True
        if not isinstance(value, str):
            return False
        return rule._compiled.fullmatch(value) is not None  # type: ignore[attr-defined]
    if kind is RuleKind.VALUE_RANGE:
        present, value = _lookup(manifest, params["partition"], params["field"])
        if not present:
            return True
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return False
        lo = params.get("min")
        hi = params.get("max")
        if lo is not None and value < lo:
            return False
        if hi is not None and value > hi:
            return False
        return True
    if kind is RuleKind.MAX_FIELD_COUNT:
        total = len(manifest.user_fields) + len(manifest.model_fields)
        return total <= params["max_fields"]
    if kind is RuleKind.MAX_ENCODING_SIZE:
        return len(canonical_encode(manifest)) <= params["max_bytes"]
    if kind is RuleKind.TOOL_ALLOWLIST:
        return manifest.tool_id in params["tools"]
    if kind is RuleKind.FRESHNESS_WINDOW:
        age_ms = now_ms - manifest.timestamp
        if age_ms > policy.epoch_ms:
            return False
        # Timestamps ahead of the verifier clock are tolerated up to the skew.
        if age_ms < -policy.clock_skew_ms:
            return False
        return True
    raise ConfigError(f"unhandled rule kind {kind!r}")


def evaluate(manifest: Manifest, policy: PolicySet, now_ms: int) -> ComplianceReport:
    """Evaluate every rule; the report lists all failures, not just the first."""
    failed: list[tuple[str, Severity]] = []
    for rule in policy.rules:
        if not _rule_passes(rule, manifest, policy, now_ms):
            failed.append((rule.rule_id, rule.severity_on_fail))
    severity = Severity.OK
    for _, sev in failed:
        if _SEVERITY_RANK[sev] > _SEVERITY_RANK[severity]:
            severity = sev
    return ComplianceReport(
        passed=severity is not Severity.BLOCK,
        severity=severity,
        failed_rules=tuple(failed),
    )


def pass_probability(rule_pass_rates: Sequence[float]) -> float:
    """Joint pass probability for independently failing rules."""
    for rate in rule_pass_rates:
        if isinstance(rate, bool) or not isinstance(rate, (int, float)) or not math.isfinite(rate):
            raise DomainError("pass rates must be finite numbers")
        if not 0.0 <= rate <= 1.0:
            raise DomainError(f"pass rate {rate} outside [0, 1]")
    return math.prod(rule_pass_rates)


def policy_to_dict(policy: PolicySet) -> dict:
    return {
        "epoch_ms": policy.epoch_ms,
        "clock_skew_ms": policy.clock_skew_ms,
        "rules": [
            {
                "rule_id": rule.rule_id,
                "kind": rule.kind.value,
                "params": {k: list(v) if isinstance(v, tuple) else v for k, v in rule.params.items()},
                "severity_on_fail": rule.severity_on_fail.value,
            }
            for rule in policy.rules
        ],
    }


def policy_from_dict(obj: object) -> PolicySet:
    if not isinstance(obj, dict):
        raise ConfigError("policy document must be a JSON object")
    try:
        raw_rules = obj["rules"]
    except KeyError:
        raise ConfigError("policy document missing 'rules'") from None
    if not isinstance(raw_rules, list):
        raise ConfigError("'rules' must be a list")
    rules = []
    for i, raw in enumerate(raw_rules):
        if not isinstance(raw, dict):
            raise ConfigError(f"rule #{i} must be an object")
        try:
            kind = RuleKind(raw.get("kind"))
        except ValueError:
            raise ConfigError(f"rule #{i}: unknown kind {raw.get('kind')!r}") from None
        try:
            severity = Severity(raw.get("severity_on_fail", "block"))
        except ValueError:
            raise ConfigError(f"rule #{i}: unknown severity {raw.get('severity_on_fail')!r}") from None
        rules.append(
            PolicyRule(
                rule_id=str(raw.get("rule_id", "")),
                kind=kind,
                params=raw.get("params", {}),
                severity_on_fail=severity,
            )
        )
    return PolicySet(
        rules=tuple(rules),
        epoch_ms=obj.get("epoch_ms", 60_000),
        clock_skew_ms=obj.get("clock_skew_ms", 2_000),
    )


def load_policy_file(path: Union[str, Path]) -> PolicySet:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read policy file {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"policy file {path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    return policy_from_dict(obj)


def save_policy_file(policy: PolicySet, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy), indent=2) + "\n", encoding="utf-8")
