"""Rule hierarchies, grasp rank and the rank-preserving utilities.

A hierarchy is an ordered list of rules; rule ``i`` (1-based, 1 most
important) is the conjunction of its criteria. Given which rules a grasp
satisfies, its rank is ``2**N - sum(2**(N-i) * bit_i)``; the integer
utility ``2**N - rank + 1`` and the expected utility
``sum(2**(N-i) * q_i) - 2**N`` both order grasps the same way. The two
utilities differ by the constant ``2**N + 1``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import DomainError, SizeError

MAX_EXACT_RULES = 62
PROB_FLOOR = 1e-12

# Single-letter ablation codes used by the benchmark ladder.
CRITERION_CODES = {
    "S": "stability",
    "E": "execution",
    "C": "collision",
    "N": "intention",
}


@dataclass(frozen=True)
class Rule:
    criteria: tuple[str, ...]
    priority: int

    def __post_init__(self):
        if len(self.criteria) == 0:
            raise DomainError(f"rule {self.priority} has no criteria")


@dataclass(frozen=True)
class RuleHierarchy:
    """Ordered rules; ``rules[0]`` has priority 1."""

    rules: tuple[Rule, ...]

    def __post_init__(self):
        if len(self.rules) == 0:
            raise DomainError("a hierarchy needs at least one rule")
        priorities = [r.priority for r in self.rules]
        if priorities != list(range(1, len(self.rules) + 1)):
            raise DomainError(f"priorities must be exactly 1..N in order, got {priorities}")

    @classmethod
    def from_lists(cls, rules: Sequence[Sequence[str]]) -> "RuleHierarchy":
        return cls(tuple(Rule(tuple(r), i + 1) for i, r in enumerate(rules)))

    @classmethod
    def default(cls) -> "RuleHierarchy":
        """Stability first, execution and collision second, intention last."""
        return cls.from_lists([["stability"], ["execution", "collision"], ["intention"]])

    @classmethod
    def ablation(cls, code: str) -> "RuleHierarchy":
        """Build one of the S / SE / SC / SEC / SECN ladder hierarchies."""
        code = code.upper()
        if not code or code[0] != "S" or any(c not in CRITERION_CODES for c in code):
            raise DomainError(f"unknown ablation code {code!r}")
        rules = [["stability"]]
        second = [CRITERION_CODES[c] for c in code[1:] if c in "EC"]
        if second:
            rules.append(second)
        if "N" in code:
            rules.append(["intention"])
        return cls.from_lists(rules)

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    @property
    def criteria(self) -> tuple[str, ...]:
        """Criterion identifiers in priority order, without repeats."""
        seen = []
        for rule in self.rules:
            for c in rule.criteria:
                if c not in seen:
                    seen.append(c)
        return tuple(seen)

    def as_lists(self) -> list[list[str]]:
        return [list(r.criteria) for r in self.rules]

    def rule_probabilities(self, probs: Mapping[str, np.ndarray]) -> np.ndarray:
        """Per-rule satisfaction probabilities, shape ``(..., N)``.

        Criteria within a rule are treated as conditionally independent,
        so each rule probability is the product of its criteria.
        """
        cols = []
        for rule in self.rules:
            q = np.ones_like(np.asarray(probs[rule.criteria[0]], dtype=float))
            for c in rule.criteria:
                q = q * np.asarray(probs[c], dtype=float)
            cols.append(q)
        return np.stack(cols, axis=-1)

    def criterion_probabilities(self, probs: Mapping[str, float]) -> "RuleProbabilities":
        return RuleProbabilities(
            tuple(tuple(float(probs[c]) for c in rule.criteria) for rule in self.rules)
        )


@dataclass(frozen=True)
class RuleProbabilities:
    """Per-criterion probabilities grouped by rule."""

    criteria: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        for i, group in enumerate(self.criteria):
            if len(group) == 0:
                raise DomainError(f"rule {i + 1} has no criterion probabilities")
            for p in group:
                if not 0.0 <= p <= 1.0:
                    raise DomainError(f"probability {p!r} in rule {i + 1} is outside [0, 1]")

    @classmethod
    def from_rules(cls, q: Sequence[float]) -> "RuleProbabilities":
        """One criterion per rule."""
        return cls(tuple((float(x),) for x in q))

    @property
    def rules(self) -> np.ndarray:
        return np.array([np.prod(g) for g in self.criteria], dtype=float)


def _bits(pattern) -> list[int]:
    bits = [int(bool(b)) for b in pattern]
    if not 1 <= len(bits) <= MAX_EXACT_RULES:
        raise SizeError(f"pattern length {len(bits)} outside 1..{MAX_EXACT_RULES}")
    return bits


def rank(pattern: Sequence[bool]) -> int:
    """Exact rank in ``[1, 2**N]``; 1 means every rule holds."""
    bits = _bits(pattern)
    n = len(bits)
    return (1 << n) - sum(b << (n - i) for i, b in enumerate(bits, start=1))


def utility(pattern: Sequence[bool]) -> int:
    """Integer utility ``2**N - rank + 1``, in ``[1, 2**N]``."""
    return (1 << len(pattern)) - rank(pattern) + 1


def pattern_for_rank(r: int, n: int) -> tuple[bool, ...]:
    """Inverse of :func:`rank` for a hierarchy of ``n`` rules."""
    if not 1 <= n <= MAX_EXACT_RULES:
        raise SizeError(f"N={n} outside 1..{MAX_EXACT_RULES}")
    if not 1 <= r <= (1 << n):
        raise DomainError(f"rank {r} outside 1..{1 << n}")
    code = (1 << n) - r
    return tuple(bool((code >> (n - i)) & 1) for i in range(1, n + 1))


def _rule_probs(probs) -> np.ndarray:
    if isinstance(probs, RuleProbabilities):
        q = probs.rules
    else:
        q = np.asarray(probs, dtype=float)
    if q.ndim == 0 or q.shape[-1] == 0:
        raise DomainError("need at least one rule probability")
    if not np.all((q >= 0.0) & (q <= 1.0)):
        raise DomainError("rule probabilities must lie in [0, 1]")
    return q


def rank_weights(n: int) -> np.ndarray:
    return np.array([2.0 ** (n - i) for i in range(1, n + 1)])


def expected_utility(probs) -> np.ndarray | float:
    """Negative expected rank, ``sum(2**(N-i) q_i) - 2**N``.

    ``probs`` is a :class:`RuleProbabilities` or an array whose last axis
    holds the N rule probabilities; leading axes are broadcast over.
    """
    q = _rule_probs(probs)
    n = q.shape[-1]
    u = q @ rank_weights(n) - 2.0 ** n
    return float(u) if np.ndim(u) == 0 else u


def utility_gradient(n: int) -> np.ndarray:
    """Partial derivatives of :func:`expected_utility` w.r.t. each q_i."""
    return rank_weights(n)


def log_lower_bound(probs, floor: float = PROB_FLOOR) -> float:
    """Sum of log criterion probabilities, each clamped below at ``floor``.

    ``probs`` is a :class:`RuleProbabilities` or a nested sequence of
    per-rule criterion probabilities.
    """
    groups = probs.criteria if isinstance(probs, RuleProbabilities) else probs
    flat = np.concatenate([np.atleast_1d(np.asarray(g, dtype=float)) for g in groups])
    return float(np.sum(np.log(np.clip(flat, floor, 1.0))))


def rank_distribution(probs) -> np.ndarray:
    """``P(rank = r)`` for r = 1..2**N under independent rule outcomes."""
    q = _rule_probs(probs)
    if q.ndim != 1:
        raise DomainError("rank_distribution takes a single probability vector")
    n = q.size
    if n > 16:
        raise SizeError(f"rank distribution enumerates 2**N entries; N={n} exceeds 16")
    codes = np.arange((1 << n) - 1, -1, -1)  # rank 1 first
    shifts = np.arange(n - 1, -1, -1)
    bits = (codes[:, None] >> shifts[None, :]) & 1
    return np.prod(np.where(bits == 1, q, 1.0 - q), axis=1)


def monte_carlo_utility(probs, draws: int, seed: int) -> tuple[float, float]:
    """Sample rule outcomes and average ``-rank``; returns (mean, std error)."""
    if draws < 1:
        raise DomainError("draws must be at least 1")
    q = _rule_probs(probs)
    if q.ndim != 1:
        raise DomainError("monte_carlo_utility takes a single probability vector")
    rng = np.random.default_rng(seed)
    n = q.size
    hits = rng.random((draws, n)) < q
    ranks = 2.0 ** n - hits @ rank_weights(n)
    values = -ranks
    if draws == 1:
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(draws))
