"""Walk through ranks, utilities and the log lower bound for a small hierarchy.

Run: python demos/rank_and_utility.py
"""
import itertools

import numpy as np

from rankgrasp.hierarchy import (
    RuleHierarchy,
    RuleProbabilities,
    expected_utility,
    log_lower_bound,
    monte_carlo_utility,
    rank,
    rank_distribution,
    utility,
)

# Stability first, then reachability and collision together, then intent.
h = RuleHierarchy.from_lists([["stability"], ["execution", "collision"], ["intention"]])
print("hierarchy:", " > ".join("&".join(r) for r in h.as_lists()))
print()

# Every outcome pattern, best first. Breaking the first rule costs more than
# breaking both of the others.
print("pattern  rank  utility")
for pattern in itertools.product([1, 0], repeat=h.n_rules):
    print(f"  {''.join(map(str, pattern))}     {rank(pattern):>2}     {utility(pattern):>2}")
print()

# Two candidate grasps: one very likely stable but likely to collide, one
# that is a coin flip on stability but clear of obstacles.
careful = h.criterion_probabilities({"stability": 0.95, "execution": 0.9, "collision": 0.3, "intention": 0.9})
bold = h.criterion_probabilities({"stability": 0.5, "execution": 0.9, "collision": 0.99, "intention": 0.9})

for name, probs in (("careful", careful), ("bold", bold)):
    u = expected_utility(probs)
    mc, se = monte_carlo_utility(probs, 200_000, seed=0)
    L = log_lower_bound(probs)
    print(f"{name:8s} rule probs {np.round(probs.rules, 3)}")
    print(f"         U = {u:.4f}   Monte Carlo {mc:.4f} +- {se:.4f}")
    print(f"         L = {L:.4f}   exp(L) = {np.exp(L):.4f} <= U + 2^N = {u + 2 ** h.n_rules:.4f}")
    dist = rank_distribution(probs)
    print("         P(rank=r):", " ".join(f"{p:.3f}" for p in dist))
print()

# The bound is not rank-preserving: the two scores can disagree on order.
prefer_u = "careful" if expected_utility(careful) > expected_utility(bold) else "bold"
prefer_l = "careful" if log_lower_bound(careful) > log_lower_bound(bold) else "bold"
print(f"expected utility prefers {prefer_u}; the log bound prefers {prefer_l}")
print("which is why the optimiser climbs L but selects by U.")

# The same numbers from rule probabilities directly.
q = RuleProbabilities.from_rules([0.9, 0.5, 0.1])
print()
print("single-criterion rules", q.rules, "-> U =", expected_utility(q))
