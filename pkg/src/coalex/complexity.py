"""Evaluation cost of a coalition, and threshold search against a cost budget.

The cost unit is one distinct attribute subset: the coalition's *closure*
is every non-empty subset of every group plus all singletons, which is
exactly the set of subset models a coalitional influence pass must train.
The complete computation costs 2^n - 1 subsets; a coalition's cost is
reported as a proportion of that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .dataset import AttributeSubset, Dataset
from .grouping import GROUPING_METHODS, Coalition

BISECTION_EPS = 1e-6


@dataclass(frozen=True)
class Closure:
    """Distinct non-empty subsets a coalitional influence pass evaluates."""

    masks: frozenset[int]
    n: int

    def __len__(self) -> int:
        return len(self.masks)

    def __contains__(self, s) -> bool:
        mask = s.mask if isinstance(s, AttributeSubset) else int(s)
        return mask in self.masks

    def subsets(self) -> Iterator[AttributeSubset]:
        for mask in sorted(self.masks):
            yield AttributeSubset(mask, self.n)


def closure(G: Coalition) -> Closure:
    """All non-empty subsets of every group, plus every singleton."""
    masks: set[int] = set()
    for g in G.groups:
        sub = g.mask
        while sub:  # enumerate non-empty submasks of the group
            masks.add(sub)
            sub = (sub - 1) & g.mask
    for i in range(G.n):
        masks.add(1 << i)
    return Closure(frozenset(masks), G.n)


def complexity_proportion(G: Coalition, n: int | None = None) -> float:
    """Closure size relative to the complete cost 2^n - 1."""
    n = G.n if n is None else n
    if n < 1:
        raise ValueError("n must be >= 1")
    return len(closure(G)) / float((1 << n) - 1)


@dataclass(frozen=True)
class ComplexityReport:
    closure_size: int
    complete_size: int
    proportion: float
    group_count: int
    mean_group_size: float

    @classmethod
    def from_coalition(cls, G: Coalition) -> "ComplexityReport":
        size = len(closure(G))
        complete = (1 << G.n) - 1
        sizes = [g.size for g in G.groups]
        return cls(
            closure_size=size,
            complete_size=complete,
            proportion=size / complete,
            group_count=len(G.groups),
            mean_group_size=sum(sizes) / len(sizes),
        )

    def to_dict(self) -> dict:
        return {
            "closure_size": self.closure_size,
            "complete_size": self.complete_size,
            "proportion": self.proportion,
            "group_count": self.group_count,
            "mean_group_size": self.mean_group_size,
        }


@dataclass(frozen=True)
class ThresholdSearchResult:
    """Outcome of the bisection over the grouping threshold."""

    threshold: float
    achieved: float
    coalition: Coalition
    converged: bool  # False means: closest achievable, target not met within tol
    probe_count: int


def find_threshold(method: str, d: Dataset, target: float,
                   max_iter: int = 20, tol: float = 0.02) -> ThresholdSearchResult:
    """Bisect the grouping threshold so the coalition costs ~``target`` of complete.

    Probes midpoints of a shrinking bracket inside (0, 0.5); stops once a
    probe lands within ``tol`` of the target or after ``max_iter`` probes.
    The returned threshold is the probe whose achieved proportion is closest
    to the target (ties favor the smaller threshold), flagged unconverged
    when even the best probe misses by more than ``tol``.  Complexity is not
    assumed perfectly monotone in the threshold; non-monotone steps merely
    steer the bracket, the closest-probe rule decides.
    """
    if method not in GROUPING_METHODS:
        raise ValueError(f"unknown grouping method {method!r}; choose from "
                         f"{sorted(GROUPING_METHODS)}")
    if not 0.0 < target <= 1.0:
        raise ValueError(f"target proportion must lie in (0, 1], got {target}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    grouping_fn = GROUPING_METHODS[method]
    lo, hi = BISECTION_EPS, 0.5 - BISECTION_EPS
    probes: list[tuple[float, float, Coalition]] = []
    for _ in range(max_iter):
        mid = (lo + hi) / 2.0
        G = grouping_fn(d, mid)
        achieved = complexity_proportion(G)
        probes.append((mid, achieved, G))
        if abs(achieved - target) <= tol:
            break
        if achieved < target:
            lo = mid
        else:
            hi = mid
    best_t, best_achieved, best_G = min(
        probes, key=lambda p: (abs(p[1] - target), p[0])
    )
    return ThresholdSearchResult(
        threshold=best_t,
        achieved=best_achieved,
        coalition=best_G,
        converged=abs(best_achieved - target) <= tol,
        probe_count=len(probes),
    )
