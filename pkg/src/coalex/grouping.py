"""Coalition extraction: which attributes should be explained together.

Data-driven methods read correlation structure straight off the dataset
(PCA loadings, variance inflation factors, Spearman rank correlation, and
"reverse" variants that gather weakly related attributes instead).  The
model-based method probes the trained classifier itself with structured
value randomization.  Every method returns a normalized
:class:`Coalition`: groups cover all attributes and no group is contained
in another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import AttributeSubset, Dataset
from .model import ModelSpec, SubsetModelCache, TrainedModelHandle, train

VIF_CAP = 1e6

# Membership-rule constants: the VIF ratio offset, the reverse-VIF damping
# of the threshold, and the correlation cut-offs below/above which an
# attribute keeps a singleton group.
VIF_MEMBERSHIP_OFFSET = 0.4
REV_VIF_DAMPING = 0.05
SPEARMAN_SINGLETON_MAX = 0.1
REV_SPEARMAN_SINGLETON_MIN = 0.5


@dataclass(frozen=True)
class GroupingConfig:
    """Shared knobs for the grouping methods."""

    threshold: float = 0.25
    delta: float = 0.1
    repetitions: int = 10
    seed: int = 0

    def __post_init__(self):
        _check_threshold(self.threshold)
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


@dataclass(frozen=True)
class Coalition:
    """A covering family of attribute groups."""

    groups: tuple[AttributeSubset, ...]
    n: int

    def __post_init__(self):
        for g in self.groups:
            if g.n != self.n:
                raise ValueError("group universe does not match the coalition")
            if g.size == 0:
                raise ValueError("coalition groups must be non-empty")
        ordered = tuple(sorted(set(self.groups), key=lambda g: g.indices()))
        object.__setattr__(self, "groups", ordered)

    @classmethod
    def from_index_sets(cls, sets: Iterable[Iterable[int]], n: int) -> "Coalition":
        return cls(tuple(AttributeSubset.from_indices(s, n) for s in sets), n)

    @classmethod
    def singletons(cls, n: int) -> "Coalition":
        return cls.from_index_sets([[i] for i in range(n)], n)

    @classmethod
    def full_group(cls, n: int) -> "Coalition":
        return cls((AttributeSubset.full(n),), n)

    def groups_containing(self, index: int) -> tuple[AttributeSubset, ...]:
        return tuple(g for g in self.groups if index in g)

    def covers_all(self) -> bool:
        mask = 0
        for g in self.groups:
            mask |= g.mask
        return mask == (1 << self.n) - 1

    def is_partition(self) -> bool:
        total = 0
        mask = 0
        for g in self.groups:
            total += g.size
            mask |= g.mask
        return mask == (1 << self.n) - 1 and total == self.n

    def index_sets(self) -> list[tuple[int, ...]]:
        return [g.indices() for g in self.groups]

    def to_json(self, d: Dataset | None = None, method: str | None = None,
                threshold: float | None = None) -> dict:
        if d is not None:
            groups = [[d.attribute_names[i] for i in g.indices()] for g in self.groups]
        else:
            groups = [list(g.indices()) for g in self.groups]
        out: dict = {"groups": groups}
        if method is not None:
            out["method"] = method
        if threshold is not None:
            out["threshold"] = threshold
        return out


def normalize(groups: Iterable[AttributeSubset | Iterable[int]], n: int) -> Coalition:
    """Canonical coalition: drop contained groups, cover every attribute.

    Any group that is a subset of another is removed (duplicates collapse),
    then a singleton is added for every attribute not covered.
    """
    masks = set()
    for g in groups:
        s = g if isinstance(g, AttributeSubset) else AttributeSubset.from_indices(g, n)
        if s.n != n:
            raise ValueError("group universe does not match n")
        if s.mask:
            masks.add(s.mask)
    kept = [m for m in masks if not any(m != o and m & ~o == 0 for o in masks)]
    covered = 0
    for m in kept:
        covered |= m
    for i in range(n):
        if not covered >> i & 1:
            kept.append(1 << i)
    return Coalition(tuple(AttributeSubset(m, n) for m in kept), n)


def _check_threshold(t: float) -> None:
    if not 0.0 < t < 0.5:
        raise ValueError(f"threshold must lie in (0, 0.5), got {t}")


# ---------------------------------------------------------------------------
# numeric kernels


def _average_ranks(col: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged."""
    order = np.argsort(col, kind="stable")
    sv = col[order]
    boundary = np.flatnonzero(sv[1:] != sv[:-1]) + 1
    starts = np.concatenate(([0], boundary))
    stops = np.concatenate((boundary, [len(sv)]))
    avg = (starts + stops + 1) / 2.0  # mean of 1-based ranks within each run
    ranks = np.empty(len(sv))
    ranks[order] = np.repeat(avg, stops - starts)
    return ranks


def spearman_matrix(d: Dataset) -> np.ndarray:
    """Absolute Spearman correlation of every attribute pair.

    Pearson correlation on average ranks; a constant column correlates 0
    with everything else while the diagonal stays 1.
    """
    if d.n_instances < 2:
        raise ValueError("Spearman correlation requires at least 2 instances")
    n = d.n_attributes
    ranks = np.empty((d.n_instances, n))
    constant = np.zeros(n, dtype=bool)
    for j in range(n):
        col = d.features[:, j]
        constant[j] = col.min() == col.max()
        ranks[:, j] = _average_ranks(col)
    corr = np.ones((n, n))
    if n > 1:
        with np.errstate(invalid="ignore", divide="ignore"):
            corr = np.abs(np.corrcoef(ranks, rowvar=False))
        corr = np.nan_to_num(corr, nan=0.0)
        corr[constant, :] = 0.0
        corr[:, constant] = 0.0
        np.clip(corr, 0.0, 1.0, out=corr)
        np.fill_diagonal(corr, 1.0)
    return corr


def standardized_features(d: Dataset) -> np.ndarray:
    """Columns centered and scaled to unit variance; constant columns become zero."""
    X = d.features
    mean = X.mean(axis=0)
    std = X.std(axis=0, ddof=0)
    out = np.zeros_like(X)
    nz = std > 0
    out[:, nz] = (X[:, nz] - mean[nz]) / std[nz]
    return out


def pca_loadings(d: Dataset) -> np.ndarray:
    """All principal-component loading vectors, by descending eigenvalue.

    Row k of the result holds component k's coefficient for each original
    attribute (eigenvectors of the covariance of the standardized columns).
    """
    if d.n_instances < 2:
        raise ValueError("PCA requires at least 2 instances")
    Z = standardized_features(d)
    cov = np.atleast_2d(np.cov(Z, rowvar=False))
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    return eigvecs[:, order].T.copy()


def vif_all(d: Dataset, s: AttributeSubset | None = None) -> np.ndarray:
    """Variance inflation factor of each attribute in ``s`` against the others.

    Ordinary least squares with an intercept; exact collinearity is capped
    at ``VIF_CAP`` instead of diverging, and singular designs fall back to
    the pseudo-inverse solution.  Values are aligned with the ascending
    attribute indices of ``s``.
    """
    if s is None:
        s = AttributeSubset.full(d.n_attributes)
    if s.n != d.n_attributes:
        raise ValueError("subset universe does not match the dataset")
    cols = list(s.indices())
    X = d.features[:, cols]
    m, q = X.shape
    out = np.empty(q)
    for a in range(q):
        target = X[:, a]
        ss_tot = float(np.sum((target - target.mean()) ** 2))
        if ss_tot <= 0.0:
            out[a] = 1.0  # constant column: no variance to inflate
            continue
        design = np.column_stack([np.ones(m), np.delete(X, a, axis=1)])
        beta, *_ = np.linalg.lstsq(design, target, rcond=None)
        resid = target - design @ beta
        r2 = 1.0 - float(resid @ resid) / ss_tot
        r2 = min(max(r2, 0.0), 1.0)
        out[a] = VIF_CAP if r2 >= 1.0 - 1e-6 else 1.0 / (1.0 - r2)
    return out


# ---------------------------------------------------------------------------
# membership rules (matrix/loadings in, raw groups out)


def groups_from_loadings(loadings: np.ndarray, t: float) -> list[set[int]]:
    """One candidate group per component: attributes loading close to the max."""
    groups = []
    for row in np.atleast_2d(np.abs(np.asarray(loadings, dtype=np.float64))):
        amax = row.max()
        if amax <= 0.0:
            continue
        groups.append({int(i) for i in np.flatnonzero(row >= amax * (1.0 - t))})
    return groups


def groups_from_correlation(corr: np.ndarray, t: float) -> list[set[int]]:
    """Per attribute: itself plus the partners nearly as correlated as its best.

    An attribute whose strongest partner stays at or below
    ``SPEARMAN_SINGLETON_MAX`` keeps a singleton group.
    """
    corr = np.asarray(corr, dtype=np.float64)
    n = corr.shape[0]
    groups = []
    for a in range(n):
        others = [b for b in range(n) if b != a]
        if not others:
            groups.append({a})
            continue
        row = corr[a, others]
        rowmax = row.max()
        if rowmax <= SPEARMAN_SINGLETON_MAX:
            groups.append({a})
            continue
        members = {a}
        members.update(b for b, v in zip(others, row) if v > rowmax * (1.0 - t))
        groups.append(members)
    return groups


def groups_from_correlation_reversed(corr: np.ndarray, t: float) -> list[set[int]]:
    """Per attribute: itself plus its least-correlated partners.

    An attribute whose weakest partner is still above
    ``REV_SPEARMAN_SINGLETON_MIN`` keeps a singleton group.
    """
    corr = np.asarray(corr, dtype=np.float64)
    n = corr.shape[0]
    groups = []
    for a in range(n):
        others = [b for b in range(n) if b != a]
        if not others:
            groups.append({a})
            continue
        row = corr[a, others]
        rowmin, rowmax = row.min(), row.max()
        if rowmin > REV_SPEARMAN_SINGLETON_MIN:
            groups.append({a})
            continue
        members = {a}
        members.update(b for b, v in zip(others, row) if v < rowmin + rowmax * t)
        groups.append(members)
    return groups


# ---------------------------------------------------------------------------
# grouping methods


def group_pca(d: Dataset, t: float) -> Coalition:
    _check_threshold(t)
    return normalize(groups_from_loadings(pca_loadings(d), t), d.n_attributes)


def group_spearman(d: Dataset, t: float) -> Coalition:
    _check_threshold(t)
    return normalize(groups_from_correlation(spearman_matrix(d), t), d.n_attributes)


def group_rev_spearman(d: Dataset, t: float) -> Coalition:
    _check_threshold(t)
    return normalize(groups_from_correlation_reversed(spearman_matrix(d), t), d.n_attributes)


def group_vif(d: Dataset, t: float) -> Coalition:
    """Group each attribute with those whose VIF collapses when it is removed."""
    _check_threshold(t)
    n = d.n_attributes
    if n == 1:
        return normalize([], 1)
    old = vif_all(d)
    groups = []
    for a in range(n):
        rest = AttributeSubset.full(n).without_index(a)
        rest_idx = rest.indices()
        new = vif_all(d, rest)
        members = {a}
        members.update(b for pos, b in enumerate(rest_idx)
                       if new[pos] < old[b] * (VIF_MEMBERSHIP_OFFSET + t))
        groups.append(members)
    return normalize(groups, n)


def group_rev_vif(d: Dataset, t: float) -> Coalition:
    """Group each attribute with those whose VIF it barely supports."""
    _check_threshold(t)
    n = d.n_attributes
    if n == 1:
        return normalize([], 1)
    old = vif_all(d)
    groups = []
    for a in range(n):
        rest = AttributeSubset.full(n).without_index(a)
        rest_idx = rest.indices()
        new = vif_all(d, rest)
        members = {a}
        members.update(b for pos, b in enumerate(rest_idx)
                       if new[pos] > old[b] * (1.0 - t * REV_VIF_DAMPING))
        groups.append(members)
    return normalize(groups, n)


GROUPING_METHODS = {
    "pca": group_pca,
    "spearman": group_spearman,
    "rev_spearman": group_rev_spearman,
    "vif": group_vif,
    "rev_vif": group_rev_vif,
}


# ---------------------------------------------------------------------------
# model-based grouping


def _as_partition(grouping, n: int) -> list[tuple[int, ...]]:
    if isinstance(grouping, Coalition):
        sets = grouping.index_sets()
    else:
        sets = [tuple(sorted(g.indices() if isinstance(g, AttributeSubset) else g))
                for g in grouping]
    seen: set[int] = set()
    for g in sets:
        for i in g:
            if i in seen or not 0 <= i < n:
                raise ValueError("grouping must be a partition of the attributes")
            seen.add(i)
    if seen != set(range(n)):
        raise ValueError("grouping must cover every attribute")
    return sorted((tuple(sorted(g)) for g in sets))


def _randomized_fidelity(d: Dataset, model: TrainedModelHandle,
                         class_groups: Sequence[Sequence[int]],
                         uniform_attrs: Sequence[int],
                         repetitions: int, seed: int) -> float:
    """Fidelity engine: class-constrained joint swaps vs free per-attribute swaps.

    Attributes in a ``class_groups`` entry jointly take the values of a donor
    instance the model predicts into the same class as the instance under
    test (a predicted class with a single member donates to itself); each
    attribute in ``uniform_attrs`` takes its value from a uniformly random
    instance.  Returns the fraction of unchanged predicted classes, averaged
    over seeded rounds.
    """
    X = d.features
    m = X.shape[0]
    pred = model.predict_classes(X)
    members_by_class = {c: np.flatnonzero(pred == c) for c in np.unique(pred)}
    group_cols = [np.array(g, dtype=np.intp) for g in sorted(tuple(sorted(g)) for g in class_groups)]
    free_cols = np.array(sorted(uniform_attrs), dtype=np.intp)
    scores = []
    for r in range(repetitions):
        rng = np.random.default_rng([seed, r])
        randomized = np.empty_like(X)
        for i in range(m):
            same_class = members_by_class[pred[i]]
            for g in group_cols:
                donor = same_class[rng.integers(0, same_class.shape[0])]
                randomized[i, g] = X[donor, g]
            for a in free_cols:
                randomized[i, a] = X[rng.integers(0, m), a]
        new_pred = model.predict_classes(randomized)
        scores.append(float(np.mean(new_pred == pred)))
    return float(np.mean(scores))


def fidelity(d: Dataset, model: TrainedModelHandle, grouping,
             repetitions: int = 10, seed: int = 0) -> float:
    """Fraction of instances whose predicted class survives group randomization.

    ``grouping`` must be a partition of the attributes.  Groups of two or
    more attributes are swapped jointly with a donor instance of the same
    predicted class; singleton attributes are swapped with uniformly random
    instances.
    """
    parts = _as_partition(grouping, d.n_attributes)
    class_groups = [g for g in parts if len(g) >= 2]
    uniform_attrs = [g[0] for g in parts if len(g) == 1]
    return _randomized_fidelity(d, model, class_groups, uniform_attrs, repetitions, seed)


def group_model_based(d: Dataset, spec: ModelSpec, delta: float,
                      repetitions: int = 10, seed: int = 0,
                      cache: SubsetModelCache | None = None) -> Coalition:
    """Greedy fidelity-driven grouping against the trained full model.

    Starting from all attributes as one candidate group, repeatedly move out
    the attribute whose removal hurts fidelity least, as long as fidelity
    stays at least ``delta`` above the all-singletons baseline; the survivor
    becomes a group and the removed attributes are re-examined.  Attributes
    never reaching the bar end up as singletons.
    """
    if delta <= 0:
        raise ValueError("delta must be > 0")
    n = d.n_attributes
    full = AttributeSubset.full(n)
    if cache is not None:
        handle = cache.get_or_train(spec, d, full)
    else:
        handle = train(spec, d, full)

    fid_memo: dict[frozenset[int], float] = {}

    def fid_with_group(group: frozenset[int]) -> float:
        # Candidate group class-constrained even when it has shrunk to one
        # attribute; everything outside it is swapped freely.
        value = fid_memo.get(group)
        if value is None:
            class_groups = [tuple(sorted(group))] if group else []
            uniform = [j for j in range(n) if j not in group]
            value = _randomized_fidelity(d, handle, class_groups, uniform,
                                         repetitions, seed)
            fid_memo[group] = value
        return value

    baseline = fid_with_group(frozenset())
    bar = baseline + delta
    sigma: list[set[int]] = []
    R = list(range(n))
    A: list[int] = []
    while R or A:
        if not A and fid_with_group(frozenset(R)) < bar:
            sigma.extend({j} for j in R)
            break
        if len(R) == 1:
            sigma.append(set(R))
            R, A = A, []
            continue
        best_j, best_fid = -1, -math.inf
        for j in R:
            f = fid_with_group(frozenset(R) - {j})
            if f > best_fid:
                best_j, best_fid = j, f
        if best_fid < bar:
            sigma.append(set(R))
            R, A = A, []
        else:
            R.remove(best_j)
            A.append(best_j)
    return normalize(sigma, n)
