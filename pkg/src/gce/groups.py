"""Group assignment in representation space, per-group means, and calibration
of the squared-distance threshold used by the explanation metrics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset
from .errors import DataError
from .models import ReprModel, forward_batch

SELF_SIMILARITY_FLOOR = 0.95
KMEANS_MAX_ITER = 300
KMEANS_RETRIES = 8


@dataclass(frozen=True)
class Grouping:
    """Integer group label per point; -1 marks unassigned rows."""

    labels: np.ndarray
    n_groups: int

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=int)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise DataError("labels must be a flat vector")
        if self.n_groups < 2:
            raise DataError(f"need at least 2 groups, got {self.n_groups}")
        bad = labels[(labels < -1) | (labels >= self.n_groups)]
        if bad.size:
            raise DataError(f"labels outside [-1, {self.n_groups}): {sorted(set(bad))}")
        counts = np.bincount(labels[labels >= 0], minlength=self.n_groups)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            raise DataError(f"groups with no members: {empty.tolist()}")

    def members(self, group: int) -> np.ndarray:
        if not 0 <= group < self.n_groups:
            raise DataError(f"group id {group} out of range [0, {self.n_groups})")
        return np.flatnonzero(self.labels == group)


@dataclass(frozen=True)
class GroupStats:
    """Feature-space means, representation-space means (mean of images, not
    image of the mean), and member counts per group."""

    x_bar: np.ndarray  # (l, d)
    r_bar: np.ndarray  # (l, m)
    counts: np.ndarray  # (l,)

    @property
    def n_groups(self) -> int:
        return self.x_bar.shape[0]

    @property
    def d(self) -> int:
        return self.x_bar.shape[1]


def load_labels(path: str | Path, n_rows: int) -> np.ndarray:
    """Read one integer label per line, row-aligned with the dataset."""
    path = Path(path)
    try:
        lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise DataError(f"cannot read labels file {path}: {exc}") from exc
    try:
        labels = np.array([int(ln) for ln in lines], dtype=int)
    except ValueError as exc:
        raise DataError(f"labels file {path} has a non-integer line: {exc}") from exc
    if labels.size != n_rows:
        raise DataError(f"{labels.size} labels for {n_rows} dataset rows")
    return labels


def _kmeans_once(reps: np.ndarray, k: int, rng) -> np.ndarray | None:
    n = reps.shape[0]
    # k-means++ seeding
    centers = np.empty((k, reps.shape[1]))
    centers[0] = reps[rng.integers(n)]
    closest = np.sum((reps - centers[0]) ** 2, axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total == 0.0:
            centers[c] = reps[rng.integers(n)]
        else:
            centers[c] = reps[rng.choice(n, p=closest / total)]
        closest = np.minimum(closest, np.sum((reps - centers[c]) ** 2, axis=1))

    labels = np.full(n, -1, dtype=int)
    for _ in range(KMEANS_MAX_ITER):
        dists = np.sum((reps[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
        new_labels = np.argmin(dists, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            mask = labels == c
            if not mask.any():
                return None  # empty cluster: caller retries with a new seed
            centers[c] = reps[mask].mean(axis=0)
    return labels


def _relabel_by_first_occurrence(labels: np.ndarray, k: int) -> np.ndarray:
    mapping = {}
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
        if len(mapping) == k:
            break
    return np.array([mapping[lab] for lab in labels], dtype=int)


def assign_groups(
    reps: np.ndarray,
    *,
    k: int | None = None,
    seed: int = 0,
    labels: np.ndarray | None = None,
) -> Grouping:
    """Build a Grouping either from user labels or by seeded k-means.

    k-means is Lloyd's algorithm with k-means++ initialization and is
    deterministic per seed; clusters are renumbered by first occurrence.  If
    a cluster empties, the run restarts with a derived seed a bounded number
    of times before failing.
    """
    reps = np.asarray(reps, dtype=float)
    if reps.ndim != 2 or reps.shape[0] < 2:
        raise DataError(f"need an (n>=2, m) representation matrix, got {reps.shape}")

    if labels is not None:
        labels = np.asarray(labels, dtype=int)
        if labels.shape != (reps.shape[0],):
            raise DataError(f"{labels.size} labels for {reps.shape[0]} rows")
        assigned = labels[labels >= 0]
        if assigned.size == 0:
            raise DataError("labels assign no points to any group")
        return Grouping(labels, int(assigned.max()) + 1)

    if k is None:
        raise DataError("either labels or a k-means cluster count is required")
    if not 2 <= k <= reps.shape[0]:
        raise DataError(f"k must be in [2, {reps.shape[0]}], got {k}")

    seq = np.random.SeedSequence(seed)
    for child in seq.spawn(KMEANS_RETRIES):
        result = _kmeans_once(reps, k, np.random.default_rng(child))
        if result is not None:
            return Grouping(_relabel_by_first_occurrence(result, k), k)
    raise DataError(f"k-means produced an empty cluster in {KMEANS_RETRIES} attempts")


def group_stats(data: Dataset, grouping: Grouping, model: ReprModel) -> GroupStats:
    """Per-group means in feature space and representation space."""
    if grouping.labels.size != data.n:
        raise DataError(f"{grouping.labels.size} labels for {data.n} rows")
    reps = forward_batch(model, data.rows)
    l = grouping.n_groups
    x_bar = np.empty((l, data.d))
    r_bar = np.empty((l, reps.shape[1]))
    counts = np.empty(l, dtype=int)
    for i in range(l):
        idx = grouping.members(i)
        x_bar[i] = data.rows[idx].mean(axis=0)
        r_bar[i] = reps[idx].mean(axis=0)
        counts[i] = idx.size
    return GroupStats(x_bar, r_bar, counts)


def _nearest_neighbor_sq_dists(points: np.ndarray) -> np.ndarray:
    """Per point, the squared distance to its nearest *other* point."""
    dists = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(dists, np.inf)
    return dists.min(axis=1)


def self_similarities(reps: np.ndarray, grouping: Grouping, epsilon: float) -> np.ndarray:
    """Fraction of each group's points with another group member within
    squared distance epsilon (the point itself is excluded)."""
    reps = np.asarray(reps, dtype=float)
    values = np.empty(grouping.n_groups)
    for i in range(grouping.n_groups):
        nn = _nearest_neighbor_sq_dists(reps[grouping.members(i)])
        values[i] = float(np.mean(nn <= epsilon))
    return values


def default_epsilon_grid(reps: np.ndarray, num: int = 60) -> np.ndarray:
    """Log-spaced candidate thresholds scaled by the representation's
    squared diameter."""
    reps = np.asarray(reps, dtype=float)
    scale = float(np.max(np.sum((reps[:, None, :] - reps[None, :, :]) ** 2, axis=-1)))
    if scale == 0.0:
        scale = 1.0
    return scale * np.logspace(-6.0, 2.0, num)


def calibrate_epsilon(
    reps: np.ndarray, grouping: Grouping, grid: np.ndarray
) -> float:
    """Smallest grid value for which every group's self-similarity reaches
    the 0.95 floor (self-similarity never exceeds 1 by construction)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DataError("epsilon grid is empty")
    if (grid <= 0).any() or (np.diff(grid) <= 0).any():
        raise DataError("epsilon grid must be strictly ascending and positive")

    reps = np.asarray(reps, dtype=float)
    per_group_nn = [
        _nearest_neighbor_sq_dists(reps[grouping.members(i)])
        for i in range(grouping.n_groups)
    ]
    best = -1.0
    for eps in grid:
        worst = min(float(np.mean(nn <= eps)) for nn in per_group_nn)
        if worst >= SELF_SIMILARITY_FLOOR:
            return float(eps)
        best = max(best, worst)
    raise DataError(
        f"epsilon grid exhausted: best minimum self-similarity {best:.4f} "
        f"< {SELF_SIMILARITY_FLOOR}"
    )
