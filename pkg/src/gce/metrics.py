"""Quality metrics for translation explanations: correctness, coverage,
the feature-overlap similarity score, and pairwise report aggregation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import DataError
from .groups import Grouping
from .models import ReprModel, forward_batch


def _sq_dists(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    # broadcast difference keeps per-pair arithmetic identical to a plain
    # double loop, so optimized and brute-force results match exactly
    return np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)


def _fraction_within(
    src: np.ndarray, dst: np.ndarray, epsilon: float, exclude_diagonal: bool
) -> float:
    dists = _sq_dists(src, dst)
    if exclude_diagonal:
        np.fill_diagonal(dists, np.inf)
    return float(np.mean(dists.min(axis=1) <= epsilon))


def _check_pair_args(grouping: Grouping, i: int, j: int, delta: np.ndarray) -> np.ndarray:
    delta = np.asarray(delta, dtype=float)
    if i == j and np.any(delta != 0.0):
        raise DataError("i == j is only valid with a zero translation (self-similarity)")
    return delta


def correctness(
    model: ReprModel,
    data: Dataset,
    grouping: Grouping,
    i: int,
    j: int,
    delta: np.ndarray,
    epsilon: float,
) -> float:
    """Fraction of group i's translated points that land within squared
    distance epsilon of some group j point in representation space.

    With i == j and a zero translation this is the self-similarity of the
    group; the point itself is excluded as a candidate match.
    """
    delta = _check_pair_args(grouping, i, j, delta)
    src = forward_batch(model, data.rows[grouping.members(i)] + delta)
    dst = forward_batch(model, data.rows[grouping.members(j)])
    return _fraction_within(src, dst, epsilon, exclude_diagonal=(i == j))


def coverage(
    model: ReprModel,
    data: Dataset,
    grouping: Grouping,
    i: int,
    j: int,
    delta: np.ndarray,
    epsilon: float,
) -> float:
    """Fraction of group j's points that have some translated group i point
    within squared distance epsilon in representation space."""
    delta = _check_pair_args(grouping, i, j, delta)
    targets = forward_batch(model, data.rows[grouping.members(j)])
    translated = forward_batch(model, data.rows[grouping.members(i)] + delta)
    return _fraction_within(targets, translated, epsilon, exclude_diagonal=(i == j))


def similarity(e1: np.ndarray, e2: np.ndarray) -> float:
    """Share of e1's l1 mass carried by features that e2 also uses.

    1 means e1's support is contained in e2's; 0 means the supports are
    disjoint.  Undefined (raises) for an all-zero e1.
    """
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    if e1.shape != e2.shape:
        raise DataError(f"explanation shapes differ: {e1.shape} vs {e2.shape}")
    weights = np.abs(e1)
    total = weights.sum()
    if total == 0.0:
        raise DataError("similarity is undefined for an all-zero explanation")
    # summing the full-length masked array keeps the summation order
    # identical to the denominator's, so nested supports score exactly 1
    shared = np.sum(np.where(e2 != 0.0, weights, 0.0))
    return float(shared / total)


@dataclass(frozen=True)
class MetricsReport:
    """Pairwise correctness/coverage matrices at a fixed epsilon.

    Diagonal entries are group self-similarities; averages are taken over
    ordered pairs i != j.
    """

    correctness: np.ndarray
    coverage: np.ndarray
    epsilon: float
    avg_correctness: float
    avg_coverage: float

    @property
    def n_groups(self) -> int:
        return self.correctness.shape[0]

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "correctness": self.correctness.tolist(),
            "coverage": self.coverage.tolist(),
            "avg_correctness": self.avg_correctness,
            "avg_coverage": self.avg_coverage,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            correctness=np.asarray(d["correctness"], dtype=float),
            coverage=np.asarray(d["coverage"], dtype=float),
            epsilon=float(d["epsilon"]),
            avg_correctness=float(d["avg_correctness"]),
            avg_coverage=float(d["avg_coverage"]),
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["i", "j", "correctness", "coverage"])
        l = self.n_groups
        for i in range(l):
            for j in range(l):
                writer.writerow(
                    [i, j, repr(float(self.correctness[i, j])), repr(float(self.coverage[i, j]))]
                )
        return buf.getvalue()


def _off_diagonal_mean(matrix: np.ndarray) -> float:
    l = matrix.shape[0]
    mask = ~np.eye(l, dtype=bool)
    return float(matrix[mask].mean())


def pairwise_report(
    model: ReprModel,
    data: Dataset,
    grouping: Grouping,
    explanations,
    epsilon: float,
    k: int | None = None,
) -> MetricsReport:
    """Fill the l x l correctness/coverage matrices from an explanation set.

    Off-diagonal cells use the constructed (optionally k-thresholded)
    pairwise translation; the diagonal holds self-similarities.
    """
    from .explain import construct, threshold_k

    l = grouping.n_groups
    if explanations.n_groups != l:
        raise DataError(
            f"explanation set covers {explanations.n_groups} groups, grouping has {l}"
        )
    cr = np.empty((l, l))
    cv = np.empty((l, l))
    zero = np.zeros(data.d)
    for i in range(l):
        for j in range(l):
            if i == j:
                value = correctness(model, data, grouping, i, i, zero, epsilon)
                cr[i, j] = value
                cv[i, j] = value
            else:
                delta = construct(explanations, i, j)
                if k is not None:
                    delta = threshold_k(delta, k)
                cr[i, j] = correctness(model, data, grouping, i, j, delta, epsilon)
                cv[i, j] = coverage(model, data, grouping, i, j, delta, epsilon)
    return MetricsReport(
        correctness=cr,
        coverage=cv,
        epsilon=float(epsilon),
        avg_correctness=_off_diagonal_mean(cr),
        avg_coverage=_off_diagonal_mean(cv),
    )
