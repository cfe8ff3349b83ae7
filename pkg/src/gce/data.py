"""Datasets: synthetic generation, CSV ingestion, standardization, and the
group-perturbation harness used to validate recovered explanations."""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

SYNTH_FEATURE_NAMES = ("x1", "x2", "x3", "x4")


@dataclass(frozen=True)
class Standardization:
    """Per-feature (mean, std) of the transform that was applied to a dataset.

    Features that were constant keep std 1.0 and are flagged in `constant`.
    """

    means: np.ndarray
    stds: np.ndarray
    constant: np.ndarray

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "stds": self.stds.tolist(),
            "constant": [bool(c) for c in self.constant],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardization":
        return cls(
            means=np.asarray(d["means"], dtype=float),
            stds=np.asarray(d["stds"], dtype=float),
            constant=np.asarray(d["constant"], dtype=bool),
        )


@dataclass
class Dataset:
    """An n x d numeric table with named features.

    `standardization` records the z-scoring that produced `rows`, if any,
    so translations can be mapped back to raw units.
    """

    rows: np.ndarray
    feature_names: tuple[str, ...]
    standardization: Standardization | None = None

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2:
            raise DataError(f"dataset rows must be 2-D, got shape {self.rows.shape}")
        if not np.isfinite(self.rows).all():
            raise DataError("dataset contains non-finite entries")
        self.feature_names = tuple(self.feature_names)
        if len(self.feature_names) != self.rows.shape[1]:
            raise DataError(
                f"{len(self.feature_names)} feature names for {self.rows.shape[1]} columns"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


def generate_synthetic(seed: int, n: int = 400) -> tuple[Dataset, np.ndarray]:
    """Generate the four-feature causal benchmark dataset.

    x1, x2 are noisy coin flips that jointly define four groups, x3 is pure
    noise, and x4 tracks x1 with small extra noise (correlated but not
    causal).  Returns the dataset and ground-truth group labels
    2*round(clamp(x1)) + round(clamp(x2)), used for validation only.
    """
    if n < 4:
        raise DataError(f"need n >= 4 synthetic points, got {n}")
    rng = np.random.default_rng(seed)
    x1 = rng.integers(0, 2, size=n).astype(float) + rng.normal(0.0, 0.2, size=n)
    x2 = rng.integers(0, 2, size=n).astype(float) + rng.normal(0.0, 0.2, size=n)
    x3 = rng.normal(0.0, 0.5, size=n)
    x4 = x1 + rng.normal(0.0, 0.05, size=n)
    rows = np.column_stack([x1, x2, x3, x4])
    labels = (
        2 * np.rint(np.clip(x1, 0.0, 1.0)) + np.rint(np.clip(x2, 0.0, 1.0))
    ).astype(int)
    return Dataset(rows, SYNTH_FEATURE_NAMES), labels


def load_csv(path: str | Path, has_header: bool = True) -> Dataset:
    """Load a rectangular numeric CSV; rejects ragged rows and missing values."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    reader = csv.reader(text.splitlines())
    raw_rows = [row for row in reader if row]
    if not raw_rows:
        raise DataError(f"{path}: empty file")

    if has_header:
        names = tuple(cell.strip() for cell in raw_rows[0])
        body = raw_rows[1:]
        first_line = 2
    else:
        names = tuple(f"f{i}" for i in range(len(raw_rows[0])))
        body = raw_rows
        first_line = 1
    if not body:
        raise DataError(f"{path}: no data rows")

    width = len(names)
    parsed = np.empty((len(body), width), dtype=float)
    for r, row in enumerate(body):
        line = first_line + r
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            if not cell:
                raise DataError(f"{path}: missing value at row {line}, column {c + 1}")
            try:
                value = float(cell)
            except ValueError as exc:
                raise DataError(
                    f"{path}: non-numeric cell {cell!r} at row {line}, column {c + 1}"
                ) from exc
            if not np.isfinite(value):
                raise DataError(
                    f"{path}: non-finite value {cell!r} at row {line}, column {c + 1}"
                )
            parsed[r, c] = value
    return Dataset(parsed, names)


def standardize(data: Dataset) -> Dataset:
    """Z-score each feature, recording the transform for later inversion.

    Constant features are passed through with std treated as 1 and flagged.
    """
    means = data.rows.mean(axis=0)
    stds = data.rows.std(axis=0)
    constant = stds == 0.0
    if constant.any():
        names = [data.feature_names[i] for i in np.flatnonzero(constant)]
        warnings.warn(f"constant features left unscaled: {names}", stacklevel=2)
    stds = np.where(constant, 1.0, stds)
    rows = (data.rows - means) / stds
    return Dataset(rows, data.feature_names, Standardization(means, stds, constant))


def translation_to_raw(delta: np.ndarray, standardization: Standardization) -> np.ndarray:
    """Map a translation expressed in standardized units back to raw units."""
    return np.asarray(delta, dtype=float) * standardization.stds


def translation_to_standardized(
    delta: np.ndarray, standardization: Standardization
) -> np.ndarray:
    """Map a raw-unit translation into standardized units."""
    return np.asarray(delta, dtype=float) / standardization.stds


@dataclass(frozen=True)
class Edit:
    feature: int
    offset: float
    jitter: float = 0.0

    def __post_init__(self) -> None:
        if self.jitter < 0:
            raise DataError(f"jitter must be nonnegative, got {self.jitter}")


@dataclass(frozen=True)
class PerturbationSpec:
    """Which group to copy and which feature offsets (plus uniform jitter)
    to apply to the copy before appending it as a new group."""

    group: int
    edits: tuple[Edit, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        features = [e.feature for e in self.edits]
        if len(set(features)) != len(features):
            raise DataError("perturbation edits must target distinct features")

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "edits": [
                {"feature": e.feature, "offset": e.offset, "jitter": e.jitter}
                for e in self.edits
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PerturbationSpec":
        return cls(
            group=int(d["group"]),
            edits=tuple(
                Edit(int(e["feature"]), float(e["offset"]), float(e.get("jitter", 0.0)))
                for e in d["edits"]
            ),
        )


def modify_dataset(data: Dataset, grouping, spec: PerturbationSpec, seed: int):
    """Append a perturbed copy of one group as a new group.

    Each edited feature of the copied rows gets offset + Uniform(-jitter,
    jitter) noise; all other cells are copied verbatim and the original rows
    are untouched.  Returns the extended dataset and a grouping where the
    copy carries a fresh label.
    """
    from .groups import Grouping  # local import to avoid a cycle

    members = np.flatnonzero(grouping.labels == spec.group)
    if members.size == 0:
        raise DataError(f"perturbation group {spec.group} has no members")
    for edit in spec.edits:
        if not 0 <= edit.feature < data.d:
            raise DataError(f"perturbation feature index {edit.feature} out of range")

    rng = np.random.default_rng(seed)
    copied = data.rows[members].copy()
    for edit in spec.edits:
        noise = rng.uniform(-edit.jitter, edit.jitter, size=members.size)
        copied[:, edit.feature] += edit.offset + noise

    new_rows = np.vstack([data.rows, copied])
    new_label = grouping.n_groups
    new_labels = np.concatenate(
        [grouping.labels, np.full(members.size, new_label, dtype=int)]
    )
    extended = Dataset(new_rows, data.feature_names, data.standardization)
    return extended, Grouping(new_labels, new_label + 1)


@dataclass(frozen=True)
class PairComparison:
    i: int
    j: int
    scale: float
    scaled_diff: np.ndarray | None

    @property
    def comparable(self) -> bool:
        return self.scaled_diff is not None


COMPARISON_SCALE_RULE = "max-abs-original-entry"


def compare_explanations(original, other, pairs) -> list[PairComparison]:
    """Elementwise |other - original| per pair, scaled by the largest
    absolute entry of the original translation.

    Pairs whose original translation is identically zero are reported as
    incomparable instead of dividing by zero.
    """
    from .explain import construct

    if original.d != other.d:
        raise DataError(
            f"explanation dimensions differ: {original.d} vs {other.d}"
        )
    results = []
    for i, j in pairs:
        base = construct(original, i, j)
        alt = construct(other, i, j)
        scale = float(np.max(np.abs(base)))
        if scale == 0.0:
            results.append(PairComparison(i, j, 0.0, None))
        else:
            results.append(PairComparison(i, j, scale, np.abs(alt - base) / scale))
    return results
