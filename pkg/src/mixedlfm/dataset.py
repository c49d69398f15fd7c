"""Containers for mixed-type tabular data and latent structure.

A dataset is an N x D table in which every column carries one of five
attribute kinds:

* ``real``     -- unbounded real values
* ``posreal``  -- strictly positive real values
* ``cat``      -- categorical, a value from a finite unordered label set
* ``ord``      -- ordinal, a value from a finite ordered label set
* ``count``    -- non-negative integers

Categorical and ordinal cells are stored as 1-based integer indices into
the column's label table; counts as unsigned 64-bit integers; reals as
64-bit floats.  Missing cells are representable for every kind via the
boolean mask.  All containers are immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

REAL = "real"
POSREAL = "posreal"
CATEGORICAL = "cat"
ORDINAL = "ord"
COUNT = "count"

KINDS = (REAL, POSREAL, CATEGORICAL, ORDINAL, COUNT)

#: kinds whose cells are 1-based indices into a label table
LABELED_KINDS = (CATEGORICAL, ORDINAL)

#: kinds modeled through an interval / threshold construction
DISCRETE_KINDS = (CATEGORICAL, ORDINAL, COUNT)


@dataclass(frozen=True)
class AttributeType:
    """Type tag of one attribute (column).

    ``labels`` is required for categorical and ordinal kinds and must hold
    at least two distinct entries; ordinal labels are interpreted in their
    declared order.  The other kinds carry no parameters.
    """

    kind: str
    labels: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attribute kind {self.kind!r}")
        if self.kind in LABELED_KINDS:
            if self.labels is None or len(self.labels) < 2:
                raise ValueError(f"{self.kind} attributes need >= 2 labels")
            if len(set(self.labels)) != len(self.labels):
                raise ValueError(f"{self.kind} labels must be distinct")
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        elif self.labels is not None:
            raise ValueError(f"{self.kind} attributes carry no labels")

    @property
    def n_categories(self) -> int:
        """Number of categories/levels R (labeled kinds only)."""
        if self.labels is None:
            raise ValueError(f"{self.kind} has no category count")
        return len(self.labels)

    @property
    def is_discrete(self) -> bool:
        return self.kind in DISCRETE_KINDS

    @property
    def is_continuous(self) -> bool:
        return self.kind in (REAL, POSREAL)


def real() -> AttributeType:
    return AttributeType(REAL)


def positive_real() -> AttributeType:
    return AttributeType(POSREAL)


def categorical(labels: Iterable[str]) -> AttributeType:
    return AttributeType(CATEGORICAL, tuple(labels))


def ordinal(labels: Iterable[str]) -> AttributeType:
    return AttributeType(ORDINAL, tuple(labels))


def count() -> AttributeType:
    return AttributeType(COUNT)


_COLUMN_DTYPE = {
    REAL: np.float64,
    POSREAL: np.float64,
    CATEGORICAL: np.int64,
    ORDINAL: np.int64,
    COUNT: np.uint64,
}


@dataclass(frozen=True)
class HeterogeneousDataset:
    """Immutable N x D table of mixed-type observations.

    ``columns[d]`` is a length-N array in the column's native dtype
    (float64 for real/posreal, int64 for cat/ord indices, uint64 for
    counts).  ``missing[n, d]`` is True iff cell (n, d) is absent; the
    stored value of a missing cell is unspecified and must not be read.
    """

    columns: tuple[np.ndarray, ...]
    missing: np.ndarray
    types: tuple[AttributeType, ...]
    names: tuple[str, ...]

    def __post_init__(self):
        if not (len(self.columns) == len(self.types) == len(self.names)):
            raise ValueError("columns, types and names must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("attribute names must be unique")
        n = self.columns[0].shape[0] if self.columns else 0
        for col in self.columns:
            if col.ndim != 1 or col.shape[0] != n:
                raise ValueError("all columns must be 1-d of equal length")
        if self.missing.shape != (n, len(self.columns)):
            raise ValueError("missing mask must be N x D")
        for col in self.columns:
            col.setflags(write=False)
        self.missing.setflags(write=False)

    @property
    def n_objects(self) -> int:
        return self.columns[0].shape[0] if self.columns else 0

    @property
    def n_attributes(self) -> int:
        return len(self.columns)

    def observed(self, d: int) -> np.ndarray:
        """Non-missing values of column ``d`` in native dtype."""
        return self.columns[d][~self.missing[:, d]]

    def column_as_float(self, d: int) -> np.ndarray:
        """Column ``d`` as float64 with missing cells set to NaN."""
        out = self.columns[d].astype(np.float64)
        out[self.missing[:, d]] = np.nan
        return out


def make_dataset(
    columns: Iterable[Iterable],
    types: Iterable[AttributeType],
    names: Iterable[str],
    missing: Optional[np.ndarray] = None,
) -> HeterogeneousDataset:
    """Build a dataset, coercing each column to its native dtype.

    ``columns`` may contain NaN/None entries, which are recorded as
    missing (in addition to anything flagged in ``missing``).
    """
    types = tuple(types)
    names = tuple(str(s) for s in names)
    cols = []
    raw = [list(c) for c in columns]
    n = len(raw[0]) if raw else 0
    mask = np.zeros((n, len(raw)), dtype=bool) if missing is None else np.array(missing, dtype=bool, copy=True)
    for d, (vals, t) in enumerate(zip(raw, types)):
        arr = np.zeros(n, dtype=_COLUMN_DTYPE[t.kind])
        for i, v in enumerate(vals):
            if v is None or (isinstance(v, float) and np.isnan(v)):
                mask[i, d] = True
                continue
            if mask[i, d]:
                continue
            arr[i] = v
        cols.append(arr)
    return HeterogeneousDataset(tuple(cols), mask, types, names)


@dataclass(frozen=True)
class Violation:
    """One cell (or column) that breaks its declared type."""

    row: int
    column: int
    reason: str


def validate(dataset: HeterogeneousDataset) -> list[Violation]:
    """Check every non-missing cell against its column's type.

    Returns an empty list iff the dataset conforms.  Violations are data,
    not failures: an all-missing column is legal here and rejected only at
    fit time.
    """
    out: list[Violation] = []
    for d, t in enumerate(dataset.types):
        col = dataset.columns[d]
        obs = ~dataset.missing[:, d]
        rows = np.nonzero(obs)[0]
        vals = col[rows]
        if t.kind == REAL:
            bad = ~np.isfinite(vals)
            reason = "real cell is not finite"
        elif t.kind == POSREAL:
            bad = ~(np.isfinite(vals) & (vals > 0))
            reason = "positive-real cell must be > 0"
        elif t.kind == COUNT:
            # uint64 storage already guarantees integrality and sign
            bad = np.zeros(len(vals), dtype=bool)
            reason = ""
        else:
            r = t.n_categories
            bad = (vals < 1) | (vals > r)
            reason = f"index outside 1..{r}"
        for i in np.nonzero(bad)[0]:
            out.append(Violation(int(rows[i]), d, reason))
    return out


@dataclass(frozen=True)
class ColumnSummary:
    """Per-column statistics over the non-missing cells."""

    minimum: float
    maximum: float
    mean: float
    category_frequencies: Optional[dict[int, float]]
    missing_fraction: float


def column_summary(dataset: HeterogeneousDataset, d: int) -> ColumnSummary:
    """Summarize column ``d``; raises on an all-missing column.

    Category frequencies (labeled kinds only) are relative frequencies
    over the observed cells and sum to 1.
    """
    if not 0 <= d < dataset.n_attributes:
        raise IndexError(f"attribute index {d} out of range")
    obs = dataset.observed(d).astype(np.float64)
    n = dataset.n_objects
    if obs.size == 0:
        raise ValueError(f"no data in column {dataset.names[d]!r}")
    freqs = None
    if dataset.types[d].kind in LABELED_KINDS:
        r = dataset.types[d].n_categories
        counts = np.bincount(dataset.observed(d).astype(np.int64), minlength=r + 1)[1:]
        freqs = {k + 1: counts[k] / obs.size for k in range(r)}
    return ColumnSummary(
        minimum=float(obs.min()),
        maximum=float(obs.max()),
        mean=float(obs.mean()),
        category_frequencies=freqs,
        missing_fraction=float(n - obs.size) / n,
    )


@dataclass(frozen=True)
class LatentMatrix:
    """Binary feature matrix Z with a leading all-ones bias column.

    Shape (N, 1+K): column 0 is the bias feature, active for every object;
    every non-bias column has at least one active entry.
    """

    z: np.ndarray

    def __post_init__(self):
        z = np.ascontiguousarray(self.z, dtype=np.uint8)
        object.__setattr__(self, "z", z)
        if z.ndim != 2 or z.shape[1] < 1:
            raise ValueError("Z must be N x (1+K)")
        if not np.all((z == 0) | (z == 1)):
            raise ValueError("Z entries must be binary")
        if not np.all(z[:, 0] == 1):
            raise ValueError("bias column must be all ones")
        if z.shape[1] > 1 and np.any(z[:, 1:].sum(axis=0) == 0):
            raise ValueError("empty non-bias columns must be pruned")
        z.setflags(write=False)

    @property
    def n_objects(self) -> int:
        return self.z.shape[0]

    @property
    def n_features(self) -> int:
        """Number of non-bias features K."""
        return self.z.shape[1] - 1


@dataclass(frozen=True)
class Hyperparameters:
    """Sampler configuration and model hyperparameters.

    ``alpha`` is the feature-process mass parameter (expected number of
    features alpha * H_N); ``sigma_b_sq`` the weight prior variance;
    ``sigma_u_sq`` the small auxiliary noise variance added before the
    observation map.  With ``sample_alpha`` on, alpha gets a conjugate
    Gamma(shape, rate) resampling step.
    """

    alpha: float = 1.0
    sigma_b_sq: float = 1.0
    sigma_u_sq: float = 0.01
    sample_alpha: bool = True
    alpha_prior: tuple[float, float] = (1.0, 1.0)
    k_new_max: int = 3
    k_init: int = 1
    n_iterations: int = 1000
    burn_in: int = 500
    thinning: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if self.sigma_b_sq <= 0:
            raise ValueError("sigma_b_sq must be > 0")
        if not 0 < self.sigma_u_sq < 1:
            raise ValueError("sigma_u_sq must lie in (0, 1)")
        a, b = self.alpha_prior
        if a <= 0 or b <= 0:
            raise ValueError("alpha_prior shape and rate must be > 0")
        if self.k_new_max < 1:
            raise ValueError("k_new_max must be >= 1")
        if self.k_init < 0:
            raise ValueError("k_init must be >= 0")
        if self.burn_in >= self.n_iterations:
            raise ValueError("burn_in must be < n_iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")

    @property
    def n_retained(self) -> int:
        return (self.n_iterations - self.burn_in) // self.thinning
