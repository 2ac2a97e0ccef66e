"""Dataset ingestion, imputation, synthetic generation and splitting.

CSV schema: a header row; the reserved columns ``time`` (positive real) and
``event`` (integer, 0 = censored, m >= 1 = risk m); every other column is a
feature.  Numeric columns parse as floats; any other column is treated as
categorical and one-hot encoded with category order fixed by first
appearance in the file.

All randomness derives from named streams spawned off a single 64-bit seed
(:func:`derive_rng`), so datasets regenerate identically across runs and
platforms.
"""

from __future__ import annotations

import csv
import zlib
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "MISSING_TOKENS",
    "ColumnSpec",
    "SurvivalDataset",
    "Imputer",
    "impute",
    "load_csv",
    "write_csv",
    "SyntheticSpec",
    "generate_synthetic",
    "apply_artificial_censoring",
    "kfold_split",
    "transfer_split",
    "derive_rng",
]

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "?"})


def derive_rng(seed: int, *stream: str) -> np.random.Generator:
    """Independent generator for a named stream under a master seed.

    The stream labels hash (crc32) into the spawn key of a
    ``numpy.random.SeedSequence``, giving reproducible, documented
    sub-streams: ``derive_rng(seed, "features")`` is the same generator on
    every platform and is independent of ``derive_rng(seed, "censoring")``.
    """
    key = tuple(zlib.crc32(s.encode()) for s in stream)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class ColumnSpec:
    """How one raw CSV column maps into the feature matrix."""

    name: str
    kind: str  # "numeric" | "categorical"
    categories: tuple[str, ...]
    start: int  # first matrix column
    stop: int  # one past the last matrix column


@dataclass
class SurvivalDataset:
    """Feature matrix with per-row observed time and event label.

    Label 0 marks censoring; label m >= 1 marks an observed event of risk
    m.  ``encoding`` (when ingested from CSV) records the raw-column
    layout used for imputation.
    """

    x: np.ndarray
    times: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    risk_names: list[str]
    encoding: tuple[ColumnSpec, ...] | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.x.shape[0]
        if self.x.ndim != 2:
            raise ValueError("feature matrix must be 2-d")
        if self.times.shape != (n,) or self.labels.shape != (n,):
            raise ValueError("times and labels must have one entry per row")
        if not np.all(np.isfinite(self.times)) or np.any(self.times <= 0):
            raise ValueError("observed times must be finite and positive")
        if np.any(self.labels < 0) or np.any(self.labels > len(self.risk_names)):
            raise ValueError(f"labels must lie in 0..{len(self.risk_names)}")
        if len(self.feature_names) != self.x.shape[1]:
            raise ValueError("one feature name per matrix column is required")

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]

    @property
    def n_risks(self) -> int:
        return len(self.risk_names)

    def has_missing(self) -> bool:
        return bool(np.any(np.isnan(self.x)))

    def subset(self, indices) -> "SurvivalDataset":
        idx = np.asarray(indices)
        return replace(
            self,
            x=self.x[idx],
            times=self.times[idx],
            labels=self.labels[idx],
            feature_names=list(self.feature_names),
            risk_names=list(self.risk_names),
        )

    def event_times(self, risk: int | None = None) -> np.ndarray:
        """Observed times of events (optionally of one risk only)."""
        mask = self.labels > 0 if risk is None else self.labels == risk
        return self.times[mask]


def _parse_float(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(
    path,
    time_column: str = "time",
    label_column: str = "event",
    risk_names: list[str] | None = None,
    allow_missing: bool = False,
) -> SurvivalDataset:
    """Read the CSV schema above into a dataset.

    With ``allow_missing`` the returned matrix carries NaN for missing
    cells (all indicator columns NaN for a missing categorical), to be
    filled by :func:`impute`; otherwise a missing or unparseable cell is an
    error naming the row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        rows = list(reader)
    for required in (time_column, label_column):
        if required not in header:
            raise ValueError(f"{path}: missing required column {required!r}")
    if not rows:
        raise ValueError(f"{path}: no data rows")
    t_idx = header.index(time_column)
    l_idx = header.index(label_column)
    feature_cols = [j for j in range(len(header)) if j not in (t_idx, l_idx)]

    times = np.empty(len(rows))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        times[i] = float(row[t_idx])
        labels[i] = int(row[l_idx])

    # decide column kinds: numeric iff every non-missing cell parses
    kinds = {}
    for j in feature_cols:
        numeric = True
        for i, row in enumerate(rows):
            cell = row[j].strip()
            if cell.lower() in MISSING_TOKENS:
                if not allow_missing:
                    raise ValueError(
                        f"{path}: missing value at row {i + 2}, column {header[j]!r} "
                        "(pass allow_missing and impute)"
                    )
                continue
            if _parse_float(cell) is None:
                numeric = False
        kinds[j] = "numeric" if numeric else "categorical"

    columns = []
    blocks = []
    names = []
    offset = 0
    for j in feature_cols:
        raw = [row[j].strip() for row in rows]
        missing = np.array([cell.lower() in MISSING_TOKENS for cell in raw])
        if kinds[j] == "numeric":
            vals = np.array(
                [np.nan if m else float(cell) for cell, m in zip(raw, missing)]
            )
            blocks.append(vals[:, None])
            names.append(header[j])
            columns.append(ColumnSpec(header[j], "numeric", (), offset, offset + 1))
            offset += 1
        else:
            categories: list[str] = []
            for cell, m in zip(raw, missing):
                if not m and cell not in categories:
                    categories.append(cell)
            block = np.zeros((len(rows), len(categories)))
            for i, (cell, m) in enumerate(zip(raw, missing)):
                if m:
                    block[i, :] = np.nan
                else:
                    block[i, categories.index(cell)] = 1.0
            blocks.append(block)
            names.extend(f"{header[j]}={c}" for c in categories)
            columns.append(
                ColumnSpec(header[j], "categorical", tuple(categories), offset, offset + len(categories))
            )
            offset += len(categories)

    x = np.hstack(blocks) if blocks else np.empty((len(rows), 0))
    max_label = int(labels.max()) if len(labels) else 0
    if risk_names is None:
        risk_names = [f"event{m}" for m in range(1, max(max_label, 1) + 1)]
    return SurvivalDataset(x, times, labels, names, risk_names, tuple(columns))


def write_csv(dataset: SurvivalDataset, path) -> None:
    """Inverse of :func:`load_csv` for fully numeric matrices; floats are
    written with shortest round-trip formatting so rewrites are
    byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.feature_names + ["time", "event"])
        for i in range(dataset.n_rows):
            row = [repr(float(v)) for v in dataset.x[i]]
            row.append(repr(float(dataset.times[i])))
            row.append(str(int(dataset.labels[i])))
            writer.writerow(row)


@dataclass(frozen=True)
class Imputer:
    """Column fills learned from a training split.

    Numeric columns fill with the training mean (or a fixed override value
    by raw column name); categorical columns fill with the training mode
    (or an override category).
    """

    fills: dict[int, np.ndarray]  # matrix column start -> fill block

    @classmethod
    def fit(
        cls,
        train: SurvivalDataset,
        overrides: dict[str, float | str] | None = None,
    ) -> "Imputer":
        overrides = overrides or {}
        encoding = train.encoding or tuple(
            ColumnSpec(name, "numeric", (), j, j + 1)
            for j, name in enumerate(train.feature_names)
        )
        fills: dict[int, np.ndarray] = {}
        for col in encoding:
            block = train.x[:, col.start : col.stop]
            if col.kind == "numeric":
                if col.name in overrides:
                    fills[col.start] = np.array([float(overrides[col.name])])
                else:
                    observed = block[~np.isnan(block[:, 0]), 0]
                    if observed.size == 0:
                        raise ValueError(
                            f"column {col.name!r} has no observed training values"
                        )
                    fills[col.start] = np.array([float(np.mean(observed))])
            else:
                pattern = np.zeros(col.stop - col.start)
                if col.name in overrides:
                    value = str(overrides[col.name])
                    if value not in col.categories:
                        raise ValueError(
                            f"override {value!r} is not a category of {col.name!r}"
                        )
                    pattern[col.categories.index(value)] = 1.0
                else:
                    observed = block[~np.isnan(block[:, 0])]
                    if observed.shape[0] == 0:
                        raise ValueError(
                            f"column {col.name!r} has no observed training values"
                        )
                    pattern[int(np.argmax(observed.sum(axis=0)))] = 1.0
                fills[col.start] = pattern
        return cls(fills)

    def transform(self, dataset: SurvivalDataset) -> SurvivalDataset:
        x = dataset.x.copy()
        encoding = dataset.encoding or tuple(
            ColumnSpec(name, "numeric", (), j, j + 1)
            for j, name in enumerate(dataset.feature_names)
        )
        for col in encoding:
            fill = self.fills.get(col.start)
            if fill is None:
                continue
            block = x[:, col.start : col.stop]
            rows = np.isnan(block[:, 0])
            block[rows] = fill
        return replace(dataset, x=x)


def impute(
    dataset: SurvivalDataset,
    train: SurvivalDataset | None = None,
    overrides: dict[str, float | str] | None = None,
) -> SurvivalDataset:
    """Fill missing cells using statistics of ``train`` (defaults to the
    dataset itself).  Idempotent on complete data."""
    return Imputer.fit(train or dataset, overrides).transform(dataset)


@dataclass(frozen=True)
class SyntheticSpec:
    """Competing-risks generator settings."""

    n: int = 30_000
    seed: int = 0
    censor_fraction: float = 0.5
    block_dim: int = 4

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not 0.0 <= self.censor_fraction <= 1.0:
            raise ValueError("censor fraction must lie in [0, 1]")


MEAN_FLOOR = 1e-3


def generate_synthetic(spec: SyntheticSpec) -> SurvivalDataset:
    """Two competing risks over three feature blocks.

    Each block is standard normal of ``block_dim`` columns.  Latent event
    times are exponentials whose means share a quadratic term in the third
    block plus a risk-specific linear term (floored at ``MEAN_FLOOR``); the
    earlier latent event is observed.  A fixed fraction of rows is then
    right-censored uniformly below the latent minimum.
    """
    d = spec.block_dim
    gammas = derive_rng(spec.seed, "coefficients").standard_normal((3, d))
    x = derive_rng(spec.seed, "features").standard_normal((spec.n, 3 * d))
    x1, x2, x3 = x[:, :d], x[:, d : 2 * d], x[:, 2 * d :]

    shared = (x3 @ gammas[2]) ** 2
    mean1 = np.maximum(shared + x1 @ gammas[0], MEAN_FLOOR)
    mean2 = np.maximum(shared + x2 @ gammas[1], MEAN_FLOOR)
    rng_t = derive_rng(spec.seed, "event-times")
    latent1 = rng_t.exponential(mean1)
    latent2 = rng_t.exponential(mean2)

    times = np.minimum(latent1, latent2)
    labels = np.where(latent1 <= latent2, 1, 2).astype(np.int64)

    rng_c = derive_rng(spec.seed, "censoring")
    n_censored = int(round(spec.censor_fraction * spec.n))
    chosen = rng_c.permutation(spec.n)[:n_censored]
    u = rng_c.uniform(1e-12, 1.0, size=n_censored)
    times[chosen] = u * times[chosen]
    labels[chosen] = 0

    names = [f"x{j}" for j in range(3 * d)]
    return SurvivalDataset(x, times, labels, names, ["event1", "event2"])


def apply_artificial_censoring(
    dataset: SurvivalDataset, fraction: float, seed: int
) -> SurvivalDataset:
    """Censor a random fraction of the event rows uniformly below their
    observed time; every other row is untouched."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    event_rows = np.flatnonzero(dataset.labels > 0)
    n_new = int(round(fraction * event_rows.size))
    if n_new == 0:
        return dataset.subset(np.arange(dataset.n_rows))
    rng = derive_rng(seed, "artificial-censoring")
    chosen = rng.permutation(event_rows)[:n_new]
    u = rng.uniform(1e-12, 1.0, size=n_new)
    times = dataset.times.copy()
    labels = dataset.labels.copy()
    times[chosen] = u * times[chosen]
    labels[chosen] = 0
    return replace(dataset, times=times, labels=labels)


def kfold_split(dataset: SurvivalDataset, k: int, seed: int):
    """Label-stratified k-fold partition; returns (train_idx, val_idx) pairs."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if k > dataset.n_rows:
        raise ValueError(f"cannot split {dataset.n_rows} rows into {k} folds")
    rng = derive_rng(seed, "folds")
    fold_of = np.empty(dataset.n_rows, dtype=np.int64)
    offset = 0
    for label in np.unique(dataset.labels):
        rows = np.flatnonzero(dataset.labels == label)
        rows = rng.permutation(rows)
        fold_of[rows] = (offset + np.arange(rows.size)) % k
        offset += rows.size
    splits = []
    for f in range(k):
        val = np.flatnonzero(fold_of == f)
        train = np.flatnonzero(fold_of != f)
        splits.append((train, val))
    return splits


def transfer_split(dataset: SurvivalDataset) -> tuple[SurvivalDataset, SurvivalDataset]:
    """Split a two-risk dataset into two single-risk halves.

    The first half drops rows where risk 2 occurred, leaving an
    event-1-versus-censored dataset; the second half symmetrically keeps
    risk 2 (relabeled 1).  Rows are exchangeable, so the halves are simply
    the first and second blocks of row indices.
    """
    if dataset.n_risks != 2:
        raise ValueError("transfer split requires exactly two risks")
    half = dataset.n_rows // 2
    first = dataset.subset(np.arange(half))
    second = dataset.subset(np.arange(half, 2 * half))

    keep_a = np.flatnonzero(first.labels != 2)
    a = SurvivalDataset(
        first.x[keep_a],
        first.times[keep_a],
        first.labels[keep_a],
        list(dataset.feature_names),
        [dataset.risk_names[0]],
        dataset.encoding,
    )
    keep_b = np.flatnonzero(second.labels != 1)
    b = SurvivalDataset(
        second.x[keep_b],
        second.times[keep_b],
        np.where(second.labels[keep_b] == 2, 1, 0),
        list(dataset.feature_names),
        [dataset.risk_names[1]],
        dataset.encoding,
    )
    return a, b
