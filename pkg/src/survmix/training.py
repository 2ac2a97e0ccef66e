"""Adam optimization, early-stopped model fitting, and cross-validated
hyperparameter grid search scored by time-dependent concordance."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .data import SurvivalDataset, derive_rng, kfold_split
from .distributions import Family
from .metrics import (
    EvalHorizons,
    brier_score,
    censoring_distribution,
    concordance_estimate,
    event_time_quantiles,
)
from .model import MixtureSurvivalModel, fit_anchor

__all__ = [
    "TrainConfig",
    "AdamState",
    "adam_step",
    "FitResult",
    "fit",
    "default_grid",
    "MetricRecord",
    "GridSearchResult",
    "evaluate_model",
    "grid_search_cv",
    "worker_count",
]

FULL_BATCH_LIMIT = 4096
MINIBATCH_SIZE = 1024


@dataclass(frozen=True)
class TrainConfig:
    """One hyperparameter point plus optimizer settings.

    Defaults follow the tuning grid: learning rate in {1e-3, 1e-4}, mixture
    size in {4, 6, 8}, censoring discount in {0.5, 0.75, 1.0}, one or two
    hidden layers of 50 or 100 units, and a fixed prior strength of 1e-8.
    """

    learning_rate: float = 1e-3
    k: int = 4
    alpha: float = 1.0
    prior_strength: float = 1e-8
    family: Family = Family.WEIBULL
    hidden: tuple[int, ...] = (50,)
    max_epochs: int = 200
    patience: int = 10
    batch_size: int | None = None
    val_fraction: float = 0.1
    seed: int = 0

    def label(self) -> str:
        hid = "x".join(str(w) for w in self.hidden)
        return (
            f"{self.family.value}-k{self.k}-a{self.alpha}-lr{self.learning_rate}"
            f"-h{hid}"
        )


def default_grid(seed: int = 0, **overrides) -> list[TrainConfig]:
    """The full tuning grid (144 points); pass overrides to shrink it."""
    grids = dict(
        learning_rate=(1e-3, 1e-4),
        k=(4, 6, 8),
        alpha=(0.5, 0.75, 1.0),
        family=(Family.WEIBULL, Family.LOGNORMAL),
        hidden=((50,), (100,), (50, 50), (100, 100)),
    )
    grids.update({k: tuple(v) for k, v in overrides.items()})
    out = []
    for lr in grids["learning_rate"]:
        for k in grids["k"]:
            for alpha in grids["alpha"]:
                for family in grids["family"]:
                    for hidden in grids["hidden"]:
                        out.append(
                            TrainConfig(
                                learning_rate=lr,
                                k=k,
                                alpha=alpha,
                                family=family,
                                hidden=tuple(hidden),
                                seed=seed,
                            )
                        )
    return out


class AdamState:
    """First/second moment accumulators mirroring a parameter store."""

    BETA1 = 0.9
    BETA2 = 0.999
    EPS = 1e-8

    def __init__(self, store: ad.ParamStore) -> None:
        self.m = {name: np.zeros_like(store[name]) for name in store.names()}
        self.v = {name: np.zeros_like(store[name]) for name in store.names()}
        self.step_count = 0


def adam_step(store: ad.ParamStore, state: AdamState, learning_rate: float) -> None:
    """One bias-corrected Adam update from the accumulated gradients; the
    gradients are cleared afterwards."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = AdamState.BETA1, AdamState.BETA2
    for name in state.m:
        g = store.grad(name)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        store[name][...] -= learning_rate * m_hat / (np.sqrt(v_hat) + AdamState.EPS)
    store.zero_grads()
    store.check_finite()


@dataclass
class FitResult:
    """Loss history of one training run."""

    train_losses: list[float]
    val_losses: list[float]
    best_epoch: int


def _stratified_holdout(labels: np.ndarray, fraction: float, rng) -> np.ndarray:
    """Row indices of a label-stratified holdout of roughly the given size."""
    held = []
    for label in np.unique(labels):
        rows = rng.permutation(np.flatnonzero(labels == label))
        held.extend(rows[: int(fraction * rows.size)])
    return np.sort(np.asarray(held, dtype=np.int64))


def fit(dataset: SurvivalDataset, config: TrainConfig) -> tuple[MixtureSurvivalModel, FitResult]:
    """Train a survival mixture on the dataset.

    Observed times are standardized by the median event time (the model
    maps predictions back).  A stratified holdout carved from the training
    rows drives early stopping: training ends once the holdout loss has
    not improved for ``patience`` epochs, and the best parameters are
    restored.
    """
    if dataset.n_rows == 0:
        raise ValueError("empty dataset")
    for m in range(1, dataset.n_risks + 1):
        if not np.any(dataset.labels == m):
            raise ValueError(f"risk {m} has no observed events")

    time_scale = float(np.median(dataset.event_times()))
    scaled_times = dataset.times / time_scale

    anchors = [
        fit_anchor(config.family, scaled_times[dataset.labels == m])
        for m in range(1, dataset.n_risks + 1)
    ]
    model = MixtureSurvivalModel.initialize(
        dataset.n_features,
        config.hidden,
        dataset.n_risks,
        config.family,
        config.k,
        config.alpha,
        config.prior_strength,
        anchors,
        derive_rng(config.seed, "init"),
        feature_names=list(dataset.feature_names),
        risk_names=list(dataset.risk_names),
        time_scale=time_scale,
    )

    if config.val_fraction > 0.0:
        val_idx = _stratified_holdout(
            dataset.labels, config.val_fraction, derive_rng(config.seed, "holdout")
        )
    else:
        val_idx = np.array([], dtype=np.int64)
    train_mask = np.ones(dataset.n_rows, dtype=bool)
    train_mask[val_idx] = False
    train_idx = np.flatnonzero(train_mask)

    x_train, t_train = dataset.x[train_idx], scaled_times[train_idx]
    l_train = dataset.labels[train_idx]
    x_val, t_val = dataset.x[val_idx], scaled_times[val_idx]
    l_val = dataset.labels[val_idx]

    n_train = len(train_idx)
    batch_size = config.batch_size or (
        n_train if n_train <= FULL_BATCH_LIMIT else MINIBATCH_SIZE
    )
    batch_rng = derive_rng(config.seed, "batches")

    adam = AdamState(model.store)
    train_losses: list[float] = []
    val_losses: list[float] = []
    best_val = math.inf
    best_snapshot = model.store.snapshot()
    best_epoch = 0
    stale = 0

    for epoch in range(config.max_epochs):
        if batch_size >= n_train:
            order = np.arange(n_train)
        else:
            order = batch_rng.permutation(n_train)
        epoch_losses = []
        for start in range(0, n_train, batch_size):
            rows = order[start : start + batch_size]
            model.store.zero_grads()
            loss = model.forward_loss(x_train[rows], t_train[rows], l_train[rows])
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            model.backward()
            adam_step(model.store, adam, config.learning_rate)
            epoch_losses.append(loss)
        train_loss = float(np.mean(epoch_losses))
        if len(val_idx):
            val_loss = model.combined_loss(x_val, t_val, l_val)
        else:
            val_loss = train_loss
        train_losses.append(train_loss)
        val_losses.append(val_loss)

        if val_loss < best_val:
            best_val = val_loss
            best_snapshot = model.store.snapshot()
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break

    model.store.restore(best_snapshot)
    return model, FitResult(train_losses, val_losses, best_epoch)


@dataclass(frozen=True)
class MetricRecord:
    """One evaluation cell: a risk at a truncation horizon."""

    config_index: int
    fold: int
    risk: int
    level: float
    horizon: float
    ctd: float | None
    brier: float
    comparable_pairs: int


@dataclass
class GridSearchResult:
    configs: list[TrainConfig]
    records: list[MetricRecord]
    best_index: int
    levels: tuple[float, ...]

    @property
    def best_config(self) -> TrainConfig:
        return self.configs[self.best_index]

    def fold_values(self, config_index: int, risk: int, level: float) -> list[float]:
        return [
            r.ctd
            for r in self.records
            if r.config_index == config_index
            and r.risk == risk
            and r.level == level
            and r.ctd is not None
        ]

    def mean_ctd(self, config_index: int, risk: int, level: float) -> float | None:
        vals = self.fold_values(config_index, risk, level)
        return float(np.mean(vals)) if vals else None

    def summary_score(self, config_index: int) -> float | None:
        """Mean of the per-(risk, level) fold-mean concordances."""
        cells = []
        n_risks = max(r.risk for r in self.records) if self.records else 0
        for risk in range(1, n_risks + 1):
            for level in self.levels:
                v = self.mean_ctd(config_index, risk, level)
                if v is not None:
                    cells.append(v)
        return float(np.mean(cells)) if cells else None


def evaluate_model(
    model: MixtureSurvivalModel,
    dataset: SurvivalDataset,
    horizons_by_risk: dict[int, EvalHorizons],
    config_index: int = 0,
    fold: int = 0,
) -> list[MetricRecord]:
    """Concordance and Brier score per risk and horizon on a dataset.

    Scores are per-risk cumulative incidence at the horizon; weights come
    from the censoring survival estimated on this dataset.
    """
    records = []
    censor_sf = censoring_distribution(dataset.times, dataset.labels > 0)
    for m in range(1, dataset.n_risks + 1):
        horizons = horizons_by_risk[m]
        flags = dataset.labels == m
        for level, horizon in zip(horizons.levels, horizons.times):
            scores = model.predict_cif(m, dataset.x, horizon)
            surv = 1.0 - scores
            est = concordance_estimate(scores, dataset.times, flags, horizon, censor_sf)
            bs = brier_score(surv, dataset.times, flags, horizon, censor_sf)
            records.append(
                MetricRecord(
                    config_index, fold, m, level, horizon, est.value, bs, est.comparable_pairs
                )
            )
    return records


def _fold_seed(base: int, fold: int) -> int:
    return (base * 1_000_003 + fold) % (2**63)


def _run_cell(args):
    dataset, train_idx, val_idx, config, config_index, fold, horizons_by_risk = args
    train = dataset.subset(train_idx)
    val = dataset.subset(val_idx)
    model, _ = fit(train, replace(config, seed=_fold_seed(config.seed, fold)))
    return evaluate_model(model, val, horizons_by_risk, config_index, fold)


def worker_count() -> int:
    """Worker processes for fold/grid parallelism, capped by SURVMIX_WORKERS."""
    env = os.environ.get("SURVMIX_WORKERS", "")
    if env:
        return max(int(env), 1)
    return 1


def grid_search_cv(
    dataset: SurvivalDataset,
    grid: list[TrainConfig],
    k: int = 5,
    seed: int = 0,
    levels: tuple[float, ...] = (0.25, 0.5, 0.75),
    workers: int | None = None,
) -> GridSearchResult:
    """K-fold cross validation over a config grid.

    Every config trains on each fold's training part and is scored on the
    held-out part at the event-time quantile horizons of the full dataset.
    The best config maximizes the mean concordance over risks and levels;
    ties go to the smaller parameter count.  Folds whose training part
    lacks events for some risk are skipped with a warning.
    """
    if k < 2:
        raise ValueError("cross validation needs at least 2 folds")
    if not grid:
        raise ValueError("empty grid")
    folds = kfold_split(dataset, k, seed)
    horizons_by_risk = {
        m: event_time_quantiles(dataset.times, dataset.labels == m, levels)
        for m in range(1, dataset.n_risks + 1)
    }

    cells = []
    for config_index, config in enumerate(grid):
        for fold, (train_idx, val_idx) in enumerate(folds):
            ok = all(
                np.any(dataset.labels[train_idx] == m)
                for m in range(1, dataset.n_risks + 1)
            )
            if not ok:
                warnings.warn(f"fold {fold} has a risk without events; skipped")
                continue
            cells.append(
                (dataset, train_idx, val_idx, config, config_index, fold, horizons_by_risk)
            )

    n_workers = workers if workers is not None else worker_count()
    records: list[MetricRecord] = []
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            for result in pool.map(_run_cell, cells):
                records.extend(result)
    else:
        for cell in cells:
            records.extend(_run_cell(cell))
    records.sort(key=lambda r: (r.config_index, r.fold, r.risk, r.level))

    result = GridSearchResult(list(grid), records, 0, tuple(levels))
    best_index = 0
    best_key: tuple[float, float] | None = None
    for config_index, config in enumerate(grid):
        score = result.summary_score(config_index)
        if score is None:
            continue
        count = _parameter_count_for(dataset, config)
        key = (score, -count)
        if best_key is None or key > best_key:
            best_key = key
            best_index = config_index
    result.best_index = best_index
    return result


def _parameter_count_for(dataset: SurvivalDataset, config: TrainConfig) -> int:
    dims = (dataset.n_features,) + tuple(config.hidden)
    mlp = sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(config.hidden)))
    h = config.hidden[-1]
    return mlp + dataset.n_risks * (3 * h * config.k + 2 * config.k)
