"""Ridge-penalized linear proportional-hazards baseline.

Fits the Cox partial likelihood (Breslow handling of tied event times) by
damped Newton iterations on internally standardized features.  The model
scores rows by a pure linear combination of the raw features, making it
the downstream ranking model for representation-transfer evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset, kfold_split
from .metrics import concordance_index

__all__ = [
    "ConvergenceError",
    "CphModel",
    "cph_negative_log_likelihood",
    "cph_fit",
    "cph_risk",
    "TransferResult",
    "transfer_eval",
]

Z_90 = 1.6448536269514722  # two-sided 90% normal quantile


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterations: int, gradient_norm: float):
        super().__init__(message)
        self.iterations = iterations
        self.gradient_norm = gradient_norm


@dataclass(frozen=True)
class CphModel:
    """Fitted proportional-hazards coefficients on the raw feature scale."""

    coef: np.ndarray
    ridge: float
    iterations: int
    gradient_norm: float


def _group_boundaries(times_desc: np.ndarray):
    """Start indices of equal-time groups in a descending-sorted array."""
    boundaries = [0]
    for i in range(1, times_desc.size):
        if times_desc[i] != times_desc[i - 1]:
            boundaries.append(i)
    boundaries.append(times_desc.size)
    return boundaries


def _nll_grad_hess(z, times, events, coef, ridge, want_derivs=True):
    """Breslow partial likelihood pieces over descending-time groups.

    Rows enter the running risk-set sums as time decreases; every event in
    a tie group shares the full group denominator.
    """
    order = np.argsort(times, kind="stable")[::-1]
    z_s = z[order]
    e_s = events[order]
    t_s = times[order]
    s = z_s @ coef
    # shift invariance keeps exp tame; the floor keeps risk-set sums
    # positive even under near-separation (weights below e^-600 are noise)
    s = np.clip(s - s.max(), -600.0, 0.0)
    es = np.exp(s)

    d = z.shape[1]
    nll = 0.0
    grad = np.zeros(d) if want_derivs else None
    hess = np.zeros((d, d)) if want_derivs else None
    s0 = 0.0
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    bounds = _group_boundaries(t_s)
    for gi in range(len(bounds) - 1):
        lo, hi = bounds[gi], bounds[gi + 1]
        block = z_s[lo:hi]
        block_es = es[lo:hi]
        s0 += float(block_es.sum())
        weighted = block * block_es[:, None]
        s1 += weighted.sum(axis=0)
        if want_derivs:
            s2 += weighted.T @ block
        ev = e_s[lo:hi]
        n_events = int(ev.sum())
        if n_events == 0:
            continue
        nll -= float(s[lo:hi][ev].sum()) - n_events * math.log(s0)
        if want_derivs:
            mu = s1 / s0
            grad -= block[ev].sum(axis=0) - n_events * mu
            hess += n_events * (s2 / s0 - np.outer(mu, mu))

    nll += 0.5 * ridge * float(coef @ coef)
    if want_derivs:
        grad += ridge * coef
        hess += ridge * np.eye(d)
    return nll, grad, hess


def cph_negative_log_likelihood(x, times, events, coef, ridge: float = 0.0) -> float:
    """Penalized Breslow negative log partial likelihood at given
    coefficients (raw feature scale, no standardization)."""
    z = np.asarray(x, dtype=np.float64)
    coef = np.asarray(coef, dtype=np.float64)
    nll, _, _ = _nll_grad_hess(
        z,
        np.asarray(times, dtype=np.float64),
        np.asarray(events).astype(bool),
        coef,
        ridge,
        want_derivs=False,
    )
    return nll


def cph_fit(
    dataset: SurvivalDataset,
    ridge: float = 1e-4,
    max_iter: int = 100,
    tol: float = 1e-6,
) -> CphModel:
    """Damped Newton fit of the single-risk proportional-hazards model.

    Features standardize internally; zero-variance columns drop out with a
    zero coefficient.  Iterates until the penalized gradient norm falls
    below ``tol``; failure to converge raises with the iteration record.
    """
    if dataset.n_risks != 1:
        raise ValueError("proportional-hazards fit requires a single-risk dataset")
    events = dataset.labels == 1
    if not np.any(events):
        raise ValueError("no events to fit")
    x = dataset.x
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    kept = sd > 0.0
    z = (x[:, kept] - mean[kept]) / sd[kept]
    times = dataset.times

    coef = np.zeros(int(kept.sum()))
    nll, grad, hess = _nll_grad_hess(z, times, events, coef, ridge)
    iterations = 0
    gn = float(np.linalg.norm(grad))
    while gn > tol:
        if iterations >= max_iter:
            raise ConvergenceError(
                f"Newton did not converge in {max_iter} iterations "
                f"(gradient norm {gn:.3g})",
                iterations,
                gn,
            )
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        for _ in range(40):
            candidate = coef - scale * step
            cand_nll, _, _ = _nll_grad_hess(
                z, times, events, candidate, ridge, want_derivs=False
            )
            if cand_nll <= nll:
                break
            scale *= 0.5
        coef = coef - scale * step
        nll, grad, hess = _nll_grad_hess(z, times, events, coef, ridge)
        gn = float(np.linalg.norm(grad))
        iterations += 1

    full = np.zeros(dataset.n_features)
    full[kept] = coef / sd[kept]
    return CphModel(full, ridge, iterations, gn)


def cph_risk(model: CphModel, x) -> np.ndarray:
    """Linear log relative hazard, the ranking score."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.coef.size:
        raise ValueError(
            f"expected {model.coef.size} features, got {x.shape[-1]}"
        )
    return x @ model.coef


@dataclass(frozen=True)
class TransferResult:
    """Cross-validated concordance of a downstream linear hazard model."""

    mean: float
    ci_half_width: float
    fold_values: tuple[float, ...]

    @property
    def interval(self) -> tuple[float, float]:
        return self.mean - self.ci_half_width, self.mean + self.ci_half_width


def transfer_eval(
    embeddings,
    times,
    events,
    folds: int = 5,
    seed: int = 0,
    ridge: float = 1e-4,
) -> TransferResult:
    """Fit a linear hazard model on row embeddings and score held-out
    concordance per fold, with a normal-approximation 90% interval."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    dataset = SurvivalDataset(
        embeddings,
        np.asarray(times, dtype=np.float64),
        np.asarray(events).astype(np.int64),
        [f"h{i}" for i in range(embeddings.shape[1])],
        ["event1"],
    )
    values = []
    for train_idx, val_idx in kfold_split(dataset, folds, seed):
        model = cph_fit(dataset.subset(train_idx), ridge=ridge)
        scores = cph_risk(model, dataset.x[val_idx])
        c = concordance_index(
            scores, dataset.times[val_idx], dataset.labels[val_idx] == 1
        )
        if c is not None:
            values.append(float(c))
    if not values:
        raise ValueError("no fold produced a concordance value")
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return TransferResult(mean, Z_90 * se, tuple(values))
