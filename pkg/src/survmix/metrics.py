"""Evaluation under right censoring: Kaplan-Meier estimation, censoring
weights, time-dependent concordance, censoring-weighted Brier score, and the
plain concordance index.

Conventions
-----------
* Step functions are right-continuous: the estimate at a breakpoint already
  includes the drop occurring there.  Left limits ``G(t-)`` take the value
  at the largest breakpoint strictly below ``t`` (1.0 before the first).
* Concordance anchors are event rows; pairs with tied times are not
  comparable; tied risk scores count one half.
* Anchor weights are the squared inverse censoring survival left limit.
  Anchors where that limit is zero are dropped with a warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import backend

__all__ = [
    "StepFunction",
    "EvalHorizons",
    "ConcordanceEstimate",
    "kaplan_meier",
    "censoring_distribution",
    "event_time_quantiles",
    "concordance_estimate",
    "time_dependent_concordance",
    "concordance_index",
    "brier_score",
]


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous nonincreasing step function with value 1 at t=0."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.shape != values.shape:
            raise ValueError("breakpoints and values must align")
        if times.size and np.any(np.diff(times) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    def __call__(self, t):
        if self.times.size == 0:
            return np.ones_like(np.asarray(t, dtype=np.float64))
        idx = np.searchsorted(self.times, t, side="right") - 1
        return np.where(idx < 0, 1.0, self.values[np.maximum(idx, 0)])

    def left_limit(self, t):
        if self.times.size == 0:
            return np.ones_like(np.asarray(t, dtype=np.float64))
        idx = np.searchsorted(self.times, t, side="left") - 1
        return np.where(idx < 0, 1.0, self.values[np.maximum(idx, 0)])


@dataclass(frozen=True)
class EvalHorizons:
    """Quantile levels of event times and their resolved truncation times."""

    levels: tuple[float, ...]
    times: tuple[float, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.times):
            raise ValueError("levels and times must align")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("horizon times must be strictly increasing")


def _as_arrays(times, events):
    t = np.ascontiguousarray(times, dtype=np.float64)
    e = np.ascontiguousarray(events).astype(bool)
    if t.shape != e.shape or t.ndim != 1:
        raise ValueError("times and event flags must be aligned 1-d arrays")
    if t.size == 0:
        raise ValueError("empty input")
    if np.any(t < 0):
        raise ValueError("times must be nonnegative")
    return t, e


def kaplan_meier(times, events) -> StepFunction:
    """Product-limit estimate of the event-time survival function.

    ``events`` is truthy for observed events, falsy for censored rows.
    """
    t, e = _as_arrays(times, events)
    event_times = np.unique(t[e])
    breaks = []
    values = []
    s = 1.0
    for et in event_times:
        at_risk = int(np.count_nonzero(t >= et))
        d = int(np.count_nonzero((t == et) & e))
        s *= 1.0 - d / at_risk
        breaks.append(et)
        values.append(s)
    return StepFunction(np.array(breaks), np.array(values))


def censoring_distribution(times, events) -> StepFunction:
    """Kaplan-Meier estimate of the censoring survival function G(t).

    Censored rows act as events and vice versa (any event label counts as
    censoring of the censoring process).
    """
    t, e = _as_arrays(times, events)
    return kaplan_meier(t, ~e)


def event_time_quantiles(times, events, levels=(0.25, 0.5, 0.75)) -> EvalHorizons:
    """Nearest-rank quantiles of the observed (uncensored) event times."""
    t, e = _as_arrays(times, events)
    event_times = np.sort(t[e])
    if event_times.size == 0:
        raise ValueError("no events: horizons are undefined")
    resolved = []
    for level in levels:
        if not 0.0 < level <= 1.0:
            raise ValueError(f"quantile level must lie in (0, 1], got {level}")
        rank = max(int(math.ceil(level * event_times.size)), 1)
        resolved.append(float(event_times[rank - 1]))
    return EvalHorizons(tuple(levels), tuple(resolved))


@dataclass(frozen=True)
class ConcordanceEstimate:
    """Concordance value (None when undefined) plus the raw number of
    comparable pairs behind it."""

    value: float | None
    comparable_pairs: int


def _weighted_concordance(scores, times, events, horizon, anchor_weights):
    """Shared reduction: integer pair counts per anchor, then a weighted
    fsum in ascending row order."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    conc, ties, tot = backend.pair_counts(
        times, events.astype(np.uint8), scores, horizon
    )
    num_terms = []
    den_terms = []
    n_pairs = 0
    for i in range(len(times)):
        if tot[i] == 0:
            continue
        n_pairs += int(tot[i])
        w = anchor_weights[i]
        num_terms.append(w * (conc[i] + 0.5 * ties[i]))
        den_terms.append(w * tot[i])
    if not den_terms or math.fsum(den_terms) == 0.0:
        return ConcordanceEstimate(None, n_pairs)
    return ConcordanceEstimate(math.fsum(num_terms) / math.fsum(den_terms), n_pairs)


def concordance_estimate(
    scores,
    times,
    events,
    horizon: float = math.inf,
    censor_sf: StepFunction | None = None,
) -> ConcordanceEstimate:
    """Truncated concordance probability with inverse censoring weights.

    Comparable pairs (i, j): row i has an event at ``times[i] <= horizon``
    and ``times[j] > times[i]``; concordant when ``scores[i] > scores[j]``.
    Each anchor i weighs its pairs by ``1 / G(times[i]-) ** 2``.
    """
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    t, e = _as_arrays(times, events)
    if censor_sf is None:
        weights = np.ones(t.size)
    else:
        g = np.atleast_1d(censor_sf.left_limit(t))
        dead = e & (t <= horizon) & (g == 0.0)
        if np.any(dead):
            warnings.warn(
                f"dropping {int(dead.sum())} anchor row(s) with zero censoring "
                "survival left limit",
                stacklevel=2,
            )
            e = e & ~dead
        with np.errstate(divide="ignore"):
            weights = np.where(g > 0.0, 1.0 / (g * g), 0.0)
    return _weighted_concordance(scores, t, e, horizon, weights)


def time_dependent_concordance(
    scores, times, events, horizon: float, censor_sf: StepFunction | None = None
) -> float | None:
    """Value-only view of :func:`concordance_estimate`; None when no pair
    is comparable."""
    return concordance_estimate(scores, times, events, horizon, censor_sf).value


def concordance_index(scores, times, events) -> float | None:
    """Unweighted concordance over all comparable pairs (no truncation)."""
    t, e = _as_arrays(times, events)
    return _weighted_concordance(scores, t, e, math.inf, np.ones(t.size)).value


def brier_score(
    surv_probs, times, events, horizon: float, censor_sf: StepFunction | None = None
) -> float:
    """Censoring-weighted squared error of survival predictions at a horizon.

    Rows with an event by the horizon contribute ``S(horizon|x)^2`` weighted
    by ``1/G(t-)``; rows still at risk contribute ``(1 - S(horizon|x))^2``
    weighted by ``1/G(horizon)``; rows censored before the horizon
    contribute zero.  Rows whose required weight is infinite (G = 0) are
    dropped with a warning.
    """
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    t, e = _as_arrays(times, events)
    s = np.asarray(surv_probs, dtype=np.float64)
    if s.shape != t.shape:
        raise ValueError("one survival prediction per row is required")
    if censor_sf is None:
        g_tminus = np.ones(t.size)
        g_horizon = 1.0
    else:
        g_tminus = np.atleast_1d(censor_sf.left_limit(t))
        g_horizon = float(censor_sf(horizon))
    terms = []
    dropped = 0
    for i in range(t.size):
        if t[i] <= horizon and e[i]:
            if g_tminus[i] == 0.0:
                dropped += 1
                continue
            terms.append(s[i] * s[i] / g_tminus[i])
        elif t[i] > horizon:
            if g_horizon == 0.0:
                dropped += 1
                continue
            terms.append((1.0 - s[i]) * (1.0 - s[i]) / g_horizon)
        else:
            terms.append(0.0)
    if dropped:
        warnings.warn(
            f"dropping {dropped} row(s) with zero censoring survival", stacklevel=2
        )
    if not terms:
        raise ValueError("no rows left to score")
    return math.fsum(terms) / len(terms)
