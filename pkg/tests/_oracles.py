"""Independent reference computations used as oracles by the test suite.

Everything here is deliberately written in the most direct way possible
(brute force, finite differences, exhaustive enumeration) and stays
independent of the library code paths it checks.
"""

from __future__ import annotations

import math

import numpy as np


def central_diff(f, x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def fd_param_grads(loss_fn, store, h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences of ``loss_fn()`` w.r.t. every entry of
    every parameter in ``store``."""
    grads = {}
    for name in store.names():
        p = store[name]
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, floor=1e-8):
    """Relative comparison on coordinates whose gradient is not tiny."""
    analytic = np.asarray(analytic).reshape(-1)
    numeric = np.asarray(numeric).reshape(-1)
    for a, n in zip(analytic, numeric):
        if abs(a) <= floor and abs(n) <= floor:
            continue
        rel = abs(a - n) / max(abs(a), abs(n))
        assert rel <= rtol, f"gradient mismatch: analytic={a!r} numeric={n!r} rel={rel:.3g}"


def km_product_limit(times, events):
    """Hand product-limit estimate: [(t_j, S(t_j))] at distinct event times."""
    order = np.argsort(times, kind="stable")
    times = np.asarray(times, dtype=float)[order]
    events = np.asarray(events)[order]
    out = []
    s = 1.0
    for t in sorted(set(times[events == 1])):
        at_risk = int(np.sum(times >= t))
        d = int(np.sum((times == t) & (events == 1)))
        s *= 1.0 - d / at_risk
        out.append((t, s))
    return out


def pairwise_concordance(times, events, scores, horizon=math.inf, weights=None):
    """Exhaustive ordered-pair concordance with optional anchor weights.

    Returns (numerator, denominator) or None when no pair is comparable.
    The reduction mirrors the library contract: integer pair counts per
    anchor row, weighted and accumulated with math.fsum in row order.
    """
    n = len(times)
    num_terms = []
    den_terms = []
    for i in range(n):
        if not events[i] or times[i] > horizon:
            continue
        conc = ties = tot = 0
        for j in range(n):
            if times[j] > times[i]:
                tot += 1
                if scores[j] < scores[i]:
                    conc += 1
                elif scores[j] == scores[i]:
                    ties += 1
        if tot == 0:
            continue
        w = 1.0 if weights is None else weights[i]
        num_terms.append(w * (conc + 0.5 * ties))
        den_terms.append(w * tot)
    if not den_terms:
        return None
    return math.fsum(num_terms), math.fsum(den_terms)


def brier_terms(surv_probs, times, events, horizon, g_at_tminus, g_at_horizon):
    """Per-row censoring-weighted squared-error terms (before the 1/n mean).

    ``g_at_tminus[i]`` is the censoring survival left limit at the row's
    time; rows needing a zero weight are returned as None entries.
    """
    out = []
    for i in range(len(times)):
        if times[i] <= horizon and events[i]:
            out.append(None if g_at_tminus[i] == 0.0 else surv_probs[i] ** 2 / g_at_tminus[i])
        elif times[i] > horizon:
            out.append(None if g_at_horizon == 0.0 else (1.0 - surv_probs[i]) ** 2 / g_at_horizon)
        else:
            out.append(0.0)
    return out
