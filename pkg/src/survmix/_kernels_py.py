"""Pure-numpy fallback for the hot kernels.

Same call signatures and semantics as the compiled extension
``survmix._kernels``; selected by :mod:`survmix.backend` when the extension
is unavailable or explicitly disabled.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erfc as _erfc

SELU_LAMBDA = 1.0507009873554804934193349852946
SELU_ALPHA = 1.6732632423543772848170429916717
LOG_2PI = float(np.log(2.0 * np.pi))

FAMILY_WEIBULL = 0
FAMILY_LOGNORMAL = 1

_EXP_ARG_MAX = 500.0
_LOG_ERFC_ASYMPTOTIC = 25.0


def _log_erfc(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x < _LOG_ERFC_ASYMPTOTIC
    out[small] = np.log(_erfc(x[small]))
    xl = x[~small]
    r = 1.0 / (xl * xl)
    series = 1.0 + r * (-0.5 + r * (0.75 + r * (-1.875 + r * 6.5625)))
    out[~small] = -xl * xl - np.log(xl) - 0.5 * np.log(np.pi) + np.log(series)
    return out


def mixture_loss_grad(
    family: int,
    gate_logits: np.ndarray,
    shape_pre: np.ndarray,
    scale_pre: np.ndarray,
    base_shape: np.ndarray,
    base_scale: np.ndarray,
    log_t: np.ndarray,
    is_event: np.ndarray,
    row_weight: np.ndarray,
):
    """Weighted mixture log-likelihood bound and its gradients, fused.

    Per row: mixture weights are the softmax of ``gate_logits``; component
    log-parameters are the base values shifted by the activated head
    outputs (selu for Weibull, tanh for log-normal).  Event rows contribute
    the weighted component log-density, other rows the weighted component
    log-survival, each multiplied by the (signed) ``row_weight``.

    Returns ``(loss, d_gate, d_shape_pre, d_scale_pre, d_base_shape,
    d_base_scale)``.
    """
    ev = is_event.astype(bool)
    lt = log_t[:, None]

    if family == FAMILY_WEIBULL:
        act_shape = SELU_LAMBDA * np.where(shape_pre > 0.0, shape_pre, SELU_ALPHA * np.expm1(shape_pre))
        act_scale = SELU_LAMBDA * np.where(scale_pre > 0.0, scale_pre, SELU_ALPHA * np.expm1(scale_pre))
        dact_shape = SELU_LAMBDA * np.where(shape_pre > 0.0, 1.0, SELU_ALPHA * np.exp(shape_pre))
        dact_scale = SELU_LAMBDA * np.where(scale_pre > 0.0, 1.0, SELU_ALPHA * np.exp(scale_pre))
    elif family == FAMILY_LOGNORMAL:
        act_shape = np.tanh(shape_pre)
        act_scale = np.tanh(scale_pre)
        dact_shape = 1.0 - act_shape * act_shape
        dact_scale = 1.0 - act_scale * act_scale
    else:
        raise ValueError(f"unknown family code {family}")

    ls = base_shape[None, :] + act_shape
    lb = base_scale[None, :] + act_scale

    if family == FAMILY_WEIBULL:
        eta = np.exp(ls)
        z = np.minimum(eta * (lt - lb), _EXP_ARG_MAX)
        ez = np.exp(z)
        q = np.where(ev[:, None], ls - lb + (eta - 1.0) * (lt - lb) - ez, -ez)
        dq_ls = np.where(ev[:, None], 1.0 + z - z * ez, -z * ez)
        dq_lb = np.where(ev[:, None], eta * (ez - 1.0), eta * ez)
    else:
        inv_scale = np.exp(-lb)
        u = (lt - ls) * inv_scale
        log_q = _log_erfc(u / np.sqrt(2.0)) - np.log(2.0)
        hazard = np.exp(-0.5 * u * u - 0.5 * LOG_2PI - log_q)
        q = np.where(ev[:, None], -lt - lb - 0.5 * LOG_2PI - 0.5 * u * u, log_q)
        dq_ls = np.where(ev[:, None], u * inv_scale, hazard * inv_scale)
        dq_lb = np.where(ev[:, None], u * u - 1.0, hazard * u)

    shifted = gate_logits - np.max(gate_logits, axis=1, keepdims=True)
    e = np.exp(shifted)
    gates = e / e.sum(axis=1, keepdims=True)

    term = np.sum(gates * q, axis=1)
    loss = float(row_weight @ term)

    wg = row_weight[:, None] * gates
    d_gate = wg * (q - term[:, None])
    d_shape_pre = wg * dq_ls * dact_shape
    d_scale_pre = wg * dq_lb * dact_scale
    d_base_shape = np.sum(wg * dq_ls, axis=0)
    d_base_scale = np.sum(wg * dq_lb, axis=0)
    return loss, d_gate, d_shape_pre, d_scale_pre, d_base_shape, d_base_scale


def pair_counts(
    times: np.ndarray,
    is_event: np.ndarray,
    scores: np.ndarray,
    horizon: float,
):
    """Exhaustive ordered-pair counts for concordance estimation.

    For every anchor row ``i`` with an observed event at ``times[i] <=
    horizon``, counts over all rows ``j`` with ``times[j] > times[i]``: how
    many have a strictly smaller score (concordant), an equal score (tied),
    and the total.  Returns three int64 arrays indexed by anchor row.
    """
    n = times.shape[0]
    conc = np.zeros(n, dtype=np.int64)
    ties = np.zeros(n, dtype=np.int64)
    tot = np.zeros(n, dtype=np.int64)
    ev = is_event.astype(bool)
    for i in range(n):
        if not ev[i] or times[i] > horizon:
            continue
        later = times > times[i]
        tot[i] = int(np.count_nonzero(later))
        if tot[i]:
            conc[i] = int(np.count_nonzero(later & (scores < scores[i])))
            ties[i] = int(np.count_nonzero(later & (scores == scores[i])))
    return conc, ties, tot
