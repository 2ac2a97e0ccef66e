"""Survival mixture model: a shared MLP representation feeding, per risk,
softmax gating weights and shifted log-parameters of K parametric survival
components.

Loss construction follows the censored maximum-likelihood lower bound: event
rows contribute the gate-weighted component log-density, all other rows
(censored, or observed for a different risk) contribute the gate-weighted
component log-survival at their observed time, discounted by ``alpha``.
A quadratic penalty ties the per-component base log-parameters to an anchor
fitted on the training event times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import backend
from .distributions import (
    ComponentParams,
    Family,
    log_erfc_array,
    log_pdf,
    log_survival,
)

__all__ = [
    "Mixture",
    "RiskHead",
    "MixtureSurvivalModel",
    "elbo_uncensored",
    "elbo_censored",
    "fit_anchor",
]

_FAMILY_CODE = {Family.WEIBULL: backend.FAMILY_WEIBULL, Family.LOGNORMAL: backend.FAMILY_LOGNORMAL}
_HEAD_ACT = {Family.WEIBULL: ad.ActivationKind.SELU, Family.LOGNORMAL: ad.ActivationKind.TANH}


@dataclass(frozen=True)
class Mixture:
    """Per-instance mixture: gating weights plus component parameters."""

    family: Family
    weights: np.ndarray
    components: tuple[ComponentParams, ...]


@dataclass(frozen=True)
class RiskHead:
    """Parameter-name bundle for one risk."""

    index: int  # 1-based event label
    family: Family
    k: int

    @property
    def prefix(self) -> str:
        return f"risk{self.index}"

    @property
    def gate(self) -> str:
        return f"{self.prefix}.gate"

    @property
    def shape_head(self) -> str:
        return f"{self.prefix}.shape_head"

    @property
    def scale_head(self) -> str:
        return f"{self.prefix}.scale_head"

    @property
    def base_log_shape(self) -> str:
        return f"{self.prefix}.base_log_shape"

    @property
    def base_log_scale(self) -> str:
        return f"{self.prefix}.base_log_scale"


def elbo_uncensored(mixture: Mixture, t: float) -> float:
    """Gate-weighted component log-density: a lower bound (Jensen) on the
    log mixture density at ``t``."""
    return float(
        sum(
            w * log_pdf(mixture.family, c, t)
            for w, c in zip(mixture.weights, mixture.components)
        )
    )


def elbo_censored(mixture: Mixture, t: float) -> float:
    """Gate-weighted component log-survival at ``t`` (lower bound)."""
    return float(
        sum(
            w * log_survival(mixture.family, c, t)
            for w, c in zip(mixture.weights, mixture.components)
        )
    )


def fit_anchor(family: Family, times: np.ndarray) -> tuple[float, float]:
    """Single-component maximum likelihood fit to event times, ignoring
    covariates.  Returns the (log_shape, log_scale) anchor."""
    t = np.asarray(times, dtype=np.float64)
    if t.size == 0 or np.any(t <= 0):
        raise ValueError("anchor fit needs strictly positive event times")
    log_t = np.log(t)
    if family is Family.LOGNORMAL:
        location = float(np.mean(log_t))
        sd = float(np.std(log_t))
        return location, math.log(max(sd, 1e-3))

    mean_log_t = float(np.mean(log_t))

    def profile(eta: float) -> float:
        # increasing in eta; root is the shape MLE
        w = np.exp(eta * log_t)
        return float(np.sum(w * log_t) / np.sum(w) - 1.0 / eta - mean_log_t)

    lo, hi = 1e-2, 100.0
    if profile(lo) > 0.0:
        eta = lo
    elif profile(hi) < 0.0:
        eta = hi
    else:
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if profile(mid) > 0.0:
                hi = mid
            else:
                lo = mid
        eta = 0.5 * (lo + hi)
    scale = float(np.mean(np.exp(eta * log_t))) ** (1.0 / eta)
    return math.log(eta), math.log(scale)


def _log_sf_array(family: Family, ls: np.ndarray, lb: np.ndarray, t: float) -> np.ndarray:
    """Vectorized component log-survival at a single time."""
    if t == 0.0:
        return np.zeros_like(ls)
    log_t = math.log(t)
    if family is Family.WEIBULL:
        z = np.minimum(np.exp(ls) * (log_t - lb), 500.0)
        return -np.exp(z)
    u = (log_t - ls) * np.exp(-lb)
    return log_erfc_array(u / math.sqrt(2.0)) - math.log(2.0)


class MixtureSurvivalModel:
    """Trained or trainable survival mixture over one or more risks."""

    def __init__(
        self,
        store: ad.ParamStore,
        spec: ad.MlpSpec,
        heads: list[RiskHead],
        alpha: float,
        prior_strength: float,
        anchors: list[tuple[float, float]],
        feature_names: list[str] | None = None,
        risk_names: list[str] | None = None,
        time_scale: float = 1.0,
    ) -> None:
        self.store = store
        self.spec = spec
        self.heads = heads
        self.alpha = float(alpha)
        self.prior_strength = float(prior_strength)
        self.anchors = anchors
        self.feature_names = feature_names or [f"x{i}" for i in range(spec.in_dim)]
        self.risk_names = risk_names or [f"event{h.index}" for h in heads]
        self.time_scale = float(time_scale)
        self._loss_node: ad.Node | None = None

    # -- construction -----------------------------------------------------

    @classmethod
    def initialize(
        cls,
        n_features: int,
        hidden: tuple[int, ...],
        n_risks: int,
        family: Family,
        k: int,
        alpha: float,
        prior_strength: float,
        anchors: list[tuple[float, float]],
        rng: np.random.Generator,
        feature_names: list[str] | None = None,
        risk_names: list[str] | None = None,
        time_scale: float = 1.0,
    ) -> "MixtureSurvivalModel":
        if len(anchors) != n_risks:
            raise ValueError("need one anchor per risk")
        store = ad.ParamStore()
        spec = ad.MlpSpec(n_features, tuple(hidden))
        ad.init_mlp(store, spec, rng)
        h = spec.out_dim
        heads = []
        for m in range(1, n_risks + 1):
            head = RiskHead(m, family, k)
            bound = math.sqrt(6.0 / (h + k))
            store.add(head.gate, rng.uniform(-bound, bound, size=(h, k)))
            store.add(head.shape_head, rng.uniform(-bound, bound, size=(h, k)))
            store.add(head.scale_head, rng.uniform(-bound, bound, size=(h, k)))
            anchor_ls, anchor_lb = anchors[m - 1]
            store.add(head.base_log_shape, anchor_ls + 0.1 * rng.standard_normal(k))
            store.add(head.base_log_scale, anchor_lb + 0.1 * rng.standard_normal(k))
            heads.append(head)
        return cls(
            store,
            spec,
            heads,
            alpha,
            prior_strength,
            anchors,
            feature_names,
            risk_names,
            time_scale,
        )

    # -- forward paths ------------------------------------------------------

    def extract_representation(self, x: np.ndarray) -> np.ndarray:
        """Hidden representation of the input features."""
        return ad.mlp_forward(x, self.store, self.spec)

    def _head(self, risk: int) -> RiskHead:
        for head in self.heads:
            if head.index == risk:
                return head
        raise ValueError(f"no head for risk {risk}")

    def _mixture_arrays(self, risk: int, x: np.ndarray):
        """Gate weights and component log-parameter matrices for a batch."""
        head = self._head(risk)
        h = self.extract_representation(x)
        if h.ndim == 1:
            h = h[None, :]
        act = _HEAD_ACT[head.family]
        weights = ad.softmax(h @ self.store[head.gate])
        ls = self.store[head.base_log_shape][None, :] + ad.activation(act, h @ self.store[head.shape_head])
        lb = self.store[head.base_log_scale][None, :] + ad.activation(act, h @ self.store[head.scale_head])
        return head, weights, ls, lb

    def instance_mixture(self, risk: int, x: np.ndarray) -> Mixture:
        """Mixture describing the event-time distribution of one instance.

        Component parameters live on the model's internal (scaled) time
        axis: observed times divide by ``time_scale`` before evaluation.
        """
        head, weights, ls, lb = self._mixture_arrays(risk, np.atleast_1d(np.asarray(x, dtype=np.float64)))
        components = tuple(
            ComponentParams(float(s), float(b)) for s, b in zip(ls[0], lb[0])
        )
        return Mixture(head.family, weights[0], components)

    def predict_survival(self, risk: int, x: np.ndarray, times) -> np.ndarray:
        """S(t | x) on a grid of times; shape (n_rows, n_times).

        Scalar ``x``-row plus scalar ``times`` collapse to a float.
        """
        x_arr = np.asarray(x, dtype=np.float64)
        single_row = x_arr.ndim == 1
        t_arr = np.atleast_1d(np.asarray(times, dtype=np.float64))
        scalar_t = np.isscalar(times) or np.asarray(times).ndim == 0
        if np.any(t_arr < 0):
            raise ValueError("survival prediction requires nonnegative times")
        head, weights, ls, lb = self._mixture_arrays(risk, x_arr)
        out = np.empty((weights.shape[0], t_arr.size))
        for j, t in enumerate(t_arr):
            sf = np.exp(_log_sf_array(head.family, ls, lb, float(t) / self.time_scale))
            out[:, j] = np.sum(weights * sf, axis=1)
        if single_row and scalar_t:
            return float(out[0, 0])
        if single_row:
            return out[0]
        if scalar_t:
            return out[:, 0]
        return out

    def predict_cif(self, risk: int, x: np.ndarray, times) -> np.ndarray:
        """Per-risk cumulative incidence 1 - S(t | x), the ranking score."""
        return 1.0 - self.predict_survival(risk, x, times)

    # -- loss ---------------------------------------------------------------

    def _risk_loss_node(
        self,
        head: RiskHead,
        hidden: ad.Node,
        log_t: np.ndarray,
        is_event: np.ndarray,
        row_weight: np.ndarray,
    ) -> ad.Node:
        gate = ad.matmul(hidden, ad.leaf(self.store, head.gate))
        shape_pre = ad.matmul(hidden, ad.leaf(self.store, head.shape_head))
        scale_pre = ad.matmul(hidden, ad.leaf(self.store, head.scale_head))
        base_shape = ad.leaf(self.store, head.base_log_shape)
        base_scale = ad.leaf(self.store, head.base_log_scale)

        loss, d_gate, d_shape, d_scale, d_bshape, d_bscale = backend.mixture_loss_grad(
            _FAMILY_CODE[head.family],
            np.ascontiguousarray(gate.value),
            np.ascontiguousarray(shape_pre.value),
            np.ascontiguousarray(scale_pre.value),
            base_shape.value,
            base_scale.value,
            log_t,
            is_event,
            row_weight,
        )
        node = ad.Node(loss, (gate, shape_pre, scale_pre, base_shape, base_scale))

        def backprop(g):
            gate.accumulate(g * d_gate)
            shape_pre.accumulate(g * d_shape)
            scale_pre.accumulate(g * d_scale)
            base_shape.accumulate(g * d_bshape)
            base_scale.accumulate(g * d_bscale)

        node.backprop = backprop
        return node

    def _prior_node(self, head: RiskHead) -> ad.Node:
        anchor_ls, anchor_lb = self.anchors[head.index - 1]
        dev_shape = ad.add(
            ad.leaf(self.store, head.base_log_shape),
            ad.constant(np.full(head.k, -anchor_ls)),
        )
        dev_scale = ad.add(
            ad.leaf(self.store, head.base_log_scale),
            ad.constant(np.full(head.k, -anchor_lb)),
        )
        penalty = ad.add(ad.total(ad.square(dev_shape)), ad.total(ad.square(dev_scale)))
        return ad.scale(penalty, self.prior_strength)

    def prior_loss(self, risk: int) -> float:
        return float(self._prior_node(self._head(risk)).value)

    def loss_graph(self, x: np.ndarray, times: np.ndarray, labels: np.ndarray) -> ad.Node:
        """Recorded combined loss over a batch: per risk, the mean negative
        event bound plus ``alpha`` times the mean negative censoring bound,
        plus the anchor penalty."""
        x = np.asarray(x, dtype=np.float64)
        times = np.asarray(times, dtype=np.float64)
        labels = np.asarray(labels)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("loss requires a non-empty 2-d feature batch")
        if np.any(times <= 0):
            raise ValueError("loss requires strictly positive observed times")
        n_risks = len(self.heads)
        if np.any(labels < 0) or np.any(labels > n_risks):
            raise ValueError(f"labels must lie in 0..{n_risks}")

        hidden = ad.mlp_graph(x, self.store, self.spec)
        log_t = np.log(times)
        node: ad.Node | None = None
        for head in self.heads:
            is_event = (labels == head.index).astype(np.uint8)
            n_event = int(is_event.sum())
            n_other = len(labels) - n_event
            row_weight = np.where(
                is_event,
                -1.0 / n_event if n_event else 0.0,
                -self.alpha / n_other if n_other else 0.0,
            ).astype(np.float64)
            risk_node = ad.add(
                self._risk_loss_node(head, hidden, log_t, is_event, row_weight),
                self._prior_node(head),
            )
            node = risk_node if node is None else ad.add(node, risk_node)
        assert node is not None
        return node

    def combined_loss(self, x: np.ndarray, times: np.ndarray, labels: np.ndarray) -> float:
        """Value of the minimized objective on a batch (no gradients)."""
        return float(self.loss_graph(x, times, labels).value)

    def forward_loss(self, x: np.ndarray, times: np.ndarray, labels: np.ndarray) -> float:
        """Record a forward pass for a later :meth:`backward` call."""
        self._loss_node = self.loss_graph(x, times, labels)
        return float(self._loss_node.value)

    def backward(self) -> None:
        """Accumulate gradients of the last recorded loss into the store."""
        if self._loss_node is None:
            raise ad.GraphError("backward called before forward_loss recorded a batch")
        ad.backward(self._loss_node)
        self._loss_node = None

    def parameter_count(self) -> int:
        return self.store.parameter_count()

    # -- serialization -------------------------------------------------------

    def save(self, path) -> None:
        """Self-describing text format; float values round-trip exactly."""
        lines = ["survmix-model 1"]
        lines.append(f"alpha {self.alpha!r}")
        lines.append(f"prior_strength {self.prior_strength!r}")
        lines.append(f"time_scale {self.time_scale!r}")
        lines.append(f"in_dim {self.spec.in_dim}")
        lines.append("hidden " + ",".join(str(w) for w in self.spec.hidden))
        lines.append("features " + "\t".join(self.feature_names))
        lines.append("risks " + "\t".join(self.risk_names))
        for head in self.heads:
            anchor_ls, anchor_lb = self.anchors[head.index - 1]
            lines.append(
                f"head {head.index} {head.family.value} {head.k} {anchor_ls!r} {anchor_lb!r}"
            )
        for name in self.store.names():
            arr = self.store[name]
            lines.append(f"param {name} " + ",".join(str(d) for d in arr.shape))
            flat = arr.reshape(-1)
            lines.append(" ".join(repr(float(v)) for v in flat))
        lines.append("end")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "MixtureSurvivalModel":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0] != "survmix-model 1":
            raise ValueError(f"{path}: not a survmix model file")
        fields: dict[str, str] = {}
        heads: list[RiskHead] = []
        anchors: list[tuple[float, float]] = []
        store = ad.ParamStore()
        i = 1
        while i < len(lines):
            line = lines[i]
            if line == "end":
                break
            key, _, rest = line.partition(" ")
            if key == "head":
                idx, fam, k, a_ls, a_lb = rest.split(" ")
                heads.append(RiskHead(int(idx), Family(fam), int(k)))
                anchors.append((float(a_ls), float(a_lb)))
            elif key == "param":
                name, _, shape_s = rest.partition(" ")
                shape = tuple(int(s) for s in shape_s.split(",") if s)
                i += 1
                values = np.array([float(v) for v in lines[i].split()], dtype=np.float64)
                store.add(name, values.reshape(shape))
            else:
                fields[key] = rest
            i += 1
        spec = ad.MlpSpec(
            int(fields["in_dim"]),
            tuple(int(w) for w in fields["hidden"].split(",")),
        )
        return cls(
            store,
            spec,
            heads,
            float(fields["alpha"]),
            float(fields["prior_strength"]),
            anchors,
            fields["features"].split("\t"),
            fields["risks"].split("\t"),
            float(fields["time_scale"]),
        )
