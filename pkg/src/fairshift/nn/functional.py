"""Task losses, gradients, meta-gradients and optimizer steps.

Everything here is a pure function of (ParamSet, Batch, spec); parameter
vectors are never mutated in place. The heavy lifting is delegated to the
selected kernel backend.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from fairshift.nn import backend
from fairshift.nn.params import ParamSet

REG_KINDS = {"none": 0, "dp": 1, "eop": 2}

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

CLIP_LO = 1e-12
CLIP_HI = 1.0 - 1e-12


class EmptyGroupWarning(UserWarning):
    """A regularized batch had no rows in the regularizer's group."""


class GradientError(ValueError):
    pass


@dataclass
class Batch:
    """A K-shot sample: features, binary labels, binary sensitive column."""

    x: np.ndarray
    y: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.int8)
        self.a = np.ascontiguousarray(self.a, dtype=np.int8)
        if self.x.ndim != 2:
            raise ValueError("batch features must be 2-d")
        n = self.x.shape[0]
        if n == 0:
            raise ValueError("batch is empty")
        if self.y.shape != (n,) or self.a.shape != (n,):
            raise ValueError("batch row counts disagree")
        for name, v in (("labels", self.y), ("sensitive", self.a)):
            if not np.isin(v, (0, 1)).all():
                raise ValueError(f"batch {name} must be 0/1")

    def __len__(self):
        return self.x.shape[0]


@dataclass(frozen=True)
class TaskLossSpec:
    """Which fairness regularizer a task carries, and its weight."""

    regularizer: str = "none"
    gamma: float = 0.0

    def __post_init__(self):
        if self.regularizer not in REG_KINDS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if not np.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    @property
    def kind(self):
        return REG_KINDS[self.regularizer]


def reg_group_mask(batch, spec):
    """Rows the regularizer averages over (None when no regularizer)."""
    if spec.kind == 1:
        return batch.a == 0
    if spec.kind == 2:
        return (batch.a == 0) & (batch.y == 1)
    return None


def _warn_if_empty(batch, spec):
    if spec.kind != 0 and spec.gamma != 0.0:
        mask = reg_group_mask(batch, spec)
        if not mask.any():
            warnings.warn(f"no rows in the {spec.regularizer} regularizer group; "
                          "the regularizer contributes 0 for this batch",
                          EmptyGroupWarning, stacklevel=3)


def forward(params, x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.n_inputs:
        raise ValueError(f"input width {x.shape} does not match "
                         f"first layer fan-in {params.n_inputs}")
    ws, bs = _split_layers(params)
    return backend.kernels().forward(x, ws, bs)


def predict_proba(params, x):
    """P(class 1) per row."""
    return forward(params, x)[:, 1]


def predict(params, x):
    return (predict_proba(params, x) >= 0.5).astype(np.int8)


def task_loss(params, batch, spec):
    """Mean cross-entropy plus gamma * regularizer (0 on an empty group)."""
    p = forward(params, batch.x)
    py = p[np.arange(len(batch)), batch.y]
    loss = float(np.mean(-np.log(np.clip(py, CLIP_LO, CLIP_HI))))
    if spec.kind != 0 and spec.gamma != 0.0:
        mask = reg_group_mask(batch, spec)
        if mask.any():
            loss += spec.gamma * (1.0 - float(p[mask, 1].mean()))
        else:
            _warn_if_empty(batch, spec)
    return loss


def _split_layers(params):
    layers = params.layers()
    return [w for w, _ in layers], [b for _, b in layers]


def _flatten(params, ws, bs):
    flat = np.empty(params.n_params, dtype=np.float64)
    pos = 0
    for w, b in zip(ws, bs):
        flat[pos:pos + w.size] = w.ravel()
        pos += w.size
        flat[pos:pos + b.size] = b
        pos += b.size
    return flat


def grad(params, batch, spec):
    """Exact reverse-mode gradient of task_loss, in flat layout."""
    _warn_if_empty(batch, spec)
    ws, bs = _split_layers(params)
    _, gws, gbs = backend.kernels().loss_and_grad(
        batch.x, batch.y, batch.a, ws, bs, spec.kind, spec.gamma)
    return _flatten(params, gws, gbs)


def loss_and_grad(params, batch, spec):
    _warn_if_empty(batch, spec)
    ws, bs = _split_layers(params)
    loss, gws, gbs = backend.kernels().loss_and_grad(
        batch.x, batch.y, batch.a, ws, bs, spec.kind, spec.gamma)
    return loss, _flatten(params, gws, gbs)


def hessian_vector_product(params, batch, spec, vector):
    """Exact H v for the task loss at params, v in flat layout."""
    ws, bs = _split_layers(params)
    vset = params.with_flat(np.ascontiguousarray(vector, dtype=np.float64))
    vws, vbs = _split_layers(vset)
    hws, hbs = backend.kernels().hvp(
        batch.x, batch.y, batch.a, ws, bs, vws, vbs, spec.kind, spec.gamma)
    return _flatten(params, hws, hbs)


def inner_adapt(params, support, spec, alpha):
    """One plain gradient step on the support batch (the inner update)."""
    return params.with_flat(params.flat - alpha * grad(params, support, spec))


def meta_grad(params, support, query, spec, alpha, first_order=False):
    """Gradient w.r.t. params of the query loss after one inner step.

    Exact mode differentiates through the inner update, which contributes
    a Hessian-vector term: g_q - alpha * H_support(params) g_q, with g_q
    the query gradient at the adapted parameters.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    adapted = inner_adapt(params, support, spec, alpha)
    g_q = grad(adapted, query, spec)
    if first_order or alpha == 0.0:
        return g_q
    return g_q - alpha * hessian_vector_product(params, support, spec, g_q)


def meta_objective(params, support, query, spec, alpha):
    """Query loss at the adapted parameters; finite-difference target."""
    return task_loss(inner_adapt(params, support, spec, alpha), query, spec)


def _check_finite(gradient):
    if not np.all(np.isfinite(gradient)):
        idx = int(np.flatnonzero(~np.isfinite(gradient))[0])
        raise GradientError(f"non-finite gradient component at flat index {idx}")


def sgd_step(params, gradient, lr):
    gradient = np.asarray(gradient, dtype=np.float64)
    _check_finite(gradient)
    return params.with_flat(params.flat - lr * gradient)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n_params):
        return cls(np.zeros(n_params), np.zeros(n_params), 0)


def adam_step(state, params, gradient, lr,
              beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """One Adam update; returns (new state, new params)."""
    gradient = np.asarray(gradient, dtype=np.float64)
    _check_finite(gradient)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * gradient
    v = beta2 * state.v + (1.0 - beta2) * gradient * gradient
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_flat = params.flat - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), params.with_flat(new_flat)
