"""Pure-numpy kernels for the dense ReLU/softmax MLP.

Three entry points shared with the compiled backend:

  forward(x, Ws, bs)                          -> class probabilities
  loss_and_grad(x, y, a, Ws, bs, kind, gamma) -> (loss, grad W list, grad b list)
  hvp(x, y, a, Ws, bs, vWs, vbs, kind, gamma) -> Hessian-vector product lists

The loss is mean cross-entropy plus gamma times a group regularizer:
kind 1 penalizes 1 - mean P(class 1) over protected rows, kind 2 the same
over protected-and-positive rows. The HVP is exact (forward-over-reverse):
tangents of the forward and backward passes are propagated alongside the
primal quantities, with ReLU/clip masks treated as locally constant.
"""

import numpy as np

REG_NONE, REG_DP, REG_EOP = 0, 1, 2
CLIP_LO = 1e-12
CLIP_HI = 1.0 - 1e-12


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def forward(x, Ws, bs):
    h = x
    for w, b in zip(Ws[:-1], bs[:-1]):
        h = np.maximum(h @ w + b, 0.0)
    return _softmax(h @ Ws[-1] + bs[-1])


def _reg_rows(y, a, reg_kind):
    if reg_kind == REG_DP:
        return a == 0
    if reg_kind == REG_EOP:
        return (a == 0) & (y == 1)
    raise ValueError(f"unknown regularizer kind {reg_kind}")


def loss_and_grad(x, y, a, Ws, bs, reg_kind, gamma):
    n = x.shape[0]
    acts = [x]
    h = x
    for w, b in zip(Ws[:-1], bs[:-1]):
        h = np.maximum(h @ w + b, 0.0)
        acts.append(h)
    p = _softmax(h @ Ws[-1] + bs[-1])

    rows = np.arange(n)
    py = p[rows, y]
    loss = float(np.mean(-np.log(np.clip(py, CLIP_LO, CLIP_HI))))
    inside = ((py > CLIP_LO) & (py < CLIP_HI)).astype(np.float64)

    delta = p.copy()
    delta[rows, y] -= 1.0
    delta *= (inside / n)[:, None]

    if reg_kind != REG_NONE and gamma != 0.0:
        sel = _reg_rows(y, a, reg_kind)
        m = int(sel.sum())
        if m > 0:
            p1 = p[sel, 1]
            loss += gamma * (1.0 - float(p1.mean()))
            coef = gamma / m
            dreg = coef * p1[:, None] * p[sel]
            dreg[:, 1] -= coef * p1
            delta[sel] += dreg

    n_layers = len(Ws)
    gws = [None] * n_layers
    gbs = [None] * n_layers
    d = delta
    for layer in range(n_layers - 1, -1, -1):
        gws[layer] = acts[layer].T @ d
        gbs[layer] = d.sum(axis=0)
        if layer > 0:
            d = (d @ Ws[layer].T) * (acts[layer] > 0.0)
    return loss, gws, gbs


def hvp(x, y, a, Ws, bs, vWs, vbs, reg_kind, gamma):
    n = x.shape[0]
    n_layers = len(Ws)

    acts = [x]
    tangents = [np.zeros_like(x)]
    h, rh = x, tangents[0]
    for w, b, vw, vb in zip(Ws[:-1], bs[:-1], vWs[:-1], vbs[:-1]):
        z = h @ w + b
        rz = rh @ w + h @ vw + vb
        mask = z > 0.0
        h = np.where(mask, z, 0.0)
        rh = np.where(mask, rz, 0.0)
        acts.append(h)
        tangents.append(rh)
    z = h @ Ws[-1] + bs[-1]
    rz = rh @ Ws[-1] + h @ vWs[-1] + vbs[-1]
    p = _softmax(z)
    rp = p * (rz - (p * rz).sum(axis=1, keepdims=True))

    rows = np.arange(n)
    py = p[rows, y]
    inside = ((py > CLIP_LO) & (py < CLIP_HI)).astype(np.float64)

    delta = p.copy()
    delta[rows, y] -= 1.0
    delta *= (inside / n)[:, None]
    rdelta = rp * (inside / n)[:, None]

    if reg_kind != REG_NONE and gamma != 0.0:
        sel = _reg_rows(y, a, reg_kind)
        m = int(sel.sum())
        if m > 0:
            coef = gamma / m
            p1 = p[sel, 1]
            rp1 = rp[sel, 1]
            dreg = coef * p1[:, None] * p[sel]
            dreg[:, 1] -= coef * p1
            delta[sel] += dreg
            rdreg = coef * (rp1[:, None] * p[sel] + p1[:, None] * rp[sel])
            rdreg[:, 1] -= coef * rp1
            rdelta[sel] += rdreg

    hws = [None] * n_layers
    hbs = [None] * n_layers
    d, rd = delta, rdelta
    for layer in range(n_layers - 1, -1, -1):
        hws[layer] = tangents[layer].T @ d + acts[layer].T @ rd
        hbs[layer] = rd.sum(axis=0)
        if layer > 0:
            mask = acts[layer] > 0.0
            rd = (rd @ Ws[layer].T + d @ vWs[layer].T) * mask
            d = (d @ Ws[layer].T) * mask
    return hws, hbs
