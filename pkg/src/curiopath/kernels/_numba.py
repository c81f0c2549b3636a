"""numba-compiled kernels; same contracts as ``_numpy``.

Layouts are identical to the numpy path (see that module). Kernels release
the GIL so asynchronous training workers can overlap on multi-core hosts.
"""

import math

import numpy as np
from numba import njit

_JIT = dict(cache=True, nogil=True, fastmath=False)
FLUSH = 1e-150


@njit(**_JIT)
def mlp_forward(params, dims, x):
    batch = x.shape[0]
    n_layers = dims.shape[0] - 1
    total = 0
    for d in dims:
        total += d
    acts = np.empty(batch * total)
    x_flat = np.ascontiguousarray(x).ravel()
    acts[: batch * dims[0]] = x_flat
    a_off = 0
    p_off = 0
    for l in range(n_layers):
        din = dims[l]
        dout = dims[l + 1]
        h = acts[a_off : a_off + batch * din].reshape((batch, din))
        w = params[p_off : p_off + din * dout].reshape((din, dout))
        b = params[p_off + din * dout : p_off + din * dout + dout]
        z = np.dot(h, w)
        relu = l < n_layers - 1
        a_off += batch * din
        for i in range(batch):
            for j in range(dout):
                val = z[i, j] + b[j]
                if relu and val < 0.0:
                    val = 0.0
                acts[a_off + i * dout + j] = val
        p_off += din * dout + dout
    out = acts[a_off:].reshape((batch, dims[n_layers])).copy()
    return out, acts


@njit(**_JIT)
def mlp_backward(params, dims, acts, grad_out):
    batch = grad_out.shape[0]
    n_layers = dims.shape[0] - 1
    grad = np.zeros_like(params)
    a_offs = np.zeros(n_layers + 1, dtype=np.int64)
    p_offs = np.zeros(n_layers + 1, dtype=np.int64)
    for l in range(n_layers):
        a_offs[l + 1] = a_offs[l] + batch * dims[l]
        p_offs[l + 1] = p_offs[l] + dims[l] * dims[l + 1] + dims[l + 1]
    delta = np.ascontiguousarray(grad_out)
    for l in range(n_layers - 1, -1, -1):
        din = dims[l]
        dout = dims[l + 1]
        h = acts[a_offs[l] : a_offs[l] + batch * din].reshape((batch, din))
        p = p_offs[l]
        gw = np.dot(h.T, delta)
        grad[p : p + din * dout] = gw.ravel()
        for i in range(batch):
            for j in range(dout):
                grad[p + din * dout + j] += delta[i, j]
        if l > 0:
            w = params[p : p + din * dout].reshape((din, dout))
            back = np.dot(delta, w.T)
            for i in range(batch):
                for j in range(din):
                    if h[i, j] <= 0.0:
                        back[i, j] = 0.0
            delta = back
    return grad


@njit(**_JIT)
def adam_update(params, grad, m, v, step, lr, beta1, beta2, eps):
    inv_c1 = 1.0 / (1.0 - beta1**step)
    inv_c2 = 1.0 / (1.0 - beta2**step)
    for i in range(params.shape[0]):
        g = grad[i]
        mi = beta1 * m[i] + (1.0 - beta1) * g
        vi = beta2 * v[i] + (1.0 - beta2) * g * g
        # flush near-subnormal moments; subnormal arithmetic is ~100x slower
        mi = mi if abs(mi) >= FLUSH else 0.0
        vi = vi if vi >= FLUSH else 0.0
        m[i] = mi
        v[i] = vi
        params[i] -= lr * (mi * inv_c1) / (math.sqrt(vi * inv_c2) + eps)


@njit(**_JIT)
def _log_sigmoid(z):
    if z >= 0.0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@njit(**_JIT)
def _logaddexp(u, v):
    if u == -np.inf:
        return v
    if v == -np.inf:
        return u
    hi = max(u, v)
    return hi + math.log1p(math.exp(-abs(u - v)))


@njit(**_JIT)
def m3pl_objective(theta, prior_theta, lam, a, b, c, y):
    n_items, k = a.shape
    total = 0.0
    for j in range(n_items):
        z = -b[j]
        for d in range(k):
            z += a[j, d] * theta[d]
        log_c = math.log(c[j]) if c[j] > 0.0 else -np.inf
        if y[j] > 0.5:
            total += _logaddexp(log_c, math.log1p(-c[j]) + _log_sigmoid(z))
        else:
            total += math.log1p(-c[j]) + _log_sigmoid(-z)
    pen = 0.0
    for d in range(k):
        diff = theta[d] - prior_theta[d]
        pen += diff * diff
    return total - lam * pen


@njit(**_JIT)
def m3pl_gradient(theta, prior_theta, lam, a, b, c, y):
    n_items, k = a.shape
    g = np.empty(k)
    for d in range(k):
        g[d] = -2.0 * lam * (theta[d] - prior_theta[d])
    for j in range(n_items):
        z = -b[j]
        for d in range(k):
            z += a[j, d] * theta[d]
        sig = 1.0 / (1.0 + math.exp(-z))
        p = c[j] + (1.0 - c[j]) * sig
        ratio = sig / p if p > 0.0 else 1.0
        wj = (y[j] - p) * ratio
        for d in range(k):
            g[d] += a[j, d] * wj
    return g


@njit(**_JIT)
def m3pl_ascent(theta0, prior_theta, lam, a, b, c, y, max_iter, tol):
    k = theta0.shape[0]
    n_items = a.shape[0]
    scale = np.empty(k)
    w = np.empty(n_items)
    hz = np.empty(n_items)
    theta = theta0.copy()
    f = m3pl_objective(theta, prior_theta, lam, a, b, c, y)
    for it in range(max_iter):
        g = m3pl_gradient(theta, prior_theta, lam, a, b, c, y)
        for j in range(n_items):
            z = -b[j]
            for d in range(k):
                z += a[j, d] * theta[d]
            s = 1.0 / (1.0 + math.exp(-z))
            w[j] = s * (1.0 - s)
            if y[j] > 0.5:
                p = c[j] + (1.0 - c[j]) * s
                q = (1.0 - c[j]) * w[j]
                hz[j] = q * ((1.0 - 2.0 * s) * p - q) / (p * p)
            else:
                hz[j] = -w[j]
        for d in range(k):
            fisher = 2.0 * lam
            curv = 2.0 * lam
            for j in range(n_items):
                a2 = a[j, d] * a[j, d]
                fisher += a2 * w[j]
                curv -= a2 * hz[j]
            scale[d] = 1.0 / (curv if curv > 1e-3 * fisher else fisher)
        gd = 0.0
        for d in range(k):
            gd += g[d] * g[d] * scale[d]
        if math.sqrt(gd) < tol:
            return theta, it, True
        if gd <= 1e-12 * (1.0 + abs(f)):
            # gains below the resolution of f; a line search cannot judge them
            theta = theta + scale * g
            f = m3pl_objective(theta, prior_theta, lam, a, b, c, y)
            continue
        step = 1.0
        while True:
            cand = theta + step * scale * g
            fc = m3pl_objective(cand, prior_theta, lam, a, b, c, y)
            if fc >= f + 1e-4 * step * gd:
                break
            step *= 0.5
            if step < 1e-16:
                return theta, it, False
        theta = cand
        f = fc
    return theta, max_iter, False
