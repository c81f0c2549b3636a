"""Vectorised numpy kernels (reference path, no JIT).

Parameters of a dense network live in one flat float64 vector. Layer ``l``
stores its weight matrix ``(dims[l], dims[l+1])`` row-major followed by its
bias vector. Forward activations are packed the same way into a flat
buffer, one contiguous ``(batch, dims[l])`` block per layer, so the backward
pass can slice them without any Python-side bookkeeping.
"""

import numpy as np

FLUSH = 1e-150


def mlp_forward(params, dims, x):
    batch = x.shape[0]
    n_layers = dims.shape[0] - 1
    acts = np.empty(batch * int(dims.sum()))
    acts[: batch * dims[0]] = x.ravel()
    a_off = 0
    p_off = 0
    for l in range(n_layers):
        din, dout = dims[l], dims[l + 1]
        h = acts[a_off : a_off + batch * din].reshape(batch, din)
        w = params[p_off : p_off + din * dout].reshape(din, dout)
        b = params[p_off + din * dout : p_off + din * dout + dout]
        z = h @ w + b
        if l < n_layers - 1:
            np.maximum(z, 0.0, out=z)
        a_off += batch * din
        p_off += din * dout + dout
        acts[a_off : a_off + batch * dout] = z.ravel()
    out = acts[a_off:].reshape(batch, dims[n_layers]).copy()
    return out, acts


def mlp_backward(params, dims, acts, grad_out):
    batch = grad_out.shape[0]
    n_layers = dims.shape[0] - 1
    grad = np.zeros_like(params)
    a_offs = np.concatenate(([0], np.cumsum(batch * dims[:-1])))
    p_offs = np.concatenate(([0], np.cumsum(dims[:-1] * dims[1:] + dims[1:])))
    delta = grad_out
    for l in range(n_layers - 1, -1, -1):
        din, dout = dims[l], dims[l + 1]
        h = acts[a_offs[l] : a_offs[l] + batch * din].reshape(batch, din)
        p = p_offs[l]
        grad[p : p + din * dout] = (h.T @ delta).ravel()
        grad[p + din * dout : p + din * dout + dout] = delta.sum(axis=0)
        if l > 0:
            w = params[p : p + din * dout].reshape(din, dout)
            delta = (delta @ w.T) * (h > 0.0)
    return grad


def adam_update(params, grad, m, v, step, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    # flush near-subnormal moments; subnormal arithmetic is ~100x slower
    m[np.abs(m) < FLUSH] = 0.0
    v[v < FLUSH] = 0.0
    m_hat = m / (1.0 - beta1**step)
    v_hat = v / (1.0 - beta2**step)
    params -= lr * m_hat / (np.sqrt(v_hat) + eps)


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def m3pl_objective(theta, prior_theta, lam, a, b, c, y):
    z = a @ theta - b
    with np.errstate(divide="ignore"):
        log_c = np.log(c)
    log_p = np.logaddexp(log_c, np.log1p(-c) + _log_sigmoid(z))
    log_q = np.log1p(-c) + _log_sigmoid(-z)
    ll = np.sum(y * log_p + (1.0 - y) * log_q)
    return ll - lam * np.sum((theta - prior_theta) ** 2)


def m3pl_gradient(theta, prior_theta, lam, a, b, c, y):
    z = a @ theta - b
    sig = 1.0 / (1.0 + np.exp(-z))
    p = c + (1.0 - c) * sig
    # d log-lik / dz simplifies to (y - p) * sig / p; the ratio is 1 when c == 0
    ratio = np.where(p > 0.0, sig / np.where(p > 0.0, p, 1.0), 1.0)
    return a.T @ ((y - p) * ratio) - 2.0 * lam * (theta - prior_theta)


def m3pl_ascent(theta0, prior_theta, lam, a, b, c, y, max_iter, tol):
    """Penalised M3PL MLE by preconditioned gradient ascent.

    Each coordinate is scaled by the inverse of the diagonal of the negative
    Hessian where that is positive (a Newton step when items load on single
    points), else by the Fisher-type curvature
    ``2 lam + sum_j a_jk^2 sig_j (1 - sig_j)``. The guessing floor makes the
    objective locally convex in places, hence the fallback. An Armijo
    backtracking search guards every step. Convergence is judged
    on the scaled step length ``sqrt(g' D g)``, which is insensitive to the
    size of ``lam``. Returns ``(theta, iterations, converged)``.
    """
    a2 = a * a
    theta = theta0.copy()
    f = m3pl_objective(theta, prior_theta, lam, a, b, c, y)
    for it in range(max_iter):
        g = m3pl_gradient(theta, prior_theta, lam, a, b, c, y)
        sig = 1.0 / (1.0 + np.exp(-(a @ theta - b)))
        var = sig * (1.0 - sig)
        p = c + (1.0 - c) * sig
        q = (1.0 - c) * var
        # second derivative of each item's log-likelihood in z
        h = np.where(y > 0.5, q * ((1.0 - 2.0 * sig) * p - q) / (p * p), -var)
        fisher = 2.0 * lam + var @ a2
        curv = 2.0 * lam - h @ a2
        scale = 1.0 / np.where(curv > 1e-3 * fisher, curv, fisher)
        gd = g @ (scale * g)
        if np.sqrt(gd) < tol:
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
