"""The compiled kernels must agree with the numpy reference."""

import numpy as np
import pytest

from curiopath.kernels import numpy_impl as ref
from curiopath.neuralnet import Mlp

nb = pytest.importorskip("curiopath.kernels._numba")


@pytest.fixture(params=[[3, 1], [4, 7, 2], [10, 64, 64, 64, 15], [25, 16, 16, 10]])
def net_case(request):
    rng = np.random.default_rng(len(request.param))
    net = Mlp.create(request.param, "identity", rng)
    net.params += rng.normal(0, 0.05, net.params.size)
    x = rng.normal(size=(9, request.param[0]))
    g = rng.normal(size=(9, request.param[-1]))
    return net, x, g


def test_forward_agrees(net_case):
    net, x, _ = net_case
    o1, a1 = nb.mlp_forward(net.params, net.dims, x)
    o2, a2 = ref.mlp_forward(net.params, net.dims, x)
    np.testing.assert_allclose(o1, o2, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(a1, a2, rtol=1e-12, atol=1e-12)


def test_backward_agrees(net_case):
    net, x, g = net_case
    _, acts = ref.mlp_forward(net.params, net.dims, x)
    np.testing.assert_allclose(nb.mlp_backward(net.params, net.dims, acts, g),
                               ref.mlp_backward(net.params, net.dims, acts, g),
                               rtol=1e-11, atol=1e-12)


def test_adam_agrees():
    rng = np.random.default_rng(5)
    p1 = rng.normal(size=200)
    p2 = p1.copy()
    m1, v1, m2, v2 = (np.zeros(200) for _ in range(4))
    for step in range(1, 30):
        g = rng.normal(size=200) * 10.0 ** rng.integers(-160, 2, size=200)
        nb.adam_update(p1, g, m1, v1, step, 1e-3, 0.9, 0.999, 1e-8)
        ref.adam_update(p2, g, m2, v2, step, 1e-3, 0.9, 0.999, 1e-8)
    np.testing.assert_allclose(p1, p2, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(m1 == 0, m2 == 0)


@pytest.mark.parametrize("seed", range(5))
def test_m3pl_agrees(seed):
    rng = np.random.default_rng(seed)
    k, j = 6, 8
    a = np.zeros((j, k))
    a[np.arange(j), rng.integers(0, k, j)] = rng.uniform(0.5, 2.0, j)
    b = rng.normal(size=j)
    c = rng.uniform(0, 0.25, j)
    c[0] = 0.0
    y = (rng.random(j) < 0.5).astype(float)
    th = rng.normal(size=k)
    prior = rng.normal(size=k)
    args = (th, prior, 1 / j, a, b, c, y)
    assert nb.m3pl_objective(*args) == pytest.approx(ref.m3pl_objective(*args), rel=1e-12)
    np.testing.assert_allclose(nb.m3pl_gradient(*args), ref.m3pl_gradient(*args),
                               rtol=1e-10, atol=1e-12)
    t1, _, ok1 = nb.m3pl_ascent(prior, prior, 1 / j, a, b, c, y, 5000, 1e-7)
    t2, _, ok2 = ref.m3pl_ascent(prior, prior, 1 / j, a, b, c, y, 5000, 1e-7)
    assert ok1 and ok2
    np.testing.assert_allclose(t1, t2, atol=1e-6)


def test_pure_numpy_flag_selects_reference():
    import subprocess
    import sys

    code = "from curiopath import kernels; print(kernels.BACKEND, kernels.numba_impl)"
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                         env={"CURIOPATH_PURE_NUMPY": "1", "PATH": ""}, check=True)
    assert out.stdout.split() == ["numpy", "None"]
