import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from partygraph import autodiff as ad


def rand(rng, *shape):
    return ad.param(rng.normal(size=shape))


@pytest.mark.parametrize("case", ["matmul", "spmm", "relu", "gather", "rowdot", "bce", "xent", "bias"])
def test_each_op_matches_finite_differences(case):
    rng = np.random.default_rng(0)
    x, w = rand(rng, 6, 4), rand(rng, 4, 3)
    m = sp.random(6, 6, density=0.4, random_state=1, format="csr")
    idx = np.array([0, 2, 2, 5])
    labels = np.array([0, 2, 1, 1])
    b = rand(rng, 1)
    target = (np.random.default_rng(2).random((4, 4)) > 0.5).astype(float)

    def build():
        if case == "matmul":
            return ad.bce_with_logits(ad.rowdot(ad.matmul(x, w), ad.matmul(x, w)), np.ones(6))
        if case == "spmm":
            return ad.softmax_cross_entropy(ad.matmul(ad.spmm(m, x), w), np.arange(6) % 3)
        if case == "relu":
            return ad.softmax_cross_entropy(ad.relu(ad.matmul(x, w)), np.arange(6) % 3)
        if case == "gather":
            return ad.softmax_cross_entropy(ad.gather_rows(ad.matmul(x, w), idx), labels)
        if case == "rowdot":
            return ad.bce_with_logits(ad.rowdot(ad.gather_rows(x, idx), ad.gather_rows(x, idx[::-1])),
                                      np.array([1, 0, 1, 0]))
        if case == "bce":
            return ad.bce_with_logits(ad.scale(ad.gather_rows(x, idx), 0.5), target)
        if case == "xent":
            return ad.softmax_cross_entropy(x, np.arange(6) % 4)
        return ad.bce_with_logits(ad.add(ad.rowdot(x, x), b), np.arange(6) % 2)

    assert ad.gradient_check(build, [x, w, b], n_checks=40) < 1e-6


def test_bce_is_stable_for_large_logits():
    z = ad.param(np.array([1000.0, -1000.0]))
    loss = ad.bce_with_logits(z, np.array([1.0, 0.0]))
    assert float(loss.data) == pytest.approx(0.0, abs=1e-12)
    loss.backward()
    assert np.all(np.isfinite(z.grad))


def test_backward_accumulates_shared_nodes():
    x = ad.param(np.array([[2.0]]))
    y = ad.add(x, x)
    ad.scale(y, 3.0).backward()
    assert x.grad.tolist() == [[6.0]]


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_adam_decreases_a_convex_loss(seed):
    rng = np.random.default_rng(seed)
    x = ad.param(rng.normal(size=(3, 2)))
    target = np.array([0, 1, 0])
    opt = ad.Adam([x], lr=0.05)
    first = None
    for _ in range(50):
        opt.zero_grad()
        loss = ad.softmax_cross_entropy(x, target)
        first = first if first is not None else float(loss.data)
        loss.backward()
        opt.step()
    assert float(ad.softmax_cross_entropy(x, target).data) < first
