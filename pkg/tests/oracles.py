"""Independent reference implementations shared by the unit and acceptance tests."""
import math

import numpy as np

from pplus import tensor as T
from pplus.gradcheck import finite_diff_check
from pplus.tensor import Tensor

TOL = 1e-6


def check_all_inputs(fn, arrays, rng, tol=TOL):
    """Gradcheck ``sum(fn(*inputs) * w)`` against each input in turn."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    out_shape = fn(*[Tensor(a) for a in arrays]).shape
    w = rng.standard_normal(out_shape)
    errs = []
    for i in range(len(arrays)):
        def f(x, i=i):
            ins = [Tensor(a) for a in arrays]
            ins[i] = x
            return T.tsum(T.mul(fn(*ins), Tensor(w)))
        errs.append(finite_diff_check(f, arrays[i]))
    assert max(errs) < tol, errs
    return errs


# one entry per op in the registry: (builder, input shapes)
CASES = {
    "add": (lambda a, b: T.add(a, b), [(3, 4), (3, 4)]),
    "sub": (lambda a, b: T.sub(a, b), [(3, 4), (3, 4)]),
    "neg": (lambda a: T.neg(a), [(5,)]),
    "scale": (lambda a: T.scale(a, -2.5), [(2, 3)]),
    "mul": (lambda a, b: T.mul(a, b), [(3, 4), (3, 4)]),
    "square": (lambda a: T.square(a), [(4,)]),
    "exp": (lambda a: T.exp(a), [(2, 3)]),
    "log": (lambda a: T.log(T.add(T.square(a), 1.0)), [(2, 3)]),
    "silu": (lambda a: T.silu(a), [(6,)]),
    "reshape": (lambda a: T.reshape(a, (3, 2, 2)), [(4, 3)]),
    "transpose": (lambda a: T.transpose(a, (2, 0, 1)), [(2, 3, 4)]),
    "expand": (lambda a: T.expand(a, (3, 4, 5)), [(1, 4, 1)]),
    "concat": (lambda a, b: T.concat([a, b], axis=1), [(2, 3), (2, 2)]),
    "getitem": (lambda a: T.getitem(a, (slice(None), [0, 2, 2])), [(3, 4)]),
    "sum": (lambda a: T.tsum(a, 1), [(3, 4)]),
    "mean": (lambda a: T.mean(a, 0), [(3, 4)]),
    "logsumexp": (lambda a: T.logsumexp(a, 1), [(3, 5)]),
    "softmax": (lambda a: T.softmax(a), [(2, 5)]),
    "matmul": (lambda a, b: T.matmul(a, b), [(2, 3, 4), (2, 4, 5)]),
    "linear": (lambda x, w, b: T.linear(x, w, b), [(2, 3, 4), (4, 5), (5,)]),
    "group_norm": (lambda x, w, b: T.group_norm(x, 2, w, b), [(2, 4, 3, 3), (4,), (4,)]),
    "layer_norm": (lambda x, w, b: T.layer_norm(x, w, b), [(3, 6), (6,), (6,)]),
    "conv2d": (lambda x, w, b: T.conv2d(x, w, b), [(2, 3, 5, 5), (4, 3, 3, 3), (4,)]),
    "avg_pool2": (lambda a: T.avg_pool2(a), [(1, 2, 4, 4)]),
    "upsample2": (lambda a: T.upsample2(a), [(1, 2, 3, 3)]),
    "attention": (lambda q, k, v: T.attention(q, k, v, key_mask=np.array([[1, 1, 0, 1], [1, 0, 1, 1]], bool)),
                  [(2, 3, 4), (2, 4, 4), (2, 4, 2)]),
}


def brute_kde(E, h, x, joint=False):
    """Plain-Python double loop, independent of the vectorised code."""
    n, d = len(E), len(x)
    if joint:
        s = 0.0
        for e in E:
            p = 1.0
            for j in range(d):
                p *= math.exp(-0.5 * ((x[j] - e[j]) / h[j]) ** 2) / (h[j] * math.sqrt(2 * math.pi))
            s += p
        return math.log(s / n)
    total = 0.0
    for j in range(d):
        s = sum(math.exp(-0.5 * ((x[j] - e[j]) / h[j]) ** 2) / (h[j] * math.sqrt(2 * math.pi)) for e in E)
        total += math.log(s / n)
    return total
