"""Independent float64 reference implementations used as test oracles.

These deliberately avoid the production code paths: convolution is the
direct sliding-window sum, everything runs in float64, and nothing here
imports the package.
"""

import numpy as np


def naive_conv2d(x, w, b, stride=1, pad=0):
    """Direct six-nested-loop convolution, float64."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, c, h, wd = x.shape
    oc, ic, kh, kw = w.shape
    assert c == ic
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for ni in range(n):
        for o in range(oc):
            for y in range(oh):
                for xo in range(ow):
                    acc = b[o]
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                yy = y * stride + i - pad
                                xx = xo * stride + j - pad
                                if 0 <= yy < h and 0 <= xx < wd:
                                    acc += x[ni, ci, yy, xx] * w[o, ci, i, j]
                    out[ni, o, y, xo] = acc
    return out


def naive_maxpool(x):
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    out = np.zeros((n, c, h // 2, w // 2))
    for ni in range(n):
        for ci in range(c):
            for y in range(h // 2):
                for xo in range(w // 2):
                    out[ni, ci, y, xo] = x[ni, ci, 2 * y : 2 * y + 2, 2 * xo : 2 * xo + 2].max()
    return out


def naive_gap(x):
    return np.asarray(x, dtype=np.float64).mean(axis=(2, 3))


def naive_dense(x, w, b):
    return np.asarray(x, np.float64) @ np.asarray(w, np.float64) + np.asarray(b, np.float64)


def naive_relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def naive_softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def naive_softmax_ce(logits, targets):
    p = naive_softmax(logits)
    rows = np.arange(len(targets))
    return float(-np.mean(np.log(np.maximum(p[rows, targets], 1e-12))))
