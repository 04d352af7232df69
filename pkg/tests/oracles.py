"""Slow reference implementations used as independent test oracles.

Everything here is written with explicit Python loops over float64 values
and shares no code with the package.
"""

import math

import numpy as np


def conv2d(x, k, b, pad, stride=1):
    c, h, w = x.shape
    oc, ic, kh, kw = k.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((oc, ho, wo))
    for o in range(oc):
        for i in range(ho):
            for j in range(wo):
                acc = float(b[o])
                for ci in range(ic):
                    for di in range(kh):
                        for dj in range(kw):
                            y = i * stride + di - pad
                            xx = j * stride + dj - pad
                            if 0 <= y < h and 0 <= xx < w:
                                acc += float(k[o, ci, di, dj]) * float(x[ci, y, xx])
                out[o, i, j] = acc
    return out


def pool(x, mode):
    c, h, w = x.shape
    hp, wp = h + h % 2, w + w % 2
    out = np.zeros((c, hp // 2, wp // 2))
    for ch in range(c):
        for i in range(hp // 2):
            for j in range(wp // 2):
                vals = []
                for di in range(2):
                    for dj in range(2):
                        y = min(2 * i + di, h - 1)
                        xx = min(2 * j + dj, w - 1)
                        vals.append(float(x[ch, y, xx]))
                out[ch, i, j] = max(vals) if mode == "max" else sum(vals) / 4.0
    return out


def upsample(x, th, tw):
    c, h, w = x.shape
    out = np.zeros((c, th, tw))
    for ch in range(c):
        for i in range(th):
            for j in range(tw):
                out[ch, i, j] = x[ch, (i * h) // th, (j * w) // tw]
    return out


def gram(fl, fm):
    kl, h, w = fl.shape
    up = upsample(fm, h, w)
    km = fm.shape[0]
    g = np.zeros((kl, km))
    for i in range(kl):
        for j in range(km):
            acc = 0.0
            for y in range(h):
                for xx in range(w):
                    acc += float(fl[i, y, xx]) * float(up[j, y, xx])
            g[i, j] = acc
    return g


def content_loss(fn, fc):
    acc = 0.0
    for v in np.asarray(fn, dtype=np.float64).ravel() - np.asarray(fc, dtype=np.float64).ravel():
        acc += v * v
    return 0.5 * acc


def style_loss(taps, targets, pairs, weights=None):
    weights = weights or {}
    total = 0.0
    for pair in pairs:
        l, m = pair
        g = gram(taps[l], taps[m])
        t = np.asarray(targets[pair], dtype=np.float64)
        kl, km = g.shape
        p = taps[l].shape[1] * taps[l].shape[2]
        acc = 0.0
        for i in range(kl):
            for j in range(km):
                acc += (g[i, j] - t[i, j]) ** 2
        total += weights.get(pair, 1.0) * acc / (4.0 * p * p * kl * km)
    return total


def central_difference(f, x, index, h):
    xp = x.copy()
    xm = x.copy()
    xp[index] += h
    xm[index] -= h
    return (f(xp) - f(xm)) / (2 * h)


def relative_error(a, b, floor=0.0):
    a = float(a)
    b = float(b)
    denom = max(abs(a), abs(b), floor)
    if denom == 0.0:
        return 0.0
    return abs(a - b) / denom


def max_relative_error(analytic, numeric, floor_fraction=1e-6):
    analytic = np.asarray(analytic, dtype=np.float64).ravel()
    numeric = np.asarray(numeric, dtype=np.float64).ravel()
    floor = floor_fraction * max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-300)
    return max(relative_error(a, n, floor) for a, n in zip(analytic, numeric))


def dense_bfgs_direction(pairs, gamma, g):
    n = g.size
    h = gamma * np.eye(n)
    for s, y in pairs:
        rho = 1.0 / float(s @ y)
        left = np.eye(n) - rho * np.outer(s, y)
        h = left @ h @ left.T + rho * np.outer(s, s)
    return -h @ g


def covariance(x):
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[1]
    mu = [sum(row) / n for row in x]
    c = np.zeros((x.shape[0], x.shape[0]))
    for i in range(x.shape[0]):
        for j in range(i, x.shape[0]):
            c[i, j] = c[j, i] = math.fsum((x[i] - mu[i]) * (x[j] - mu[j])) / (n - 1)
    return c
