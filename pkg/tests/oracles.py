# -*- coding: utf-8 -*-
"""
独立的逐像素/逐元素参考实现, 只用 Python 循环与基本 numpy 索引,
用来校验向量化实现
"""

import math

import numpy as np

BETA2 = 0.3
EPS_E = 1e-12
C1 = 0.01 ** 2
C2 = 0.03 ** 2
THRESHOLDS = [k / 256 for k in range(1, 256)]


def naive_conv2d(x, w, b, stride=1, padding=0):
    """六重循环直接求和的互相关"""
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    out_h = (h + 2 * padding - k) // stride + 1
    out_w = (wd + 2 * padding - k) // stride + 1
    xp = np.zeros((n, cin, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    out = np.zeros((n, cout, out_h, out_w))
    for bi in range(n):
        for co in range(cout):
            for i in range(out_h):
                for j in range(out_w):
                    total = b[co]
                    for ci in range(cin):
                        for ki in range(k):
                            for kj in range(k):
                                total += w[co, ci, ki, kj] * xp[bi, ci, i * stride + ki, j * stride + kj]
                    out[bi, co, i, j] = total
    return out


def naive_conv2d_grads(x, w, grad, stride=1, padding=0):
    """对上游梯度 grad 求 (dx, dw, db)"""
    n, cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    _, _, out_h, out_w = grad.shape
    xp = np.zeros((n, cin, h + 2 * padding, wd + 2 * padding))
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    dxp = np.zeros_like(xp)
    dw = np.zeros_like(w, dtype=np.float64)
    db = np.zeros(cout)
    for bi in range(n):
        for co in range(cout):
            for i in range(out_h):
                for j in range(out_w):
                    g = grad[bi, co, i, j]
                    db[co] += g
                    for ci in range(cin):
                        for ki in range(k):
                            for kj in range(k):
                                r, c = i * stride + ki, j * stride + kj
                                dw[co, ci, ki, kj] += g * xp[bi, ci, r, c]
                                dxp[bi, ci, r, c] += g * w[co, ci, ki, kj]
    return dxp[:, :, padding:padding + h, padding:padding + wd], dw, db


def sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def relu(v):
    return np.maximum(v, 0.0)


def prelu(v, slope):
    return np.where(v > 0, v, slope * v)


def spatial_attention(x, w, b):
    """SA: σ(Conv(Cat(mean_c, max_c))) ⊙ x"""
    squeeze = np.concatenate([x.mean(axis=1, keepdims=True), x.max(axis=1, keepdims=True)], axis=1)
    k = w.shape[-1]
    a = sigmoid(naive_conv2d(squeeze, w, b, padding=k // 2))
    return x * a, a


def channel_attention(x, w1, b1, w2, b2):
    """CA: σ(FC2(ReLU(FC1(GAP(x))))) ⊙ x, FC 为 1x1 卷积"""
    gap = x.mean(axis=(2, 3), keepdims=True)
    hidden = relu(naive_conv2d(gap, w1, b1))
    weights = sigmoid(naive_conv2d(hidden, w2, b2))
    return x * weights, weights


# ---------------- 指标 ----------------

def mae(pred, gt):
    h, w = gt.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            total += abs(pred[i, j] - gt[i, j])
    return total / (h * w)


def _counts(pred, gt, t):
    tp = fp = fn = 0
    h, w = gt.shape
    for i in range(h):
        for j in range(w):
            positive = pred[i, j] >= t
            if positive and gt[i, j] == 1:
                tp += 1
            elif positive:
                fp += 1
            elif gt[i, j] == 1:
                fn += 1
    return tp, fp, fn


def max_f(pred, gt):
    best = 0.0
    for t in THRESHOLDS:
        tp, fp, fn = _counts(pred, gt, t)
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn)
        denom = BETA2 * precision + recall
        f = (1 + BETA2) * precision * recall / denom if denom > 0 else 0.0
        best = max(best, f)
    return best


def e_single(binary, gt):
    h, w = gt.shape
    n = h * w
    g_mean = sum(gt[i, j] for i in range(h) for j in range(w)) / n
    b_mean = sum(binary[i, j] for i in range(h) for j in range(w)) / n
    if g_mean == 0:
        return sum(1.0 - binary[i, j] for i in range(h) for j in range(w)) / n
    if g_mean == 1:
        return b_mean
    total = 0.0
    for i in range(h):
        for j in range(w):
            pb = binary[i, j] - b_mean
            pg = gt[i, j] - g_mean
            xi = 2 * pg * pb / (pg * pg + pb * pb + EPS_E)
            total += (1 + xi) ** 2 / 4
    return total / n


def max_e(pred, gt):
    return max(e_single((pred >= t).astype(float), gt) for t in THRESHOLDS)


def _mean_std(values):
    n = len(values)
    m = sum(values) / n
    var = sum((v - m) ** 2 for v in values) / n
    return m, math.sqrt(var)


def _object(values, lam=1.0):
    if not values:
        return 0.0
    m, s = _mean_std(values)
    return 2 * m / (m * m + 1 + 2 * lam * s)


def _ssim(p, g):
    vp = [float(v) for v in p.ravel()]
    vg = [float(v) for v in g.ravel()]
    n = len(vp)
    x = sum(vp) / n
    y = sum(vg) / n
    sx = sum((a - x) ** 2 for a in vp) / n
    sy = sum((b - y) ** 2 for b in vg) / n
    sxy = sum((a - x) * (b - y) for a, b in zip(vp, vg)) / n
    return ((2 * x * y + C1) * (2 * sxy + C2)) / ((x * x + y * y + C1) * (sx + sy + C2))


def s_measure(pred, gt, alpha=0.5):
    h, w = gt.shape
    fg = [(i, j) for i in range(h) for j in range(w) if gt[i, j] == 1]
    mu = len(fg) / (h * w)
    if mu == 0:
        return 1 - sum(pred[i, j] for i in range(h) for j in range(w)) / (h * w)
    if mu == 1:
        return sum(pred[i, j] for i in range(h) for j in range(w)) / (h * w)

    o_fg = _object([pred[i, j] for i, j in fg])
    o_bg = _object([1 - pred[i, j] for i in range(h) for j in range(w) if gt[i, j] == 0])
    s_o = mu * o_fg + (1 - mu) * o_bg

    row = int(np.round(sum(i for i, _ in fg) / len(fg))) + 1
    col = int(np.round(sum(j for _, j in fg) / len(fg))) + 1
    s_r = 0.0
    for r0, r1 in ((0, row), (row, h)):
        for c0, c1 in ((0, col), (col, w)):
            if r1 <= r0 or c1 <= c0:
                continue
            weight = (r1 - r0) * (c1 - c0) / (h * w)
            s_r += weight * _ssim(pred[r0:r1, c0:c1], gt[r0:r1, c0:c1])
    return max((1 - alpha) * s_o + alpha * s_r, 0.0)
