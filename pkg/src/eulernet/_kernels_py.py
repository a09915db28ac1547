"""Pure-numpy twins of the compiled kernels in ``_kernels.pyx``.

Same signatures, same in-place output contract. Used when the extension
is not built or when ``EULER_BACKEND=python``.
"""

import numpy as np


def _pad(x):
    return np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))


def conv3x3_forward(x, w, out):
    xp = _pad(x)
    N, Co, H, W = out.shape
    C = xp.shape[1]
    wm = w.reshape(Co, C * 9)
    cols = np.empty((C, 3, 3, H, W), dtype=out.dtype)
    for n in range(N):
        for ky in range(3):
            for kx in range(3):
                cols[:, ky, kx] = xp[n, :, ky:ky + H, kx:kx + W]
        out[n] += (wm @ cols.reshape(C * 9, H * W)).reshape(Co, H, W)


def conv3x3_backward_weight(x, g, gw):
    xp = _pad(x)
    N, Co, H, W = g.shape
    C = xp.shape[1]
    cols = np.empty((C, 3, 3, H, W), dtype=g.dtype)
    acc = np.zeros((Co, C * 9), dtype=g.dtype)
    for n in range(N):
        for ky in range(3):
            for kx in range(3):
                cols[:, ky, kx] = xp[n, :, ky:ky + H, kx:kx + W]
        acc += g[n].reshape(Co, H * W) @ cols.reshape(C * 9, H * W).T
    gw += acc.reshape(Co, C, 3, 3)


def maxpool2_forward(x, out, arg):
    win = np.stack(
        [x[:, :, 0::2, 0::2], x[:, :, 0::2, 1::2], x[:, :, 1::2, 0::2], x[:, :, 1::2, 1::2]]
    )
    # argmax returns the first maximum, which is the row-major tie rule
    k = np.argmax(win, axis=0)
    out[...] = np.take_along_axis(win, k[None], axis=0)[0]
    arg[...] = k


def maxpool2_backward(g, arg, gx):
    for k in range(4):
        dy, dx = k >> 1, k & 1
        gx[:, :, dy::2, dx::2] += np.where(arg == k, g, 0)


def diirf_forward(x, b0, b1, b2, a1, a2, y):
    h1 = np.zeros_like(x[:, 0])
    h2 = np.zeros_like(x[:, 0])
    dt = x.dtype.type
    b0, b1, b2, a1, a2 = dt(b0), dt(b1), dt(b2), dt(a1), dt(a2)
    for t in range(x.shape[1]):
        xv = x[:, t]
        yv = b0 * xv + h1
        h1 = b1 * xv + h2 - a1 * yv
        h2 = b2 * xv - a2 * yv
        y[:, t] = yv


def diirf_backward(gy, x, y, b0, b1, b2, a1, a2, gx, gcoef):
    g1 = np.zeros(x[:, 0].shape, dtype=np.float64)
    g2 = np.zeros_like(g1)
    s = np.zeros(5)
    for t in range(x.shape[1] - 1, -1, -1):
        xv = x[:, t].astype(np.float64)
        yv = y[:, t].astype(np.float64)
        gyv = gy[:, t] - a1 * g1 - a2 * g2
        gx[:, t] = b0 * gyv + b1 * g1 + b2 * g2
        s += [(gyv * xv).sum(), (g1 * xv).sum(), (g2 * xv).sum(),
              -(g1 * yv).sum(), -(g2 * yv).sum()]
        g1, g2 = gyv, g1
    gcoef += s


def all_finite(x):
    return bool(np.isfinite(x).all())


def rasterize_evenodd(poly, out):
    H, W = out.shape
    py, px = np.mgrid[0:H, 0:W].astype(np.float64) + 0.5
    inside = np.zeros((H, W), dtype=bool)
    on_edge = np.zeros((H, W), dtype=bool)
    K = poly.shape[0]
    for k in range(K):
        xi, yi = poly[k]
        xj, yj = poly[k - 1]
        cross = (xj - xi) * (py - yi) - (yj - yi) * (px - xi)
        on_edge |= (
            (cross == 0)
            & (px >= min(xi, xj)) & (px <= max(xi, xj))
            & (py >= min(yi, yj)) & (py <= max(yi, yj))
        )
        straddle = (yi > py) != (yj > py)
        if yj != yi:
            xcross = (xj - xi) * (py - yi) / (yj - yi) + xi
            inside ^= straddle & (px < xcross)
    out[...] = inside | on_edge
