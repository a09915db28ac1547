# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled inner loops.

Every function here has a numpy twin in ``_kernels_py`` with the same
signature; ``eulernet.kernels`` picks one at import time. Callers pass
C-contiguous arrays and preallocated outputs.
"""

from libc.math cimport isfinite

ctypedef fused real:
    float
    double


cdef enum:
    TW = 16
    TW1 = 64


cdef inline void _tile4(const real *x, const real *w, real *out, Py_ssize_t C, Py_ssize_t H,
                        Py_ssize_t W, Py_ssize_t y, Py_ssize_t x0, Py_ssize_t skip) noexcept nogil:
    # columns x0..x0+TW-1 of 4 output planes, needs 1 <= x0 and x0+TW < W;
    # the first ``skip`` columns are computed but not written (overlapping last tile)
    cdef real a0[TW]
    cdef real a1[TW]
    cdef real a2[TW]
    cdef real a3[TW]
    cdef Py_ssize_t j, ci, ky, kx, yy, P = H * W, WS = C * 9
    cdef real w0, w1, w2, w3, v
    cdef const real *ip
    cdef const real *wp
    for j in range(TW):
        a0[j] = 0
        a1[j] = 0
        a2[j] = 0
        a3[j] = 0
    for ci in range(C):
        for ky in range(3):
            yy = y + ky - 1
            if yy < 0 or yy >= H:
                continue
            ip = x + ci * P + yy * W + x0 - 1
            wp = w + ci * 9 + ky * 3
            for kx in range(3):
                w0 = wp[kx]
                w1 = wp[WS + kx]
                w2 = wp[2 * WS + kx]
                w3 = wp[3 * WS + kx]
                for j in range(TW):
                    v = ip[j + kx]
                    a0[j] += w0 * v
                    a1[j] += w1 * v
                    a2[j] += w2 * v
                    a3[j] += w3 * v
    out += y * W + x0
    for j in range(skip, TW):
        out[j] += a0[j]
        out[P + j] += a1[j]
        out[2 * P + j] += a2[j]
        out[3 * P + j] += a3[j]


cdef inline void _tile1(const real *x, const real *w, real *out, Py_ssize_t C, Py_ssize_t H,
                        Py_ssize_t W, Py_ssize_t y, Py_ssize_t x0, Py_ssize_t skip) noexcept nogil:
    # single output plane; wider tile keeps enough independent accumulators in flight
    cdef real a0[TW1]
    cdef Py_ssize_t j, ci, ky, kx, yy, P = H * W
    cdef real w0
    cdef const real *ip
    for j in range(TW1):
        a0[j] = 0
    for ci in range(C):
        for ky in range(3):
            yy = y + ky - 1
            if yy < 0 or yy >= H:
                continue
            ip = x + ci * P + yy * W + x0 - 1
            for kx in range(3):
                w0 = w[ci * 9 + ky * 3 + kx]
                for j in range(TW1):
                    a0[j] += w0 * ip[j + kx]
    out += y * W + x0
    for j in range(skip, TW1):
        out[j] += a0[j]


cdef inline void _pixel(const real *x, const real *w, real *out, Py_ssize_t nb, Py_ssize_t C,
                        Py_ssize_t H, Py_ssize_t W, Py_ssize_t y, Py_ssize_t c) noexcept nogil:
    # one output column with explicit bounds, for edges and narrow maps
    cdef Py_ssize_t j, ci, ky, kx, yy, xx, P = H * W, WS = C * 9
    cdef real s, v
    for j in range(nb):
        s = 0
        for ci in range(C):
            for ky in range(3):
                yy = y + ky - 1
                if yy < 0 or yy >= H:
                    continue
                for kx in range(3):
                    xx = c + kx - 1
                    if xx < 0 or xx >= W:
                        continue
                    s += w[j * WS + ci * 9 + ky * 3 + kx] * x[ci * P + yy * W + xx]
        out[j * P + y * W + c] += s


def conv3x3_forward(const real[:, :, :, ::1] x, const real[:, :, :, ::1] w,
                    real[:, :, :, ::1] out):
    """Accumulate a zero-padded 3x3 cross-correlation of ``x`` into ``out``."""
    cdef Py_ssize_t N = out.shape[0], Co = out.shape[1], H = out.shape[2], W = out.shape[3]
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t n, co, y, c, nb, x0, tw, last
    cdef const real *xn
    cdef const real *wc
    cdef real *oc
    if N == 0 or Co == 0 or H == 0 or W == 0:
        return
    with nogil:
        for n in range(N):
            xn = &x[n, 0, 0, 0]
            co = 0
            while co < Co:
                nb = 4 if co + 4 <= Co else 1
                tw = TW if nb == 4 else TW1
                wc = &w[co, 0, 0, 0]
                oc = &out[n, co, 0, 0]
                for y in range(H):
                    _pixel(xn, wc, oc, nb, C, H, W, y, 0)
                    if W < tw + 2:
                        for c in range(1, W):
                            _pixel(xn, wc, oc, nb, C, H, W, y, c)
                        continue
                    x0 = 1
                    while x0 + tw < W:
                        if nb == 4:
                            _tile4(xn, wc, oc, C, H, W, y, x0, 0)
                        else:
                            _tile1(xn, wc, oc, C, H, W, y, x0, 0)
                        x0 += tw
                    if x0 < W - 1:
                        last = W - 1 - tw
                        if nb == 4:
                            _tile4(xn, wc, oc, C, H, W, y, last, x0 - last)
                        else:
                            _tile1(xn, wc, oc, C, H, W, y, last, x0 - last)
                    _pixel(xn, wc, oc, nb, C, H, W, y, W - 1)
                co += nb


def conv3x3_backward_weight(const real[:, :, :, ::1] x, const real[:, :, :, ::1] g,
                            real[:, :, :, ::1] gw):
    cdef Py_ssize_t N = g.shape[0], Co = g.shape[1], H = g.shape[2], W = g.shape[3]
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t n, co, ci, ky, kx, y, i, j, nb, yy
    cdef real s00, s01, s02, s10, s11, s12, s20, s21, s22, s30, s31, s32
    cdef real v0, v1, v2, q0, q1, q2, q3
    cdef real acc[36]
    cdef const real *gp[4]
    cdef const real *ip
    if W < 3:
        raise ValueError("conv3x3_backward_weight needs W >= 3")
    with nogil:
        co = 0
        while co < Co:
            nb = 4 if co + 4 <= Co else 1
            for ci in range(C):
                for j in range(36):
                    acc[j] = 0
                for n in range(N):
                    for y in range(H):
                        for j in range(nb):
                            gp[j] = &g[n, co + j, y, 0]
                        for j in range(nb, 4):
                            gp[j] = gp[0]
                        for ky in range(3):
                            yy = y + ky - 1
                            if yy < 0 or yy >= H:
                                continue
                            ip = &x[n, ci, yy, 0]
                            s00 = 0; s01 = 0; s02 = 0
                            s10 = 0; s11 = 0; s12 = 0
                            s20 = 0; s21 = 0; s22 = 0
                            s30 = 0; s31 = 0; s32 = 0
                            for i in range(1, W - 1):
                                v0 = ip[i - 1]
                                v1 = ip[i]
                                v2 = ip[i + 1]
                                q0 = gp[0][i]
                                q1 = gp[1][i]
                                q2 = gp[2][i]
                                q3 = gp[3][i]
                                s00 = s00 + q0 * v0
                                s01 = s01 + q0 * v1
                                s02 = s02 + q0 * v2
                                s10 = s10 + q1 * v0
                                s11 = s11 + q1 * v1
                                s12 = s12 + q1 * v2
                                s20 = s20 + q2 * v0
                                s21 = s21 + q2 * v1
                                s22 = s22 + q2 * v2
                                s30 = s30 + q3 * v0
                                s31 = s31 + q3 * v1
                                s32 = s32 + q3 * v2
                            # column 0 has no left tap, column W-1 no right tap
                            i = W - 1
                            s01 = s01 + gp[0][0] * ip[0] + gp[0][i] * ip[i]
                            s02 = s02 + gp[0][0] * ip[1]
                            s00 = s00 + gp[0][i] * ip[i - 1]
                            s11 = s11 + gp[1][0] * ip[0] + gp[1][i] * ip[i]
                            s12 = s12 + gp[1][0] * ip[1]
                            s10 = s10 + gp[1][i] * ip[i - 1]
                            s21 = s21 + gp[2][0] * ip[0] + gp[2][i] * ip[i]
                            s22 = s22 + gp[2][0] * ip[1]
                            s20 = s20 + gp[2][i] * ip[i - 1]
                            s31 = s31 + gp[3][0] * ip[0] + gp[3][i] * ip[i]
                            s32 = s32 + gp[3][0] * ip[1]
                            s30 = s30 + gp[3][i] * ip[i - 1]
                            acc[ky * 3] += s00
                            acc[ky * 3 + 1] += s01
                            acc[ky * 3 + 2] += s02
                            acc[9 + ky * 3] += s10
                            acc[9 + ky * 3 + 1] += s11
                            acc[9 + ky * 3 + 2] += s12
                            acc[18 + ky * 3] += s20
                            acc[18 + ky * 3 + 1] += s21
                            acc[18 + ky * 3 + 2] += s22
                            acc[27 + ky * 3] += s30
                            acc[27 + ky * 3 + 1] += s31
                            acc[27 + ky * 3 + 2] += s32
                for j in range(nb):
                    for ky in range(3):
                        for kx in range(3):
                            gw[co + j, ci, ky, kx] += acc[9 * j + ky * 3 + kx]
            co += nb


def maxpool2_forward(const real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                     unsigned char[:, :, :, ::1] arg):
    """2x2 max pool; ``arg`` gets the row-major window slot of the first maximum."""
    cdef Py_ssize_t N = out.shape[0], C = out.shape[1], Ho = out.shape[2], Wo = out.shape[3]
    cdef Py_ssize_t n, c, y, i
    cdef real best, v
    cdef unsigned char k
    with nogil:
        for n in range(N):
            for c in range(C):
                for y in range(Ho):
                    for i in range(Wo):
                        best = x[n, c, 2 * y, 2 * i]
                        k = 0
                        v = x[n, c, 2 * y, 2 * i + 1]
                        if v > best:
                            best = v
                            k = 1
                        v = x[n, c, 2 * y + 1, 2 * i]
                        if v > best:
                            best = v
                            k = 2
                        v = x[n, c, 2 * y + 1, 2 * i + 1]
                        if v > best:
                            best = v
                            k = 3
                        out[n, c, y, i] = best
                        arg[n, c, y, i] = k


def maxpool2_backward(const real[:, :, :, ::1] g, const unsigned char[:, :, :, ::1] arg,
                      real[:, :, :, ::1] gx):
    cdef Py_ssize_t N = g.shape[0], C = g.shape[1], Ho = g.shape[2], Wo = g.shape[3]
    cdef Py_ssize_t n, c, y, i
    cdef unsigned char k
    with nogil:
        for n in range(N):
            for c in range(C):
                for y in range(Ho):
                    for i in range(Wo):
                        k = arg[n, c, y, i]
                        gx[n, c, 2 * y + (k >> 1), 2 * i + (k & 1)] += g[n, c, y, i]


def diirf_forward(const real[:, :, ::1] x, double b0, double b1, double b2,
                  double a1, double a2, real[:, :, ::1] y):
    """Transposed direct form II biquad along axis 1, independently per (batch, pixel)."""
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], P = x.shape[2]
    cdef Py_ssize_t b, t, p
    cdef real h1, h2, xv, yv
    cdef real cb0 = b0, cb1 = b1, cb2 = b2, ca1 = a1, ca2 = a2
    with nogil:
        for b in range(B):
            for p in range(P):
                h1 = 0
                h2 = 0
                for t in range(T):
                    xv = x[b, t, p]
                    yv = cb0 * xv + h1
                    h1 = cb1 * xv + h2 - ca1 * yv
                    h2 = cb2 * xv - ca2 * yv
                    y[b, t, p] = yv


def diirf_backward(const real[:, :, ::1] gy, const real[:, :, ::1] x,
                   const real[:, :, ::1] y, double b0, double b1, double b2,
                   double a1, double a2, real[:, :, ::1] gx, double[::1] gcoef):
    """Backprop through time; writes input grad and adds the five coefficient grads."""
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], P = x.shape[2]
    cdef Py_ssize_t b, t, p
    cdef double g1, g2, gyv, xv, yv
    cdef double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0
    with nogil:
        for b in range(B):
            for p in range(P):
                g1 = 0
                g2 = 0
                for t in range(T - 1, -1, -1):
                    xv = x[b, t, p]
                    yv = y[b, t, p]
                    gyv = gy[b, t, p] - a1 * g1 - a2 * g2
                    gx[b, t, p] = b0 * gyv + b1 * g1 + b2 * g2
                    s0 += gyv * xv
                    s1 += g1 * xv
                    s2 += g2 * xv
                    s3 -= g1 * yv
                    s4 -= g2 * yv
                    g2 = g1
                    g1 = gyv
    gcoef[0] += s0
    gcoef[1] += s1
    gcoef[2] += s2
    gcoef[3] += s3
    gcoef[4] += s4


def all_finite(const real[::1] x):
    cdef Py_ssize_t i
    for i in range(x.shape[0]):
        if not isfinite(x[i]):
            return False
    return True


def rasterize_evenodd(const double[:, ::1] poly, unsigned char[:, ::1] out):
    """Even-odd fill on pixel centres; ``poly`` is in pixel units (x, y).

    Centres lying exactly on an edge count as inside.
    """
    cdef Py_ssize_t H = out.shape[0], W = out.shape[1], K = poly.shape[0]
    cdef Py_ssize_t r, c, k, j
    cdef double px, py, xi, yi, xj, yj, cross
    cdef bint inside, on_edge
    with nogil:
        for r in range(H):
            py = r + 0.5
            for c in range(W):
                px = c + 0.5
                inside = False
                on_edge = False
                j = K - 1
                for k in range(K):
                    xi = poly[k, 0]
                    yi = poly[k, 1]
                    xj = poly[j, 0]
                    yj = poly[j, 1]
                    cross = (xj - xi) * (py - yi) - (yj - yi) * (px - xi)
                    if (cross == 0 and min(xi, xj) <= px <= max(xi, xj)
                            and min(yi, yj) <= py <= max(yi, yj)):
                        on_edge = True
                        break
                    if (yi > py) != (yj > py):
                        if px < (xj - xi) * (py - yi) / (yj - yi) + xi:
                            inside = not inside
                    j = k
                out[r, c] = 1 if (inside or on_edge) else 0
