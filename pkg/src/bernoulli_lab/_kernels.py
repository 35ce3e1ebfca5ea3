"""Compiled per-triangle loops for the phase term of the energy."""
import math

import numpy as np
from numba import njit

# degree-5 seven-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1 = 0.059715871789770, 0.470142064105115
_A2, _B2 = 0.797426985353087, 0.101286507323456
_W0, _W1, _W2 = 0.225, 0.132394152788506, 0.125939180544827
QUAD_L = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
QUAD_W = np.array([_W0, _W1, _W1, _W1, _W2, _W2, _W2])


@njit(cache=True)
def pos_area(a, b, c, A):
    """Area of ``{linear interpolant > 0}``; zero values count as non-positive."""
    pa, pb, pc = a > 0.0, b > 0.0, c > 0.0
    p = int(pa) + int(pb) + int(pc)
    if p == 0:
        return 0.0
    if p == 3:
        return A
    # corner fraction as a product of ratios in [0, 1]: safe for subnormal values
    if p == 1:
        if pa:
            return A * (a / (a - b)) * (a / (a - c))
        if pb:
            return A * (b / (b - a)) * (b / (b - c))
        return A * (c / (c - a)) * (c / (c - b))
    if not pa:
        return A * (1.0 - (a / (a - b)) * (a / (a - c)))
    if not pb:
        return A * (1.0 - (b / (b - a)) * (b / (b - c)))
    return A * (1.0 - (c / (c - a)) * (c / (c - b)))


@njit(cache=True)
def pos_area_all(vals, tris, areas):
    out = np.empty(tris.shape[0])
    for t in range(tris.shape[0]):
        out[t] = pos_area(vals[tris[t, 0]], vals[tris[t, 1]], vals[tris[t, 2]], areas[t])
    return out


@njit(cache=True)
def _clip(P, k, u, level, above, Q):
    """Clip convex polygon P[:k] (barycentric rows) to u >= level (or <=)."""
    m = 0
    for i in range(k):
        j = (i + 1) % k
        di = P[i, 0] * u[0] + P[i, 1] * u[1] + P[i, 2] * u[2] - level
        dj = P[j, 0] * u[0] + P[j, 1] * u[1] + P[j, 2] * u[2] - level
        if not above:
            di, dj = -di, -dj
        if di >= 0.0:
            Q[m, :] = P[i, :]
            m += 1
        if (di >= 0.0) != (dj >= 0.0):
            s = di / (di - dj)
            Q[m, :] = P[i, :] + s * (P[j, :] - P[i, :])
            m += 1
    return m


@njit(cache=True)
def _poly_area_frac(P, k):
    # area in the (l1, l2) plane relative to the reference triangle (1/2)
    s = 0.0
    for i in range(k):
        j = (i + 1) % k
        s += P[i, 1] * P[j, 2] - P[j, 1] * P[i, 2]
    return abs(s)


@njit(cache=True)
def smoothed_phase(vals, tris, areas, eps, ql, qw, want_grad):
    """``sum_T int_T H_eps(u)`` and its nodal gradient.

    ``eps`` holds one band width per triangle; ``H_eps(u) = 3s^2 - 2s^3``
    with ``s = u/eps`` on the band ``0 < u < eps``, 0 below and 1 above.
    The band polygon is cut out exactly and integrated with a degree-5 rule,
    which is exact for the cubic integrand.
    """
    n = vals.shape[0]
    grad = np.zeros(n if want_grad else 1)
    total = 0.0
    P0 = np.eye(3)
    P1 = np.empty((8, 3))
    P2 = np.empty((8, 3))
    u = np.empty(3)
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t, 0], tris[t, 1], tris[t, 2]
        u[0], u[1], u[2] = vals[i0], vals[i1], vals[i2]
        A = areas[t]
        e = eps[t]
        umax = max(u[0], max(u[1], u[2]))
        umin = min(u[0], min(u[1], u[2]))
        if umax <= 0.0:
            continue
        if umin >= e:
            total += A
            continue
        k1 = _clip(P0, 3, u, 0.0, True, P1)
        if k1 < 3:
            continue
        # region above the band contributes its area
        k2 = _clip(P1, k1, u, e, True, P2)
        if k2 >= 3:
            total += A * _poly_area_frac(P2, k2)
        k2 = _clip(P1, k1, u, e, False, P2)
        if k2 < 3:
            continue
        g0 = g1 = g2 = 0.0
        for f in range(1, k2 - 1):
            fa = A * abs((P2[f, 1] - P2[0, 1]) * (P2[f + 1, 2] - P2[0, 2])
                         - (P2[f + 1, 1] - P2[0, 1]) * (P2[f, 2] - P2[0, 2]))
            if fa == 0.0:
                continue
            for q in range(qw.shape[0]):
                l0 = ql[q, 0] * P2[0, 0] + ql[q, 1] * P2[f, 0] + ql[q, 2] * P2[f + 1, 0]
                l1 = ql[q, 0] * P2[0, 1] + ql[q, 1] * P2[f, 1] + ql[q, 2] * P2[f + 1, 1]
                l2 = ql[q, 0] * P2[0, 2] + ql[q, 1] * P2[f, 2] + ql[q, 2] * P2[f + 1, 2]
                s = (l0 * u[0] + l1 * u[1] + l2 * u[2]) / e
                s = min(max(s, 0.0), 1.0)
                w = fa * qw[q]
                total += w * s * s * (3.0 - 2.0 * s)
                if want_grad:
                    dh = w * 6.0 * s * (1.0 - s) / e
                    g0 += dh * l0
                    g1 += dh * l1
                    g2 += dh * l2
        if want_grad:
            grad[i0] += g0
            grad[i1] += g1
            grad[i2] += g2
    return total, grad


@njit(cache=True)
def _node_area(t, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi):
    s = 0.0
    for k in range(lo, hi):
        tr = node_tri[k]
        loc = node_loc[k]
        a = vals[tris[tr, 0]]
        b = vals[tris[tr, 1]]
        c = vals[tris[tr, 2]]
        if loc == 0:
            a = t
        elif loc == 1:
            b = t
        else:
            c = t
        s += pos_area(a, b, c, areas[tr])
    return s


@njit(cache=True)
def _node_energy(t, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi):
    return kii * t * t + 2.0 * t * si + lam * _node_area(t, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)


@njit(cache=True)
def _interval_min(a, b, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi, nsample):
    """Sample then golden-section refine the 1-D node energy on [a, b]."""
    best_t = a
    best_e = _node_energy(a, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
    step = (b - a) / nsample
    kbest = 0
    for k in range(1, nsample + 1):
        t = a + k * step
        e = _node_energy(t, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
        if e < best_e:
            best_e, best_t, kbest = e, t, k
    x0 = a + max(kbest - 1, 0) * step
    x1 = a + min(kbest + 1, nsample) * step
    gr = 0.6180339887498949
    c = x1 - gr * (x1 - x0)
    d = x0 + gr * (x1 - x0)
    fc = _node_energy(c, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
    fd = _node_energy(d, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
    tol = 1e-14 * max(1.0, abs(x0) + abs(x1))
    for _ in range(200):
        if x1 - x0 <= tol:
            break
        if fc < fd:
            x1, d, fd = d, c, fc
            c = x1 - gr * (x1 - x0)
            fc = _node_energy(c, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
        else:
            x0, c, fc = c, d, fd
            d = x0 + gr * (x1 - x0)
            fd = _node_energy(d, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
    if fc < best_e:
        best_e, best_t = fc, c
    if fd < best_e:
        best_e, best_t = fd, d
    return best_t, best_e


@njit(cache=True)
def node_minimize(i, vals, lam, k_ptr, k_ind, k_dat, node_ptr, node_tri, node_loc, tris, areas, nsample):
    """Exact 1-D minimizer of the energy in the value of node ``i``.

    The Dirichlet part is ``K_ii t^2 + 2 t s_i``; the phase area is
    non-decreasing in ``t`` and smooth away from ``t = 0``, so the minimizer
    lies in ``[t_h - sqrt(Lambda sum A / K_ii), t_h]`` with ``t_h`` the
    harmonic value.  Returns ``(t_best, e_best, e_current)``.
    """
    kii = 0.0
    si = 0.0
    for p in range(k_ptr[i], k_ptr[i + 1]):
        j = k_ind[p]
        if j == i:
            kii += k_dat[p]
        else:
            si += k_dat[p] * vals[j]
    lo, hi = node_ptr[i], node_ptr[i + 1]
    asum = 0.0
    all_pos = True
    all_nonpos = True
    for k in range(lo, hi):
        tr = node_tri[k]
        asum += areas[tr]
        for v in range(3):
            if v != node_loc[k]:
                if vals[tris[tr, v]] > 0.0:
                    all_nonpos = False
                else:
                    all_pos = False
    t0 = vals[i]
    th = -si / kii
    # closed-form cases: the phase area is constant on the side of t_h and
    # leaving that side cannot pay off
    if all_nonpos and th <= 0.0:
        return th, kii * th * th + 2.0 * th * si, kii * t0 * t0 + 2.0 * t0 * si + (
            lam * _node_area(t0, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi))
    if all_pos and th > 0.0 and kii * th * th >= lam * asum:
        e0 = _node_energy(t0, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
        return th, kii * th * th + 2.0 * th * si + lam * asum, e0
    e0 = _node_energy(t0, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
    tl = th - math.sqrt(lam * asum / kii) if lam > 0.0 else th
    best_t, best_e = t0, e0
    e = _node_energy(th, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
    if e < best_e:
        best_t, best_e = th, e
    if lam == 0.0:
        return best_t, best_e, e0
    if tl <= 0.0 <= th:
        e = _node_energy(0.0, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas, vals, lo, hi)
        if e <= best_e:
            best_t, best_e = 0.0, e
    # the area term may jump just above 0, so the two sides are searched apart
    tiny = 1e-15 * max(1.0, abs(tl) + abs(th))
    if tl < 0.0:
        t, e = _interval_min(tl, min(th, 0.0), kii, si, lam, node_ptr, node_tri, node_loc, tris, areas,
                             vals, lo, hi, nsample)
        if e < best_e:
            best_t, best_e = t, e
    if th > tiny:
        t, e = _interval_min(max(tl, tiny), th, kii, si, lam, node_ptr, node_tri, node_loc, tris, areas,
                             vals, lo, hi, nsample)
        if e < best_e:
            best_t, best_e = t, e
    return best_t, best_e, e0


@njit(cache=True)
def gs_sweeps(vals, order, lam, k_ptr, k_ind, k_dat, node_ptr, node_tri, node_loc, tris, areas,
              grad_tol, max_sweeps, nsample):
    """Gauss-Seidel sweeps of exact 1-D node minimization.

    Stops after the first sweep whose largest accepted decrease is
    ``<= grad_tol``.  Returns ``(sweeps, moves, last_max_decrease, total_decrease)``.
    """
    moves = 0
    sweeps = 0
    maxdec = 0.0
    total = 0.0
    for sweep in range(max_sweeps):
        sweeps += 1
        maxdec = 0.0
        for i in order:
            t, e, e0 = node_minimize(i, vals, lam, k_ptr, k_ind, k_dat, node_ptr, node_tri, node_loc,
                                     tris, areas, nsample)
            dec = e0 - e
            if dec > 1e-15 * max(1.0, abs(e0)) and t != vals[i]:
                vals[i] = t
                moves += 1
                total += dec
                if dec > maxdec:
                    maxdec = dec
        if maxdec <= grad_tol:
            break
    return sweeps, moves, maxdec, total
