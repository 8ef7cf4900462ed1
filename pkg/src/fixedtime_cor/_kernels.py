"""Compiled closed-loop right-hand side and RK4 driver.

Design data is flattened into padded arrays (see ``simulation.pack_design``)
so the hot loop runs without Python objects.  Functions release the GIL so
independent runs can share a thread pool.
"""

import numpy as np
from numba import njit


_FM = {"nsz", "arcp", "contract", "afn", "reassoc"}
# Fast-math lets LLVM fold np.isfinite away, so finiteness is read off the exponent bits.
_EXP_MASK = 0x7FF0000000000000


@njit(cache=True, inline="always", fastmath=_FM)
def _sig2(x, a, b):
    """``(sig^a(x), sig^b(x))`` sharing one logarithm."""
    if x == 0.0:
        return 0.0, 0.0
    lg = np.log(abs(x))
    pa = np.exp(a * lg)
    pb = np.exp(b * lg)
    if x < 0.0:
        return -pa, -pb
    return pa, pb


@njit(cache=True, nogil=True, fastmath=_FM)
def _rhs_into(z, theta, pk, dz, work):
    """Closed-loop derivative written into ``dz``; ``work`` is scratch space."""
    (q, n_ag, dyn, s_mat, w, mu, alpha, beta, kvec,
     xoff, nn, mm, pp, a_all, b_all, c_all, e_all, f_all,
     pi_all, gam_all, t_all, xinv_all, u_all,
     ch_first, ch_count, ch_start, ch_order, ch_off,
     psi, psib, gam, gamb) = pk
    nmax = t_all.shape[1]
    mmax = xinv_all.shape[1]
    sig = work[:q]
    xt = work[q:q + nmax]
    zt = work[q + nmax:q + 2 * nmax]
    omega = work[q + 2 * nmax:q + 2 * nmax + mmax]
    u = work[q + 2 * nmax + mmax:q + 2 * nmax + 2 * mmax]
    # exosystem
    for r in range(q):
        acc = 0.0
        for c in range(q):
            acc += s_mat[r, c] * z[c]
        dz[r] = acc
    # observers
    for i in range(n_ag):
        base = q + i * q
        for r in range(q):
            acc = 0.0
            for c in range(q):
                acc += s_mat[r, c] * z[base + c]
            dz[base + r] = acc
        if theta == 0:
            continue
        for r in range(q):
            sig[r] = 0.0
        for j in range(n_ag + 1):
            aij = w[i + 1, j]
            if aij == 0.0:
                continue
            jb = 0 if j == 0 else q + (j - 1) * q
            for r in range(q):
                sig[r] += aij * (z[base + r] - z[jb + r])
        for r in range(q):
            sr = sig[r]
            sa, sb = _sig2(sr, alpha, beta)
            dz[base + r] -= mu[0] * sr + mu[1] * sa + mu[2] * sb
    if dyn == 0:
        for r in range(q + n_ag * q, z.shape[0]):
            dz[r] = 0.0
        return
    # agents
    for i in range(n_ag):
        n = nn[i]
        m = mm[i]
        off = xoff[i]
        eb = q + i * q
        for r in range(n):
            acc = z[off + r]
            for c in range(q):
                acc -= pi_all[i, r, c] * z[eb + c]
            xt[r] = acc
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += t_all[i, r, c] * xt[c]
            zt[r] = acc
        for r in range(m):
            omega[r] = 0.0
        for ch in range(ch_count[i]):
            cidx = ch_first[i] + ch
            st = ch_start[cidx]
            co = ch_off[cidx]
            acc = 0.0
            for k in range(ch_order[cidx]):
                y = zt[st + k]
                sa, sb = _sig2(y, gam[co + k], gamb[co + k])
                acc += psi[co + k] * sa + psib[co + k] * sb
            omega[ch] = -acc
        for r in range(m):
            acc = omega[r]
            for c in range(n):
                acc -= u_all[i, r, c] * xt[c]
            omega[r] = acc
        for r in range(m):
            acc = 0.0
            for c in range(m):
                acc += xinv_all[i, r, c] * omega[c]
            for c in range(q):
                acc += gam_all[i, r, c] * z[eb + c]
            u[r] = acc
        for r in range(n):
            acc = 0.0
            for c in range(n):
                acc += a_all[i, r, c] * z[off + c]
            for c in range(m):
                acc += b_all[i, r, c] * u[c]
            for c in range(q):
                acc += e_all[i, r, c] * z[c]
            dz[off + r] = acc


@njit(cache=True, nogil=True, fastmath=_FM)
def closed_loop_rhs(z, theta, pk):
    dz = np.empty_like(z)
    work = np.empty(pk[0] + 2 * pk[20].shape[1] + 2 * pk[21].shape[1])
    _rhs_into(z, theta, pk, dz, work)
    return dz


@njit(cache=True, nogil=True, fastmath=_FM)
def controls(z, pk):
    """Inputs ``u_i`` of every agent (rows padded to the widest agent)."""
    (q, n_ag, dyn, s_mat, w, mu, alpha, beta, kvec,
     xoff, nn, mm, pp, a_all, b_all, c_all, e_all, f_all,
     pi_all, gam_all, t_all, xinv_all, u_all,
     ch_first, ch_count, ch_start, ch_order, ch_off,
     psi, psib, gam, gamb) = pk
    mmax = xinv_all.shape[1]
    out = np.zeros((n_ag, mmax))
    if dyn == 0:
        return out
    for i in range(n_ag):
        n = nn[i]
        m = mm[i]
        off = xoff[i]
        eta = z[q + i * q: q + (i + 1) * q]
        xt = np.empty(n)
        for r in range(n):
            acc = z[off + r]
            for c in range(q):
                acc -= pi_all[i, r, c] * eta[c]
            xt[r] = acc
        zt = np.ascontiguousarray(t_all[i, :n, :n]) @ xt
        omega = np.zeros(m)
        for ch in range(ch_count[i]):
            cidx = ch_first[i] + ch
            st = ch_start[cidx]
            co = ch_off[cidx]
            acc = 0.0
            for k in range(ch_order[cidx]):
                y = zt[st + k]
                sa, sb = _sig2(y, gam[co + k], gamb[co + k])
                acc += psi[co + k] * sa + psib[co + k] * sb
            omega[ch] = -acc
        rhs_u = omega - np.ascontiguousarray(u_all[i, :m, :n]) @ xt
        out[i, :m] = np.ascontiguousarray(xinv_all[i, :m, :m]) @ rhs_u + np.ascontiguousarray(gam_all[i, :m, :]) @ eta
    return out


@njit(cache=True, nogil=True, fastmath=_FM)
def step_metrics(z, pk):
    """``(max_i ‖η_i − v‖, max_i ‖e_i‖, V)`` at one state."""
    (q, n_ag, dyn, s_mat, w, mu, alpha, beta, kvec,
     xoff, nn, mm, pp, a_all, b_all, c_all, e_all, f_all,
     pi_all, gam_all, t_all, xinv_all, u_all,
     ch_first, ch_count, ch_start, ch_order, ch_off,
     psi, psib, gam, gamb) = pk
    v = z[:q]
    eta_max = 0.0
    vl = 0.0
    for i in range(n_ag):
        base = q + i * q
        acc = 0.0
        for r in range(q):
            d = z[base + r] - v[r]
            acc += d * d
        if acc > eta_max:
            eta_max = acc
        part = 0.0
        for r in range(q):
            s = 0.0
            for j in range(n_ag + 1):
                aij = w[i + 1, j]
                if aij == 0.0:
                    continue
                jb = 0 if j == 0 else q + (j - 1) * q
                s += aij * (z[base + r] - z[jb + r])
            sa, sb = _sig2(abs(s), alpha + 1.0, beta + 1.0)
            part += mu[0] / 2.0 * s * s + mu[1] / (alpha + 1.0) * sa + mu[2] / (beta + 1.0) * sb
        vl += kvec[i] * part
    e_max = 0.0
    if dyn != 0:
        for i in range(n_ag):
            off = xoff[i]
            acc = 0.0
            for r in range(pp[i]):
                e = 0.0
                for c in range(nn[i]):
                    e += c_all[i, r, c] * z[off + c]
                for c in range(q):
                    e += f_all[i, r, c] * v[c]
                acc += e * e
            if acc > e_max:
                e_max = acc
    return np.sqrt(eta_max), np.sqrt(e_max), vl


@njit(cache=True, nogil=True, fastmath=_FM)
def rk4_run(z0, times, thetas, stride, pk):
    """Integrate on ``times``; ``thetas[k]`` holds on step ``k``.

    Returns ``(recorded states, ok flag, failing index, eta metric,
    e metric, V)`` with metrics at every grid node and states every
    ``stride`` nodes (the last node is always recorded).
    """
    n_t = times.shape[0]
    n_rec = (n_t - 1) // stride + 1
    if (n_t - 1) % stride != 0:
        n_rec += 1
    rec = np.empty((n_rec, z0.shape[0]))
    eta_m = np.empty(n_t)
    e_m = np.empty(n_t)
    v_m = np.empty(n_t)
    z = z0.copy()
    rec[0] = z
    a, b, c = step_metrics(z, pk)
    eta_m[0] = a
    e_m[0] = b
    v_m[0] = c
    ri = 1
    dim = z.shape[0]
    work = np.empty(pk[0] + 2 * pk[20].shape[1] + 2 * pk[21].shape[1])
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    tmp = np.empty(dim)
    zbits = z.view(np.int64)
    for k in range(n_t - 1):
        dt = times[k + 1] - times[k]
        th = thetas[k]
        _rhs_into(z, th, pk, k1, work)
        for r in range(dim):
            tmp[r] = z[r] + 0.5 * dt * k1[r]
        _rhs_into(tmp, th, pk, k2, work)
        for r in range(dim):
            tmp[r] = z[r] + 0.5 * dt * k2[r]
        _rhs_into(tmp, th, pk, k3, work)
        for r in range(dim):
            tmp[r] = z[r] + dt * k3[r]
        _rhs_into(tmp, th, pk, k4, work)
        finite = True
        for r in range(dim):
            z[r] += (dt / 6.0) * (k1[r] + 2.0 * k2[r] + 2.0 * k3[r] + k4[r])
            if (zbits[r] & _EXP_MASK) == _EXP_MASK:
                finite = False
        if not finite:
            return rec[:ri], False, k + 1, eta_m, e_m, v_m
        a, b, c = step_metrics(z, pk)
        eta_m[k + 1] = a
        e_m[k + 1] = b
        v_m[k + 1] = c
        if (k + 1) % stride == 0 or k + 1 == n_t - 1:
            rec[ri] = z
            ri += 1
    return rec[:ri], True, n_t - 1, eta_m, e_m, v_m
