"""Compiled inner loops for the solvers.

Everything here is deliberately sequential with a fixed summation order so a
given problem, options, and seed reproduce bit-identical iterates on every
run.  Positions are (n, p) float64 arrays; graph structure arrives as flat
int64/float64 arrays prepared by ``Problem._compiled``.
"""

import numpy as np
from numba import njit

# stop-rule codes
STOP_FIXED = 0
STOP_GRADIENT = 1
STOP_RELATIVE = 2

# termination codes
TERM_MAX = 0
TERM_GRADIENT = 1
TERM_RELATIVE = 2

#: Guard against division by zero in relative-improvement tests.
TINY_NORM = 1e-30


@njit(cache=True, nogil=True)
def eval_cost_grad(x, edge_src, edge_dst, edge_d, link_sensor, link_center, link_r, grad):
    """Relaxed cost at ``x``; ``grad`` is overwritten with its gradient."""
    n, p = x.shape
    for i in range(n):
        for c in range(p):
            grad[i, c] = 0.0
    total = 0.0
    for e in range(edge_src.shape[0]):
        i = edge_src[e]
        j = edge_dst[e]
        s = 0.0
        for c in range(p):
            t = x[i, c] - x[j, c]
            s += t * t
        nrm = np.sqrt(s)
        if nrm > edge_d[e]:
            excess = nrm - edge_d[e]
            coef = excess / nrm
            total += 0.5 * excess * excess
            for c in range(p):
                r = coef * (x[i, c] - x[j, c])
                grad[i, c] += r
                grad[j, c] -= r
    for a in range(link_sensor.shape[0]):
        i = link_sensor[a]
        s = 0.0
        for c in range(p):
            t = x[i, c] - link_center[a, c]
            s += t * t
        nrm = np.sqrt(s)
        if nrm > link_r[a]:
            excess = nrm - link_r[a]
            coef = excess / nrm
            total += 0.5 * excess * excess
            for c in range(p):
                grad[i, c] += coef * (x[i, c] - link_center[a, c])
    return total


@njit(cache=True, nogil=True)
def _frob(a):
    n, p = a.shape
    s = 0.0
    for i in range(n):
        for c in range(p):
            s += a[i, c] * a[i, c]
    return np.sqrt(s)


@njit(cache=True, nogil=True)
def parallel_loop(x, x_prev, edge_src, edge_dst, edge_d, link_sensor, link_center,
                  link_r, lip, max_iter, stop_code, eps_g, eps_r,
                  record, fhat_tr, gnorm_tr, keep, iter_tr):
    """Accelerated full-gradient iteration; ``x`` and ``x_prev`` update in place.

    Returns ``(iterations_done, termination_code, fhat_final, gnorm_final)``.
    Trace arrays hold row ``k`` for iterate ``k``; row 0 is the start point.
    """
    n, p = x.shape
    grad = np.zeros((n, p))
    w = np.zeros((n, p))
    track = record or stop_code == STOP_GRADIENT
    fhat = 0.0
    gnorm = 0.0
    if track:
        fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                              link_sensor, link_center, link_r, grad)
        gnorm = _frob(grad)
    if record:
        fhat_tr[0] = fhat
        gnorm_tr[0] = gnorm
        if keep:
            for i in range(n):
                for c in range(p):
                    iter_tr[0, i, c] = x[i, c]
    if stop_code == STOP_GRADIENT and gnorm <= eps_g:
        return 0, TERM_GRADIENT, fhat, gnorm
    done = 0
    term = TERM_MAX
    for k in range(1, max_iter + 1):
        done = k
        beta = (k - 2.0) / (k + 1.0)
        for i in range(n):
            for c in range(p):
                w[i, c] = x[i, c] + beta * (x[i, c] - x_prev[i, c])
        eval_cost_grad(w, edge_src, edge_dst, edge_d,
                       link_sensor, link_center, link_r, grad)
        for i in range(n):
            for c in range(p):
                x_prev[i, c] = x[i, c]
                x[i, c] = w[i, c] - grad[i, c] / lip
        if track:
            fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                                  link_sensor, link_center, link_r, grad)
            gnorm = _frob(grad)
        if record:
            fhat_tr[k] = fhat
            gnorm_tr[k] = gnorm
            if keep:
                for i in range(n):
                    for c in range(p):
                        iter_tr[k, i, c] = x[i, c]
        if stop_code == STOP_GRADIENT and gnorm <= eps_g:
            term = TERM_GRADIENT
            break
        if stop_code == STOP_RELATIVE:
            num = 0.0
            den = 0.0
            for i in range(n):
                for c in range(p):
                    d = x[i, c] - x_prev[i, c]
                    num += d * d
                    den += x_prev[i, c] * x_prev[i, c]
            if np.sqrt(num) <= eps_r * max(np.sqrt(den), TINY_NORM):
                term = TERM_RELATIVE
                break
    if not track:
        fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                              link_sensor, link_center, link_r, grad)
        gnorm = _frob(grad)
    return done, term, fhat, gnorm


@njit(cache=True, nogil=True)
def ss_value_grad(z, nbr_pos, nbr_d, anc_pos, anc_r, edge_w, prox_mu, prox_center, g):
    """Single-sensor objective value at ``z``; ``g`` is overwritten in place.

    Edge terms weigh the squared ball distance by ``edge_w``; anchor terms by
    one half.  A positive ``prox_mu`` adds a proximal pull toward
    ``prox_center``.
    """
    p = z.shape[0]
    for c in range(p):
        g[c] = 0.0
    val = 0.0
    for j in range(nbr_pos.shape[0]):
        s = 0.0
        for c in range(p):
            t = z[c] - nbr_pos[j, c]
            s += t * t
        nrm = np.sqrt(s)
        if nrm > nbr_d[j]:
            excess = nrm - nbr_d[j]
            coef = 2.0 * edge_w * excess / nrm
            val += edge_w * excess * excess
            for c in range(p):
                g[c] += coef * (z[c] - nbr_pos[j, c])
    for a in range(anc_pos.shape[0]):
        s = 0.0
        for c in range(p):
            t = z[c] - anc_pos[a, c]
            s += t * t
        nrm = np.sqrt(s)
        if nrm > anc_r[a]:
            excess = nrm - anc_r[a]
            coef = excess / nrm
            val += 0.5 * excess * excess
            for c in range(p):
                g[c] += coef * (z[c] - anc_pos[a, c])
    if prox_mu > 0.0:
        s = 0.0
        for c in range(p):
            t = z[c] - prox_center[c]
            g[c] += prox_mu * t
            s += t * t
        val += 0.5 * prox_mu * s
    return val


@njit(cache=True, nogil=True)
def single_source_loop(z0, nbr_pos, nbr_d, anc_pos, anc_r, edge_w, lip,
                       max_inner, eps_inner, prox_mu, prox_center, z_out):
    """Accelerated descent on the single-sensor objective from ``z0``.

    Writes the result to ``z_out`` and returns the iteration count.  The
    result never exceeds the objective at ``z0``: the loop tracks the best
    value seen and falls back to it when the gradient test is not met.
    """
    p = z0.shape[0]
    g = np.zeros(p)
    step = 1.0 / (lip + prox_mu)
    v0 = ss_value_grad(z0, nbr_pos, nbr_d, anc_pos, anc_r,
                       edge_w, prox_mu, prox_center, g)
    g0 = 0.0
    for c in range(p):
        g0 += g[c] * g[c]
    for c in range(p):
        z_out[c] = z0[c]
    if np.sqrt(g0) <= eps_inner:
        return 0
    z = z0.copy()
    zp = z0.copy()
    w = np.zeros(p)
    vbest = v0
    for l in range(1, max_inner + 1):
        beta = (l - 2.0) / (l + 1.0)
        for c in range(p):
            w[c] = z[c] + beta * (z[c] - zp[c])
        ss_value_grad(w, nbr_pos, nbr_d, anc_pos, anc_r,
                      edge_w, prox_mu, prox_center, g)
        for c in range(p):
            zp[c] = z[c]
            z[c] = w[c] - step * g[c]
        vz = ss_value_grad(z, nbr_pos, nbr_d, anc_pos, anc_r,
                           edge_w, prox_mu, prox_center, g)
        gz = 0.0
        for c in range(p):
            gz += g[c] * g[c]
        if vz < vbest:
            vbest = vz
            for c in range(p):
                z_out[c] = z[c]
        if np.sqrt(gz) <= eps_inner:
            if vz <= v0:
                for c in range(p):
                    z_out[c] = z[c]
            return l
    return max_inner


@njit(cache=True, nogil=True)
def async_exact_loop(x, activations, nbr_ptr, nbr_idx, nbr_d, anc_ptr, anc_pos, anc_r,
                     edge_src, edge_dst, edge_d, link_sensor, link_center, link_r,
                     lip, stop_code, eps_g, eps_r,
                     inner_max, inner_eps, warm_start, rand_init, prox_mu,
                     record, fhat_tr, gnorm_tr, keep, iter_tr):
    """Asynchronous iteration: each tick re-solves one sensor's block exactly.

    The activated sensor minimizes the relaxed cost in its own position with
    all others frozen, so every incident edge keeps its full half weight.
    ``rand_init`` supplies per-tick inner start points when ``warm_start`` is
    false.  Returns ``(ticks_done, termination_code, fhat_final, gnorm_final)``.
    """
    n, p = x.shape
    max_iter = activations.shape[0]
    grad = np.zeros((n, p))
    z0 = np.zeros(p)
    znew = np.zeros(p)
    prox_center = np.zeros(p)
    track = record or stop_code == STOP_GRADIENT
    fhat = 0.0
    gnorm = 0.0
    if track:
        fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                              link_sensor, link_center, link_r, grad)
        gnorm = _frob(grad)
    if record:
        fhat_tr[0] = fhat
        gnorm_tr[0] = gnorm
        if keep:
            for i in range(n):
                for c in range(p):
                    iter_tr[0, i, c] = x[i, c]
    if stop_code == STOP_GRADIENT and gnorm <= eps_g:
        return 0, TERM_GRADIENT, fhat, gnorm
    done = 0
    term = TERM_MAX
    for k in range(1, max_iter + 1):
        done = k
        i = activations[k - 1]
        lo = nbr_ptr[i]
        hi = nbr_ptr[i + 1]
        m = hi - lo
        npos = np.zeros((m, p))
        nd = np.zeros(m)
        for t in range(m):
            j = nbr_idx[lo + t]
            nd[t] = nbr_d[lo + t]
            for c in range(p):
                npos[t, c] = x[j, c]
        a0 = anc_ptr[i]
        a1 = anc_ptr[i + 1]
        apos = anc_pos[a0:a1]
        ar = anc_r[a0:a1]
        for c in range(p):
            prox_center[c] = x[i, c]
            if warm_start:
                z0[c] = x[i, c]
            else:
                z0[c] = rand_init[k - 1, c]
        single_source_loop(z0, npos, nd, apos, ar, 0.5, lip,
                           inner_max, inner_eps, prox_mu, prox_center, znew)
        delta = 0.0
        for c in range(p):
            t = znew[c] - x[i, c]
            delta += t * t
        prev_norm = 0.0
        if stop_code == STOP_RELATIVE:
            prev_norm = _frob(x)
        for c in range(p):
            x[i, c] = znew[c]
        if track:
            fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                                  link_sensor, link_center, link_r, grad)
            gnorm = _frob(grad)
        if record:
            fhat_tr[k] = fhat
            gnorm_tr[k] = gnorm
            if keep:
                for i2 in range(n):
                    for c in range(p):
                        iter_tr[k, i2, c] = x[i2, c]
        if stop_code == STOP_GRADIENT and gnorm <= eps_g:
            term = TERM_GRADIENT
            break
        if stop_code == STOP_RELATIVE:
            if np.sqrt(delta) <= eps_r * max(prev_norm, TINY_NORM):
                term = TERM_RELATIVE
                break
    if not track:
        fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                              link_sensor, link_center, link_r, grad)
        gnorm = _frob(grad)
    return done, term, fhat, gnorm


@njit(cache=True, nogil=True)
def async_inexact_loop(x, activations, nbr_ptr, nbr_idx, nbr_d, anc_ptr, anc_pos, anc_r,
                       edge_src, edge_dst, edge_d, link_sensor, link_center, link_r,
                       lip, stop_code, eps_g, eps_r,
                       record, fhat_tr, gnorm_tr, keep, iter_tr):
    """Asynchronous iteration: each tick is one gradient step on one sensor.

    The activated sensor moves by ``-1/lip`` times its own gradient block,
    computed from current neighbor positions.  Returns the same tuple as
    :func:`async_exact_loop`.
    """
    n, p = x.shape
    max_iter = activations.shape[0]
    grad = np.zeros((n, p))
    gi = np.zeros(p)
    track = record or stop_code == STOP_GRADIENT
    fhat = 0.0
    gnorm = 0.0
    if track:
        fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                              link_sensor, link_center, link_r, grad)
        gnorm = _frob(grad)
    if record:
        fhat_tr[0] = fhat
        gnorm_tr[0] = gnorm
        if keep:
            for i in range(n):
                for c in range(p):
                    iter_tr[0, i, c] = x[i, c]
    if stop_code == STOP_GRADIENT and gnorm <= eps_g:
        return 0, TERM_GRADIENT, fhat, gnorm
    done = 0
    term = TERM_MAX
    for k in range(1, max_iter + 1):
        done = k
        i = activations[k - 1]
        for c in range(p):
            gi[c] = 0.0
        for t in range(nbr_ptr[i], nbr_ptr[i + 1]):
            j = nbr_idx[t]
            s = 0.0
            for c in range(p):
                d = x[i, c] - x[j, c]
                s += d * d
            nrm = np.sqrt(s)
            if nrm > nbr_d[t]:
                coef = (nrm - nbr_d[t]) / nrm
                for c in range(p):
                    gi[c] += coef * (x[i, c] - x[j, c])
        for a in range(anc_ptr[i], anc_ptr[i + 1]):
            s = 0.0
            for c in range(p):
                d = x[i, c] - anc_pos[a, c]
                s += d * d
            nrm = np.sqrt(s)
            if nrm > anc_r[a]:
                coef = (nrm - anc_r[a]) / nrm
                for c in range(p):
                    gi[c] += coef * (x[i, c] - anc_pos[a, c])
        delta = 0.0
        prev_norm = 0.0
        if stop_code == STOP_RELATIVE:
            prev_norm = _frob(x)
        for c in range(p):
            step = gi[c] / lip
            delta += step * step
            x[i, c] -= step
        if track:
            fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                                  link_sensor, link_center, link_r, grad)
            gnorm = _frob(grad)
        if record:
            fhat_tr[k] = fhat
            gnorm_tr[k] = gnorm
            if keep:
                for i2 in range(n):
                    for c in range(p):
                        iter_tr[k, i2, c] = x[i2, c]
        if stop_code == STOP_GRADIENT and gnorm <= eps_g:
            term = TERM_GRADIENT
            break
        if stop_code == STOP_RELATIVE:
            if np.sqrt(delta) <= eps_r * max(prev_norm, TINY_NORM):
                term = TERM_RELATIVE
                break
    if not track:
        fhat = eval_cost_grad(x, edge_src, edge_dst, edge_d,
                              link_sensor, link_center, link_r, grad)
        gnorm = _frob(grad)
    return done, term, fhat, gnorm
