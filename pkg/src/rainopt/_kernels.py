"""Fused inner loop for the stochastic extragradient recursion.

The loop draws its Gaussian noise directly from the numpy generator it is
handed; numba serves those draws from the same bit stream, value for value,
as the vectorized numpy calls, so a run is reproducible from the stream key
alone regardless of which path produced it.

Arithmetic stays in plain IEEE order (no fastmath): runs must be replayable
against a straight-line re-implementation to near machine precision.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def seg_loop(M, q, anchor_w, anchor_pts, z, eta, n_iters, noise_scale, gen,
             sel_t, half_out, store_all, halves_out):
    """Run n_iters extragradient iterations in place on z.

    Each iteration evaluates the operator at the current point (half step)
    and at the half point (full step), adding one fresh noise vector per
    evaluation when noise_scale > 0.  The half point with index sel_t is
    written to half_out; all half points go to halves_out when store_all.
    """
    d = z.shape[0]
    zh = np.empty(d)
    g = np.empty(d)
    for t in range(n_iters):
        for i in range(d):
            acc = q[i]
            for j in range(d):
                acc += M[i, j] * z[j]
            g[i] = acc
        for k in range(anchor_w.shape[0]):
            w = anchor_w[k]
            for i in range(d):
                g[i] += w * (z[i] - anchor_pts[k, i])
        if noise_scale > 0.0:
            for i in range(d):
                g[i] += noise_scale * gen.standard_normal()
        for i in range(d):
            zh[i] = z[i] - eta * g[i]

        for i in range(d):
            acc = q[i]
            for j in range(d):
                acc += M[i, j] * zh[j]
            g[i] = acc
        for k in range(anchor_w.shape[0]):
            w = anchor_w[k]
            for i in range(d):
                g[i] += w * (zh[i] - anchor_pts[k, i])
        if noise_scale > 0.0:
            for i in range(d):
                g[i] += noise_scale * gen.standard_normal()
        for i in range(d):
            z[i] = z[i] - eta * g[i]

        if t == sel_t:
            for i in range(d):
                half_out[i] = zh[i]
        if store_all:
            for i in range(d):
                halves_out[t, i] = zh[i]
