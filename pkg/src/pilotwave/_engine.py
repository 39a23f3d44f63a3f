"""Fused field + particle stepping loop.

Performs exactly the same arithmetic as composing the public operations in
:mod:`pilotwave.field` and :mod:`pilotwave.particle`, without per-step Python
overhead.  One coupled step of length ``dt``:

1. half drift of the particle to ``q_half``;
2. gradient ``g0`` sampled from the old field at ``q_half``;
3. midpoint Lorentz factor predicted from ``g0``;
4. source deposited at ``q_half``, field advanced a full step;
5. gradient ``g1`` sampled from the new field at ``q_half``;
6. momentum kick with ``(g0 + g1) / 2``;
7. second half drift with the new velocity.
"""

import math

import numba
import numpy as np

from .field import KERNEL_HALF, _kernel_weights, _sample_gradient, _verlet_into

STATUS_OK = 0
STATUS_ESCAPED = 1
STATUS_BLOWUP = 2


@numba.njit(cache=True)
def _gamma(px, py):
    return math.sqrt(1.0 + (px * px + py * py))


@numba.njit(cache=True)
def coupled_steps(phi, phi_dot, v2, damp, use_damp, q, p, b, dt, dx, ox, oy,
                  bounds, n_steps, work_phi, work_dot):
    """Advance field and particle ``n_steps`` times in place.

    ``bounds`` = (xmin, xmax, ymin, ymax) the half-step position must stay in.
    ``work_phi``/``work_dot`` are scratch arrays shaped like ``phi``.
    Returns ``(status, steps_done)``.
    """
    inv_dx2 = 1.0 / (dx * dx)
    inv_2dx = 0.5 / dx
    area = dx * dx
    patch = np.empty((2 * KERNEL_HALF + 1, 2 * KERNEL_HALF + 1))
    cur_phi, cur_dot = phi, phi_dot
    nxt_phi, nxt_dot = work_phi, work_dot
    swapped = False
    status = STATUS_OK
    done = n_steps
    for k in range(n_steps):
        px = p[0]
        py = p[1]
        g = _gamma(px, py)
        qhx = q[0] + 0.5 * dt * (px / g)
        qhy = q[1] + 0.5 * dt * (py / g)
        if not (bounds[0] <= qhx <= bounds[1] and bounds[2] <= qhy <= bounds[3]):
            status = STATUS_ESCAPED
            done = k
            break
        i0, wx = _kernel_weights(qhx, ox, dx, 0)
        j0, wy = _kernel_weights(qhy, oy, dx, 0)
        g0x, g0y = _sample_gradient(cur_phi, i0, wx, j0, wy, inv_2dx)
        if b == 0.0:
            gm = g
        else:
            c = 0.5 * dt * b / g
            gm = _gamma(px + c * g0x, py + c * g0y)
        amp = b / gm / area
        for a in range(wx.shape[0]):
            for bb in range(wy.shape[0]):
                patch[a, bb] = (wx[a] * wy[bb]) * amp
        bad = _verlet_into(cur_phi, cur_dot, v2, patch, i0, j0, dt, inv_dx2, False,
                           damp, use_damp, nxt_phi, nxt_dot)
        cur_phi, nxt_phi = nxt_phi, cur_phi
        cur_dot, nxt_dot = nxt_dot, cur_dot
        swapped = not swapped
        if bad >= 0:
            status = STATUS_BLOWUP
            done = k + 1
            break
        if b != 0.0:
            g1x, g1y = _sample_gradient(cur_phi, i0, wx, j0, wy, inv_2dx)
            c = dt * b / gm
            px = px + c * (0.5 * (g0x + g1x))
            py = py + c * (0.5 * (g0y + g1y))
        g2 = _gamma(px, py)
        q[0] = qhx + 0.5 * dt * (px / g2)
        q[1] = qhy + 0.5 * dt * (py / g2)
        p[0] = px
        p[1] = py
        if not (math.isfinite(px) and math.isfinite(py)):
            status = STATUS_BLOWUP
            done = k + 1
            break
    if swapped:
        phi[:, :] = cur_phi
        phi_dot[:, :] = cur_dot
    return status, done
