"""
Lattice update kernels.

Both backends perform one pull-stream + BGK collision sweep on flattened
(Q, N) populations, reading `f_in` and writing `f_out` (double buffered),
and leave the post-collision density and velocity in `rho_out` / `V_out`.
The numba kernel fuses the passes and runs cells in parallel; every cell is
computed independently, so results do not depend on the thread count.

cell kind codes: 0 fluid, 1 solid, 2 boundary
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)

try:
    import numba
    from numba import prange
    NUMBA_AVAILABLE = True
except ImportError:
    numba = None
    prange = range
    NUMBA_AVAILABLE = False

KIND_FLUID = 0
KIND_SOLID = 1
KIND_BOUNDARY = 2


def stream_collide_numpy(f_in, f_out, rho_out, V_out, table, kind, bc_index, f_bc,
                         e, w, tau, kappa_d, kappa_s, s_index, use_force):
    """Reference implementation; returns the number of clamped populations."""
    f_out[...] = f_in.reshape(-1)[table]

    fluid = kind == KIND_FLUID
    boundary = kind == KIND_BOUNDARY
    f_out[:, kind == KIND_SOLID] = 0.0
    f_out[:, boundary] = f_bc[:, bc_index[boundary]]

    f = f_out[:, fluid]
    rho = f.sum(axis=0)
    V = (e.T @ f) / rho
    if use_force:
        si = s_index[fluid]
        V_eq = V.copy()
        V_eq[0] = V[0] + tau * 2.0 * kappa_s[si] * V[0] * V[1]
        V_eq[1] = V[1] + tau * kappa_d[si] * V[0] * V[0]
    else:
        V_eq = V
    eu = e @ V_eq
    usq = np.sum(V_eq * V_eq, axis=0)
    feq = w[:, None] * rho * (1.0 + 3.0 * eu - 1.5 * usq + 4.5 * eu * eu)
    f = f + (feq - f) / tau
    negative = f < 0.0
    clamped = int(np.count_nonzero(negative))
    if clamped:
        f[negative] = 0.0
    f_out[:, fluid] = f

    rho_all = f_out.sum(axis=0)
    safe = np.where(rho_all > 0.0, rho_all, 1.0)
    rho_out[...] = rho_all
    V_out[...] = np.where(rho_all > 0.0, (e.T @ f_out) / safe, 0.0)
    return clamped


def _stream_collide_kernel(f_in, f_out, rho_out, V_out, table, kind, bc_index, f_bc,
                           e, w, tau, kappa_d, kappa_s, s_index, use_force, clamped):
    Q, N = f_in.shape
    D = e.shape[1]
    flat = f_in.reshape(-1)
    for n in prange(N):
        k = kind[n]
        if k == 1:
            for q in range(Q):
                f_out[q, n] = 0.0
            rho_out[n] = 0.0
            for a in range(D):
                V_out[a, n] = 0.0
            continue

        fl = np.empty(Q)
        if k == 2:
            b = bc_index[n]
            for q in range(Q):
                fl[q] = f_bc[q, b]
        else:
            rho = 0.0
            V = np.zeros(D)
            for q in range(Q):
                val = flat[table[q, n]]
                fl[q] = val
                rho += val
                for a in range(D):
                    V[a] += val * e[q, a]
            for a in range(D):
                V[a] /= rho
            if use_force:
                si = s_index[n]
                vs = V[0]
                vd = V[1]
                V[0] = vs + tau * 2.0 * kappa_s[si] * vs * vd
                V[1] = vd + tau * kappa_d[si] * vs * vs
            usq = 0.0
            for a in range(D):
                usq += V[a] * V[a]
            count = 0
            for q in range(Q):
                eu = 0.0
                for a in range(D):
                    eu += e[q, a] * V[a]
                feq = w[q] * rho * (1.0 + 3.0 * eu - 1.5 * usq + 4.5 * eu * eu)
                val = fl[q] + (feq - fl[q]) / tau
                if val < 0.0:
                    val = 0.0
                    count += 1
                fl[q] = val
            clamped[n] = count

        rho2 = 0.0
        for a in range(D):
            V_out[a, n] = 0.0
        for q in range(Q):
            f_out[q, n] = fl[q]
            rho2 += fl[q]
            for a in range(D):
                V_out[a, n] += fl[q] * e[q, a]
        rho_out[n] = rho2
        if rho2 > 0.0:
            for a in range(D):
                V_out[a, n] /= rho2


if NUMBA_AVAILABLE:
    _stream_collide_jit = numba.njit(_stream_collide_kernel, parallel=True, nogil=True, cache=False)
else:
    _stream_collide_jit = None


def stream_collide_numba(f_in, f_out, rho_out, V_out, table, kind, bc_index, f_bc,
                         e, w, tau, kappa_d, kappa_s, s_index, use_force):
    clamped = np.zeros(f_in.shape[1], dtype=np.int64)
    _stream_collide_jit(f_in, f_out, rho_out, V_out, table, kind, bc_index, f_bc,
                        e, w, float(tau), kappa_d, kappa_s, s_index, bool(use_force), clamped)
    return int(clamped.sum())


def resolve_backend(name: str) -> str:
    """Pick the requested backend, falling back to numpy when numba is missing."""
    name = (name or 'auto').lower()
    if name == 'auto':
        return 'numba' if NUMBA_AVAILABLE else 'numpy'
    if name == 'numba' and not NUMBA_AVAILABLE:
        logger.warning("numba not installed, using numpy lattice backend")
        return 'numpy'
    if name not in ('numpy', 'numba'):
        raise ValueError(f"Unknown lattice backend: {name}")
    return name


BACKENDS = {
    'numpy': stream_collide_numpy,
    'numba': stream_collide_numba,
}
