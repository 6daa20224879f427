"""
Discrete velocity sets, BGK equilibrium and macroscopic moments.

Distribution arrays are laid out as (Q, *spatial) and velocities as
(D, *spatial). D2Q9 keeps the rest/orthogonal/diagonal ordering used in the
cell-interaction diagrams (e1 = +s, e2 = +s+d, ..., opposite of e_i is e_{i+4}).
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class VelocitySet:
    name: str
    e: np.ndarray          # (Q, D) integer lattice directions
    w: np.ndarray          # (Q,) weights
    opposite: np.ndarray   # (Q,) index of -e_i
    mirror_d: np.ndarray   # (Q,) index of e_i with the d component negated

    @property
    def Q(self) -> int:
        return self.e.shape[0]

    @property
    def D(self) -> int:
        return self.e.shape[1]


def _index_of(e: np.ndarray, vec: np.ndarray) -> int:
    return int(np.flatnonzero(np.all(e == vec, axis=1))[0])


def _make_set(name: str, e: np.ndarray, w: np.ndarray) -> VelocitySet:
    opposite = np.array([_index_of(e, -v) for v in e])
    flip = np.ones(e.shape[1], dtype=int)
    flip[1] = -1
    mirror = np.array([_index_of(e, v * flip) for v in e])
    return VelocitySet(name=name, e=e, w=w, opposite=opposite, mirror_d=mirror)


D2Q9 = _make_set(
    "D2Q9",
    np.array([
        [0, 0],
        [1, 0], [1, 1], [0, 1], [-1, 1],
        [-1, 0], [-1, -1], [0, -1], [1, -1],
    ]),
    np.array([4 / 9] + [1 / 9, 1 / 36] * 4),
)

D3Q19 = _make_set(
    "D3Q19",
    np.array([
        [0, 0, 0],
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
        [1, 1, 0], [-1, -1, 0], [1, -1, 0], [-1, 1, 0],
        [1, 0, 1], [-1, 0, -1], [1, 0, -1], [-1, 0, 1],
        [0, 1, 1], [0, -1, -1], [0, 1, -1], [0, -1, 1],
    ]),
    np.array([1 / 3] + [1 / 18] * 6 + [1 / 36] * 12),
)


def velocity_set_for(ndim: int) -> VelocitySet:
    if ndim == 2:
        return D2Q9
    if ndim == 3:
        return D3Q19
    raise ValueError(f"No velocity set for {ndim}-dimensional lattice")


def equilibrium(rho: np.ndarray, V: np.ndarray, vs: VelocitySet) -> np.ndarray:
    """
    BGK equilibrium f_eq = w rho (1 + 3 e.V - 1.5 |V|^2 + 4.5 (e.V)^2).

    Args:
        rho: density, shape (*spatial) or scalar
        V: velocity, shape (D, *spatial) or (D,)

    Returns:
        (Q, *spatial) equilibrium populations
    """
    V = np.asarray(V, dtype=float)
    rho = np.asarray(rho, dtype=float)
    eu = np.tensordot(vs.e.astype(float), V, axes=(1, 0))
    usq = np.sum(V * V, axis=0)
    w = vs.w.reshape((-1,) + (1,) * (V.ndim - 1))
    return w * rho * (1.0 + 3.0 * eu - 1.5 * usq + 4.5 * eu * eu)


def macroscopics(f: np.ndarray, vs: VelocitySet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Density and velocity moments of the populations.

    V is the momentum divided by rho (zero where rho is zero), which equals
    the raw first moment at the reference density rho = 1.
    """
    f = np.asarray(f, dtype=float)
    rho = np.sum(f, axis=0)
    mom = np.tensordot(vs.e.T.astype(float), f, axes=(1, 0))
    safe = np.where(rho > 0.0, rho, 1.0)
    V = np.where(rho > 0.0, mom / safe, 0.0)
    return rho, V
