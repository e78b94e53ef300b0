"""Two-spin linear algebra: product operators, Hamiltonians and propagators.

Basis ordering is ``|I> (x) |S>`` with ``Iz|0> = +1/2 |0>``, i.e. the state
vector indices are ``|00>, |01>, |10>, |11>`` (index ``2*i + s``).

All frequencies at the API boundary are in Hz; Hamiltonians are returned in
rad/s. Propagation over a piecewise-constant slice uses the closed-form SU(2)
exponential of each S-manifold block, so no general matrix exponential is
needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

# Ix, Iy, Iz for a single spin-1/2
_SPIN_HALF = {"x": SIGMA_X / 2, "y": SIGMA_Y / 2, "z": SIGMA_Z / 2}


@dataclass(frozen=True)
class SpinSystem:
    """Weakly coupled heteronuclear pair I-S.

    Parameters
    ----------
    delta_hz : float
        Resonance offset of the I transition with the control spin S in
        state 0.
    j_hz : float
        Scalar coupling. The S=1 line sits at ``delta_hz + j_hz``.
    delta_s_hz : float
        Offset of S in its own rotating frame.
    """

    delta_hz: float
    j_hz: float
    delta_s_hz: float = 0.0

    def __post_init__(self):
        for name in ("delta_hz", "j_hz", "delta_s_hz"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.j_hz < 0:
            raise ValueError("j_hz must be non-negative")

    def offset_hz(self, s_manifold: int) -> float:
        """I-spin resonance offset seen when S is in basis state ``s_manifold``."""
        if s_manifold not in (0, 1):
            raise ValueError("s_manifold must be 0 or 1")
        return self.delta_hz + s_manifold * self.j_hz

    @property
    def offsets_hz(self) -> tuple[float, float]:
        return (self.delta_hz, self.delta_hz + self.j_hz)


@dataclass(frozen=True)
class RFControl:
    """RF amplitude (as a nutation frequency in Hz) and phase in radians."""

    nu1_hz: float = 0.0
    phase_rad: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.nu1_hz) and math.isfinite(self.phase_rad)):
            raise ValueError("RF parameters must be finite")
        if self.nu1_hz < 0:
            raise ValueError("nu1_hz must be non-negative")


def product_operator(name: str) -> np.ndarray:
    """Return a 4x4 product operator.

    ``name`` is one of ``Ix Iy Iz Sx Sy Sz 2IzSz E`` (``E`` is the identity).
    """
    if name == "E":
        return np.eye(4, dtype=complex)
    if name == "2IzSz":
        return 2 * np.kron(_SPIN_HALF["z"], _SPIN_HALF["z"])
    if len(name) == 2 and name[0] in "IS" and name[1] in "xyz":
        op = _SPIN_HALF[name[1]]
        return np.kron(op, ID2) if name[0] == "I" else np.kron(ID2, op)
    raise ValueError(f"unknown product operator {name!r}")


def basis_state(i: int, s: int) -> np.ndarray:
    """Computational basis state ``|i>_I (x) |s>_S``."""
    psi = np.zeros(4, dtype=complex)
    psi[2 * i + s] = 1.0
    return psi


def build_hamiltonian(system: SpinSystem, rf: RFControl) -> np.ndarray:
    """Rotating-frame Hamiltonian in rad/s with RF applied to spin I.

    The I block for S=0 has z-offset ``2*pi*delta`` and for S=1
    ``2*pi*(delta + J)``.
    """
    Ix, Iy, Iz = (product_operator(n) for n in ("Ix", "Iy", "Iz"))
    Sz = product_operator("Sz")
    IzSz = product_operator("2IzSz") / 2
    h = (
        (system.delta_hz + system.j_hz / 2) * Iz
        + system.delta_s_hz * Sz
        - system.j_hz * IzSz
        + rf.nu1_hz * (math.cos(rf.phase_rad) * Ix + math.sin(rf.phase_rad) * Iy)
    )
    return TWO_PI * h


def su2_propagator(field, dt) -> np.ndarray:
    """Closed-form ``exp(-i (f . sigma) dt / 2)``.

    Parameters
    ----------
    field : array_like, shape (..., 3)
        Rotation vector in rad/s. Broadcasts over leading dimensions.
    dt : float or array_like
        Duration in seconds, broadcast against ``field[..., 0]``.

    Returns
    -------
    ndarray, shape (..., 2, 2)
    """
    f = np.asarray(field, dtype=float)
    dt = np.asarray(dt, dtype=float)
    norm = np.sqrt(np.einsum("...i,...i->...", f, f))
    half = 0.5 * norm * dt
    c = np.cos(half)
    # sin(half)/norm, with the |f| = 0 limit handled explicitly
    safe = np.where(norm > 0, norm, 1.0)
    s_over = np.where(norm > 0, np.sin(half) / safe, 0.5 * dt)
    nx = f[..., 0] * s_over
    ny = f[..., 1] * s_over
    nz = f[..., 2] * s_over
    u = np.empty(np.broadcast(c, nx).shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * nz
    u[..., 0, 1] = -1j * nx - ny
    u[..., 1, 0] = -1j * nx + ny
    u[..., 1, 1] = c + 1j * nz
    return u


def manifold_fields(system: SpinSystem, nu1_hz, phase_rad) -> np.ndarray:
    """Effective-field vectors (rad/s) seen by spin I in each S manifold.

    Returns an array of shape ``broadcast(nu1, phase).shape + (2, 3)``.
    """
    nu1 = np.asarray(nu1_hz, dtype=float)
    phase = np.asarray(phase_rad, dtype=float)
    shape = np.broadcast(nu1, phase).shape
    out = np.empty(shape + (2, 3))
    out[..., 0] = (TWO_PI * nu1 * np.cos(phase))[..., None]
    out[..., 1] = (TWO_PI * nu1 * np.sin(phase))[..., None]
    out[..., 0, 2] = TWO_PI * system.offset_hz(0)
    out[..., 1, 2] = TWO_PI * system.offset_hz(1)
    return out


def slice_propagator(system: SpinSystem, rf: RFControl, dt: float) -> np.ndarray:
    """Exact 4x4 propagator for one constant-control slice.

    Assembled from the two S-manifold SU(2) blocks; off-block entries are
    exactly zero.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    blocks = su2_propagator(manifold_fields(system, rf.nu1_hz, rf.phase_rad), dt)
    u = np.zeros((4, 4), dtype=complex)
    for s in (0, 1):
        # Sz contributes a pure phase within each manifold
        sz = 0.5 if s == 0 else -0.5
        phase = np.exp(-1j * TWO_PI * system.delta_s_hz * sz * dt)
        idx = [s, 2 + s]
        u[np.ix_(idx, idx)] = phase * blocks[s]
    return u


def rotation(angle_rad: float, axis_phase_rad: float) -> np.ndarray:
    """Single-spin rotation ``exp(-i angle (cos a Tx + sin a Ty))``."""
    return su2_propagator(
        [2 * angle_rad * math.cos(axis_phase_rad),
         2 * angle_rad * math.sin(axis_phase_rad), 0.0],
        0.5,
    )


def hard_pulse(target: str, angle_deg: float, axis_phase_deg: float) -> np.ndarray:
    """Ideal instantaneous rotation of spin ``target`` ('I' or 'S')."""
    if not (math.isfinite(angle_deg) and math.isfinite(axis_phase_deg)):
        raise ValueError("pulse angles must be finite")
    r = rotation(math.radians(angle_deg), math.radians(axis_phase_deg))
    if target == "I":
        return np.kron(r, ID2)
    if target == "S":
        return np.kron(ID2, r)
    raise ValueError(f"pulse target must be 'I' or 'S', got {target!r}")


def transverse_signal(state, s_manifold: int) -> complex:
    """Normalised I-spin coherence ``2<psi| P_k I+ P_k |psi>`` for doublet line k.

    Accepts a single state of shape (4,) or a batch of shape (..., 4).
    """
    psi = np.asarray(state)
    if s_manifold not in (0, 1):
        raise ValueError("s_manifold must be 0 or 1")
    # I+ = |0><1| on spin I; restricted to S = k
    up = psi[..., s_manifold]
    down = psi[..., 2 + s_manifold]
    sig = 2 * np.conj(up) * down
    return complex(sig) if psi.ndim == 1 else sig
