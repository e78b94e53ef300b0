"""Closed-form geometric-phase results and the controlled-pi optimiser.

Angles are radians internally; functions whose names end in ``_deg`` or
which say so in their docstring return degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .kernel import TWO_PI


class UndefinedDirectionError(ValueError):
    """Effective field is zero, so its direction (and cone angle) is undefined."""


class AmbiguousGeodesicError(ValueError):
    """Two consecutive path points are antipodal."""


class ConvergenceError(RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


def berry_phase_cone(theta_rad: float, branch: str = "aligned") -> float:
    """Berry phase of a spin-1/2 eigenstate carried once around a cone.

    For a counter-clockwise circuit the state aligned with the field picks up
    ``-pi(1 - cos theta)`` and the anti-aligned state the opposite.
    """
    if not 0.0 <= theta_rad <= math.pi:
        raise ValueError("theta must lie in [0, pi]")
    sign = {"aligned": -1.0, "anti": 1.0}[branch]
    return sign * math.pi * (1.0 - math.cos(theta_rad))


def cone_angle(offset_hz: float, nu1_hz: float) -> float:
    if offset_hz == 0 and nu1_hz == 0:
        raise UndefinedDirectionError("zero effective field")
    return math.atan2(nu1_hz, offset_hz)


def _cos_theta(offset, nu1):
    r = np.hypot(offset, nu1)
    if np.any(r == 0):
        raise UndefinedDirectionError("zero effective field")
    return offset / r


def differential_phase(delta_hz, j_hz, nu1_hz):
    """Controlled Berry phase ``gamma_0 - gamma_1`` in radians.

    ``pi * [cos theta_1 - cos theta_0]`` with ``cos theta = offset / |field|``;
    positive when the control spin's coupling pushes line 1 further off
    resonance. Works elementwise on arrays.
    """
    return math.pi * (_cos_theta(delta_hz + j_hz, nu1_hz) - _cos_theta(delta_hz, nu1_hz))


def observed_controlled_phase(delta_hz, j_hz, nu1_hz):
    """Controlled phase seen on the spectrum after the echo sequence, degrees.

    Each of the two blocks imprints the differential phase once on each of
    the two coherence components, giving a factor of four.
    """
    return 4.0 * np.degrees(np.abs(differential_phase(delta_hz, j_hz, nu1_hz)))


def line_phase_deg(offset_hz, nu1_hz):
    """Per-line observed phase ``4 * pi(1 - cos theta)`` in degrees."""
    return 4.0 * np.degrees(math.pi * (1.0 - _cos_theta(offset_hz, nu1_hz)))


def _signed_triangle(a, b, c):
    # Van Oosterom & Strackee
    num = np.einsum("...i,...i->...", a, np.cross(b, c))
    den = (1.0 + np.einsum("...i,...i->...", a, b) + np.einsum("...i,...i->...", b, c)
           + np.einsum("...i,...i->...", c, a))
    return 2.0 * np.arctan2(num, den)


def solid_angle(path) -> float:
    """Signed area enclosed by a closed path on the unit sphere.

    The path is closed implicitly (last point joins the first) and edges are
    geodesics. The area is the sum of the spherical excesses of the fan of
    geodesic triangles from an apex near the path's mean direction, so
    retraced edges cancel exactly. Counter-clockwise circuits seen from
    outside are positive.

    The area is only defined modulo 4 pi: the representative returned is the
    area of the side containing the path's mean direction, so a cone wider
    than a hemisphere yields ``2 pi (1 - cos theta) - 4 pi``.
    """
    p = np.asarray(path, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("path must have shape (n, 3)")
    if len(p) < 3:
        return 0.0
    norms = np.linalg.norm(p, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError("path points must be unit vectors")
    q = np.roll(p, -1, axis=0)
    if np.any(np.einsum("ij,ij->i", p, q) < -1.0 + 1e-12):
        raise AmbiguousGeodesicError("consecutive antipodal points")
    mean = p.mean(axis=0)
    mn = np.linalg.norm(mean)
    apex = mean / mn if mn > 1e-6 else p[0]
    total = float(np.sum(_signed_triangle(apex, p, q)))
    # keep within (-4pi, 4pi)
    return math.remainder(total, 8 * math.pi) if abs(total) >= 4 * math.pi else total


def cone_path(theta_rad: float, n: int, phi0: float = 0.0) -> np.ndarray:
    """``n`` points uniformly spaced (counter-clockwise) on a cone about +z."""
    phi = phi0 + TWO_PI * np.arange(n) / n
    st = math.sin(theta_rad)
    return np.stack([st * np.cos(phi), st * np.sin(phi),
                     np.full(n, math.cos(theta_rad))], axis=1)


def dynamic_phase_adiabatic(slices, offset_hz: float, branch: str = "aligned") -> float:
    """Adiabatic dynamic phase ``-/+ 1/2 sum(omega_eff dt)`` in radians.

    ``aligned`` is the upper eigenstate (``-``). Ideal 180 degree pulses on I
    swap the eigenstates, so the sign flips for every slice after one.
    """
    sign = {"aligned": -1.0, "anti": 1.0}[branch]
    total = 0.0
    for sl in slices:
        if sl.pulse is not None:
            if sl.pulse.target == "I" and abs(sl.pulse.angle_deg) % 360 == 180:
                sign = -sign
            continue
        total += sign * 0.5 * TWO_PI * math.hypot(offset_hz, sl.nu1_hz) * sl.dt_s
    return total


# ---------------------------------------------------------------------------
# controlled-pi optimiser, in units of J

def _bracket(d, v):
    return (d + 1) / math.hypot(d + 1, v) - d / math.hypot(d, v)


def _bracket_dv(d, v):
    return -(d + 1) * v / math.hypot(d + 1, v) ** 3 + d * v / math.hypot(d, v) ** 3


def _bracket_dd(d, v):
    return v * v / math.hypot(d + 1, v) ** 3 - v * v / math.hypot(d, v) ** 3


@dataclass(frozen=True)
class GateOptimum:
    delta_over_j: float
    nu1_over_j: float
    j_hz: float
    target_deg: float
    achieved_controlled_deg: float
    residuals: tuple
    d_controlled_d_nu1: float
    d_controlled_d_delta: float
    iterations: int
    method: str

    @property
    def delta_hz(self) -> float:
        return self.delta_over_j * self.j_hz

    @property
    def nu1_hz(self) -> float:
        return self.nu1_over_j * self.j_hz

    @property
    def bracket(self) -> float:
        return _bracket(self.delta_over_j, self.nu1_over_j)

    def to_dict(self) -> dict:
        return {
            "j_hz": self.j_hz,
            "target_deg": self.target_deg,
            "delta_over_j": self.delta_over_j,
            "nu1_over_j": self.nu1_over_j,
            "delta_hz": self.delta_hz,
            "nu1_hz": self.nu1_hz,
            "bracket": self.bracket,
            "achieved_controlled_deg": self.achieved_controlled_deg,
            "residuals": list(self.residuals),
            "d_controlled_deg_d_nu1_per_j": self.d_controlled_d_nu1,
            "d_controlled_deg_d_delta_per_j": self.d_controlled_d_delta,
            "iterations": self.iterations,
            "method": self.method,
        }


def _residuals(x, target_bracket):
    d, v = x
    return np.array([_bracket(d, v) - target_bracket, _bracket_dv(d, v)])


def _numeric_jacobian(fun, x, h=1e-7):
    f0 = fun(x)
    jac = np.empty((len(f0), len(x)))
    for i in range(len(x)):
        step = h * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        jac[:, i] = (fun(xp) - fun(xm)) / (2 * step)
    return jac


def _newton(target_bracket, x0, tol, max_iter):
    fun = lambda x: _residuals(x, target_bracket)  # noqa: E731
    x = np.array(x0, dtype=float)
    f = fun(x)
    for it in range(1, max_iter + 1):
        jac = _numeric_jacobian(fun, x)
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian", x)
        lam = 1.0
        norm0 = np.linalg.norm(f)
        while lam > 1e-6:
            trial = x + lam * step
            if trial[0] > 0 and trial[1] > 0:
                ft = fun(trial)
                if np.linalg.norm(ft) < norm0 or np.linalg.norm(ft) < tol:
                    break
            lam *= 0.5
        else:
            raise ConvergenceError("line search failed", x)
        x, f = trial, ft
        if np.max(np.abs(f)) < tol:
            return x, it
    raise ConvergenceError("Newton iteration did not converge", x)


def _argmax_nu1(d, hi=1e3):
    # bracket_dv > 0 below the maximum and < 0 above it
    lo_v = 1e-9
    g = lambda v: _bracket_dv(d, v)  # noqa: E731
    if g(lo_v) <= 0:
        raise ConvergenceError("no interior maximum in nu1", (d, lo_v))
    return brentq(g, lo_v, hi, xtol=1e-15, rtol=1e-15)


def _bisection(target_bracket, tol):
    def gap(d):
        return _bracket(d, _argmax_nu1(d)) - target_bracket

    lo, hi = 1e-6, 1.0
    while gap(hi) > 0:
        hi *= 2
        if hi > 1e6:
            raise ConvergenceError("target phase not reachable", None)
    if gap(lo) < 0:
        raise ConvergenceError("target phase not reachable", None)
    d = brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15)
    return np.array([d, _argmax_nu1(d)])


def optimize_pi_gate(j_hz: float, target_deg: float = 180.0, x0=(1.0, 2.0),
                     tol: float = 1e-12, max_iter: int = 50) -> GateOptimum:
    """Find offset and RF amplitude giving ``target_deg`` at the top of the curve.

    Solves ``observed_controlled_phase = target`` together with stationarity
    in ``nu1`` by damped Newton iteration on the dimensionless ratios
    ``delta/J`` and ``nu1/J`` with a finite-difference Jacobian. If Newton
    fails, nested bisection (argmax over ``nu1``, then root in ``delta``) is
    used instead.

    Raises
    ------
    ValueError
        If ``j_hz <= 0``: without coupling there is no conditional phase.
    ConvergenceError
        If neither method converges.
    """
    if not (j_hz > 0 and math.isfinite(j_hz)):
        raise ValueError("j_hz must be > 0")
    if not 0 < target_deg < 720:
        raise ValueError("target_deg must lie in (0, 720)")
    target_bracket = math.radians(target_deg) / (4 * math.pi)
    method = "newton"
    try:
        x, iters = _newton(target_bracket, x0, tol, max_iter)
    except ConvergenceError:
        x, iters, method = _bisection(target_bracket, tol), 0, "bisection"
    res = _residuals(x, target_bracket)
    if np.max(np.abs(res)) > 1e-8:
        raise ConvergenceError("residuals above tolerance", x)
    d, v = float(x[0]), float(x[1])
    scale = 4 * math.degrees(math.pi)
    return GateOptimum(
        delta_over_j=d, nu1_over_j=v, j_hz=float(j_hz), target_deg=float(target_deg),
        achieved_controlled_deg=float(observed_controlled_phase(d, 1.0, v)),
        residuals=tuple(float(r) for r in res),
        d_controlled_d_nu1=scale * _bracket_dv(d, v),
        d_controlled_d_delta=scale * _bracket_dd(d, v),
        iterations=iters, method=method,
    )
